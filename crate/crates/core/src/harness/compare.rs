//! Matched-seed comparison of predictive triggering against the periodic baseline.

use rayon::prelude::*;
use serde::Serialize;

use crate::control::GainSet;
use crate::error::{Error, Result};
use crate::netsim::Mode;

use super::config::ScenarioConfig;
use super::metrics::Summary;
use super::sim::{synthesize, Scenario};

#[derive(Debug, Clone, Serialize)]
pub struct SeedComparison {
    pub seed: u64,
    pub predictive: Summary,
    pub periodic: Summary,
    /// `(predictive − periodic) / periodic` of the pre-disturbance mean cost.
    pub rel_pre: Option<f64>,
    /// Same for the disturbed phase.
    pub rel_during: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Dispersion {
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

impl Dispersion {
    fn of(xs: &[f64]) -> Option<Self> {
        if xs.is_empty() {
            return None;
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = if xs.len() > 1 {
            xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Some(Self {
            mean,
            std: var.sqrt(),
            min: xs.iter().cloned().fold(f64::INFINITY, f64::min),
            max: xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
        })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub seeds: Vec<u64>,
    pub runs: Vec<SeedComparison>,
    pub rel_pre: Option<Dispersion>,
    pub rel_during: Option<Dispersion>,
}

fn relative(pred: Option<f64>, per: Option<f64>) -> Option<f64> {
    match (pred, per) {
        (Some(a), Some(b)) if b != 0.0 => Some((a - b) / b),
        (Some(a), Some(b)) if a == b => Some(0.0),
        _ => None,
    }
}

/// Runs both modes for every seed, in parallel, sharing one controller synthesis.
pub fn compare_modes(base: &ScenarioConfig, seeds: &[u64]) -> Result<ComparisonReport> {
    let gains = synthesize(base)?;
    compare_modes_with_gains(base, seeds, &gains)
}

pub fn compare_modes_with_gains(
    base: &ScenarioConfig,
    seeds: &[u64],
    gains: &GainSet<f64>,
) -> Result<ComparisonReport> {
    if seeds.len() < 3 {
        return Err(Error::Config("a mode comparison needs at least 3 seeds".into()));
    }
    let jobs: Vec<(u64, Mode)> = seeds
        .iter()
        .flat_map(|&s| [(s, Mode::Predictive), (s, Mode::Periodic)])
        .collect();
    let summaries = jobs
        .par_iter()
        .map(|&(seed, mode)| {
            let config = base.with_seed(seed).with_mode(mode);
            Scenario::with_gains(config, gains.clone())?
                .run()
                .map(|out| out.summary)
        })
        .collect::<Result<Vec<_>>>()?;
    let runs: Vec<SeedComparison> = seeds
        .iter()
        .zip(summaries.chunks_exact(2))
        .map(|(&seed, pair)| {
            let (predictive, periodic) = (pair[0].clone(), pair[1].clone());
            SeedComparison {
                seed,
                rel_pre: relative(predictive.mean_cost_pre, periodic.mean_cost_pre),
                rel_during: relative(predictive.mean_cost_during, periodic.mean_cost_during),
                predictive,
                periodic,
            }
        })
        .collect();
    let collect = |f: fn(&SeedComparison) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(f).collect() };
    Ok(ComparisonReport {
        seeds: seeds.to_vec(),
        rel_pre: Dispersion::of(&collect(|r| r.rel_pre)),
        rel_during: Dispersion::of(&collect(|r| r.rel_during)),
        runs,
    })
}

impl ComparisonReport {
    pub fn to_text(&self) -> String {
        let mut out =
            String::from("seed  pre(pred)     pre(per)      rel_pre   during(pred)  during(per)   rel_during\n");
        let f = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
        let pct = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{:+.2}%", 100.0 * v));
        for r in &self.runs {
            out.push_str(&format!(
                "{:<5} {:<13} {:<13} {:<9} {:<13} {:<13} {}\n",
                r.seed,
                f(r.predictive.mean_cost_pre),
                f(r.periodic.mean_cost_pre),
                pct(r.rel_pre),
                f(r.predictive.mean_cost_during),
                f(r.periodic.mean_cost_during),
                pct(r.rel_during),
            ));
        }
        for (name, d) in [("pre", &self.rel_pre), ("during", &self.rel_during)] {
            if let Some(d) = d {
                out.push_str(&format!(
                    "{name}: mean {:+.2}% std {:.2}% range [{:+.2}%, {:+.2}%]\n",
                    100.0 * d.mean,
                    100.0 * d.std,
                    100.0 * d.min,
                    100.0 * d.max
                ));
            }
        }
        out
    }
}
