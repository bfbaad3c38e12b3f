//! Stability audit of a run: boundedness of the state second moment, the
//! one-step drift bound per agent class, and the K-window case partition.

use serde::Serialize;

use crate::error::Result;
use crate::linalg::Vector;
use crate::stability::{
    c2_spot_check, drift_bound_check, horizon_k, msb_monitor, partition_cases, whitened, CaseCounts, DriftBoundReport,
    MsbReport, SpotCheck, Verdict,
};

use super::sim::Scenario;
use super::trace::TraceRecord;

#[derive(Debug, Clone, Serialize)]
pub struct ClassDriftBound {
    pub class: String,
    /// Lowest agent id of the class; its closed loop is the one checked.
    pub agent: usize,
    pub report: DriftBoundReport,
}

#[derive(Debug, Clone, Serialize)]
pub struct CasePartition {
    pub k: usize,
    pub counts: CaseCounts,
    pub per_agent: Vec<CaseCounts>,
    /// Every agent-window classified exactly once.
    pub exhaustive: bool,
    pub spot_checks: Vec<SpotCheck>,
    /// Pooled over agents: `mean(d² − bound) ≤ 3·SE`.
    pub c2_pass: bool,
    pub v_mean: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerifyReport {
    pub msb: Option<MsbReport>,
    /// Set when the trace was too short for a verdict.
    pub msb_error: Option<String>,
    pub drift_bound: Vec<ClassDriftBound>,
    pub cases: CasePartition,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct VerifyOptions {
    pub drift_samples: usize,
    pub drift_points: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            drift_samples: 20_000,
            drift_points: 10,
            seed: 1,
        }
    }
}

/// Error grid along the saturation bounds, from zero to three times `ê_max`,
/// with alternating signs so the points are not collinear.
pub fn drift_bound_grid(e_max: &Vector<f64>, points: usize) -> Vec<Vector<f64>> {
    (0..points)
        .map(|p| {
            let scale = 3.0 * p as f64 / (points.max(2) - 1) as f64;
            Vector::from_iterator(
                e_max.len(),
                e_max.iter().enumerate().map(|(c, v)| {
                    let sign = if (c + p) % 2 == 0 { 1.0 } else { -1.0 };
                    sign * scale * v
                }),
            )
        })
        .collect()
}

pub fn verify_run(scenario: &Scenario, records: &[TraceRecord], options: VerifyOptions) -> Result<VerifyReport> {
    let cfg = &scenario.config;
    let agents = cfg.agents();

    let sq: Vec<f64> = records.iter().map(TraceRecord::sq_norm).collect();
    let (msb, msb_error) = match msb_monitor(&sq, cfg.metrics.msb_window, cfg.metrics.msb_growth) {
        Ok(r) => (Some(r), None),
        Err(e @ crate::Error::TraceTooShort { .. }) => (None, Some(e.to_string())),
        Err(e) => return Err(e),
    };

    let grid = drift_bound_grid(&cfg.e_max(), options.drift_points);
    let mut drift_bound = Vec::new();
    for class in cfg.classes.keys() {
        let Some(agent) = cfg.roster.iter().position(|c| c == class) else {
            continue;
        };
        let report = drift_bound_check(
            scenario.predictor.closed_loop(agent),
            &scenario.models[agent].sigma_v,
            &grid,
            options.drift_samples,
            options.seed,
        )?;
        drift_bound.push(ClassDriftBound {
            class: class.clone(),
            agent,
            report,
        });
    }

    let k = horizon_k(agents, scenario.m_c());
    let mut counts = CaseCounts::default();
    let mut per_agent = Vec::with_capacity(agents);
    let mut spot_checks = Vec::with_capacity(agents);
    let v: Vec<f64> = records
        .iter()
        .map(|r| r.agents.iter().map(|a| a.d2_self + a.d2_cross).sum())
        .collect();
    let (mut num, mut var_num, mut windows) = (0.0, 0.0, 0usize);
    for i in 0..agents {
        let d2: Vec<f64> = records.iter().map(|r| r.agents[i].d2_self).collect();
        // a message nobody received does not reset anyone's estimate
        let sent: Vec<bool> = records
            .iter()
            .map(|r| r.agents[i].sent && (r.agents[i].lost as usize) < agents.saturating_sub(1))
            .collect();
        let delta = scenario.stats[i].delta_now;
        let probe = partition_cases(
            std::slice::from_ref(&d2),
            std::slice::from_ref(&sent),
            k,
            delta,
            Vec::new(),
        )?;
        let c = probe.counts;
        counts.c1 += c.c1;
        counts.c2 += c.c2;
        counts.c3a += c.c3a;
        counts.c3b += c.c3b;
        per_agent.push(c);
        let w = whitened(scenario.predictor.closed_loop(i), &scenario.models[i].sigma_v)?;
        let spot = c2_spot_check(&d2, &sent, k, delta, &w);
        if spot.windows >= 2 {
            let n = spot.windows as f64;
            num += spot.mean_excess * n;
            var_num += spot.standard_error.powi(2) * n * n;
            windows += spot.windows;
        }
        spot_checks.push(spot);
    }
    let expected = agents * records.len().saturating_sub(k);
    let c2_pass = windows == 0 || num / windows as f64 <= 3.0 * var_num.sqrt() / windows as f64;
    let cases = CasePartition {
        k,
        exhaustive: counts.total() == expected,
        counts,
        per_agent,
        spot_checks,
        c2_pass,
        v_mean: v.iter().sum::<f64>() / v.len().max(1) as f64,
        v_max: v.iter().cloned().fold(0.0, f64::max),
    };

    let passed = msb.as_ref().is_none_or(|m| m.bounded)
        && drift_bound.iter().all(|l| l.report.verdict != Verdict::Fail)
        && cases.exhaustive
        && cases.c2_pass;
    Ok(VerifyReport {
        msb,
        msb_error,
        drift_bound,
        cases,
        passed,
    })
}

impl VerifyReport {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        match (&self.msb, &self.msb_error) {
            (Some(m), _) => out.push_str(&format!(
                "msb: window {} sup {:.6e} first half {:.6e} second half {:.6e} growth {} -> {}\n",
                m.window,
                m.sup,
                m.sup_first_half,
                m.sup_second_half,
                m.growth,
                if m.bounded { "bounded" } else { "UNBOUNDED" }
            )),
            (None, Some(e)) => out.push_str(&format!("msb: no verdict ({e})\n")),
            (None, None) => {}
        }
        for l in &self.drift_bound {
            let worst = l.report.points.iter().map(|p| p.margin).fold(f64::INFINITY, f64::min);
            out.push_str(&format!(
                "drift bound [{}] agent {}: |A|^2 = {:.4} samples {} min margin {:.4e} -> {:?}\n",
                l.class, l.agent, l.report.norm_sq, l.report.samples, worst, l.report.verdict
            ));
        }
        let c = &self.cases;
        out.push_str(&format!(
            "cases (K = {}): c1 {} c2 {} c3a {} c3b {} exhaustive {}\n",
            c.k, c.counts.c1, c.counts.c2, c.counts.c3a, c.counts.c3b, c.exhaustive
        ));
        out.push_str(&format!(
            "c2 bound spot check: {} -> {}\nV: mean {:.4e} max {:.4e}\n",
            c.spot_checks.iter().map(|s| s.windows).sum::<usize>(),
            if c.c2_pass { "pass" } else { "FAIL" },
            c.v_mean,
            c.v_max
        ));
        out.push_str(if self.passed {
            "verdict: PASS\n"
        } else {
            "verdict: FAIL\n"
        });
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spans_zero_to_three_bounds() {
        let e = Vector::from_column_slice(&[1.0, 2.0]);
        let g = drift_bound_grid(&e, 4);
        assert_eq!(g.len(), 4);
        assert_eq!(g[0], Vector::from_column_slice(&[0.0, -0.0]));
        assert_eq!(g[3], Vector::from_column_slice(&[-3.0, 6.0]));
    }
}
