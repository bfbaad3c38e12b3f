//! Cost evaluation and the run summary, both computed from trace records only.

use serde::{Deserialize, Serialize};

use crate::control::CostSpec;
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::stability::msb_monitor;

use super::trace::TraceRecord;

fn quad(m: &Matrix<f64>, v: &[f64]) -> f64 {
    let v = Vector::from_column_slice(v);
    v.dot(&(m * &v))
}

/// `Σ_i xᵢᵀQᵢxᵢ + uᵢᵀRᵢuᵢ + Σ_{i<j} (xᵢ−xⱼ)ᵀQ_sync(xᵢ−xⱼ)`.
pub fn instantaneous_cost(x: &[Vec<f64>], u: &[Vec<f64>], cost: &CostSpec<f64>) -> Result<f64> {
    if x.len() != cost.agents() || u.len() != cost.agents() {
        return Err(Error::dimension("instantaneous_cost agents", cost.agents(), x.len()));
    }
    let mut total = 0.0;
    for i in 0..x.len() {
        total += quad(&cost.q[i], &x[i]) + quad(&cost.r[i], &u[i]);
        for j in i + 1..x.len() {
            let diff: Vec<f64> = x[i].iter().zip(&x[j]).map(|(a, b)| a - b).collect();
            total += quad(&cost.q_sync, &diff);
        }
    }
    Ok(total)
}

/// Trailing mean over the last `window` entries (fewer at the start).
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (k, v) in series.iter().enumerate() {
        sum += v;
        if k >= window {
            sum -= series[k - window];
        }
        out.push(sum / (k + 1).min(window) as f64);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CostSeries {
    pub per_round: Vec<f64>,
    pub moving_average: Vec<f64>,
    pub mean: f64,
}

pub fn evaluate_cost(records: &[TraceRecord], cost: &CostSpec<f64>, window: usize) -> Result<CostSeries> {
    if window == 0 {
        return Err(Error::Config("cost window must be positive".into()));
    }
    let per_round = records
        .iter()
        .map(|r| {
            let x: Vec<Vec<f64>> = r.agents.iter().map(|a| a.x.clone()).collect();
            let u: Vec<Vec<f64>> = r.agents.iter().map(|a| a.u.clone()).collect();
            instantaneous_cost(&x, &u, cost)
        })
        .collect::<Result<Vec<_>>>()?;
    let mean = mean(&per_round);
    Ok(CostSeries {
        moving_average: moving_average(&per_round, window),
        per_round,
        mean,
    })
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        f64::NAN
    } else {
        xs.iter().sum::<f64>() / xs.len() as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MsbSummary {
    pub window: usize,
    pub sup: f64,
    pub sup_first_half: f64,
    pub sup_second_half: f64,
    pub bounded: bool,
}

/// Everything reported about a run. Built from trace records alone, plus the
/// cost weights and phase boundary from the scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub rounds: usize,
    pub agents: usize,
    pub m_c: usize,
    /// First round of the disturbed phase (equals `rounds` without disturbance).
    pub phase_split: u64,
    pub mean_cost: f64,
    pub mean_cost_pre: Option<f64>,
    pub mean_cost_during: Option<f64>,
    pub max_cost_moving_average: f64,
    pub grants: Vec<usize>,
    pub grants_during: Vec<usize>,
    pub transmissions: Vec<usize>,
    pub skip_marks: usize,
    pub used: usize,
    pub skipped: usize,
    pub unassigned: usize,
    pub lost_messages: usize,
    pub max_sent_per_round: usize,
    /// Rounds where `used + skipped + unassigned ≠ M_C`.
    pub conservation_violations: usize,
    /// Transmissions by agents that lacked the final aggregate.
    pub sent_without_aggregate: usize,
    pub mean_realized_slots: f64,
    pub mean_d2_self: Vec<f64>,
    /// Per agent, counts of each quantised look-ahead priority level.
    pub priority_histogram: Vec<Vec<usize>>,
    pub msb: Option<MsbSummary>,
}

impl Summary {
    pub fn from_records(
        records: &[TraceRecord],
        cost: &CostSpec<f64>,
        phase_split: u64,
        cost_window: usize,
        msb_window: usize,
        msb_growth: f64,
    ) -> Result<Self> {
        let first = records.first().ok_or(Error::TraceTooShort { len: 0, needed: 1 })?;
        let agents = first.agents.len();
        let m_c = first.m_c();
        let series = evaluate_cost(records, cost, cost_window)?;
        let split = (phase_split as usize).min(records.len());
        let during = &series.per_round[split..];
        let mut grants = vec![0; agents];
        let mut grants_during = vec![0; agents];
        let mut transmissions = vec![0; agents];
        let mut d2_sum = vec![0.0; agents];
        let levels = records
            .iter()
            .flat_map(|r| r.agents.iter().map(|a| a.q_h))
            .max()
            .unwrap_or(0) as usize
            + 1;
        let mut histogram = vec![vec![0; levels.max(16)]; agents];
        let (mut skip_marks, mut used, mut skipped, mut unassigned, mut lost) = (0, 0, 0, 0, 0);
        let (mut max_sent, mut violations, mut without_agg) = (0, 0, 0);
        let mut slots = 0.0;
        for r in records {
            if r.agents.len() != agents {
                return Err(Error::Parse(format!("round {} has {} agents", r.round, r.agents.len())));
            }
            used += r.used;
            skipped += r.skipped;
            unassigned += r.unassigned;
            slots += r.realized_slots;
            if r.m_c() != m_c {
                violations += 1;
            }
            let mut sent = 0;
            for (i, a) in r.agents.iter().enumerate() {
                if a.granted {
                    grants[i] += 1;
                    if r.round >= phase_split {
                        grants_during[i] += 1;
                    }
                }
                if a.sent {
                    transmissions[i] += 1;
                    sent += 1;
                    if !a.has_agg {
                        without_agg += 1;
                    }
                }
                skip_marks += a.skip as usize;
                lost += a.lost as usize;
                d2_sum[i] += a.d2_self;
                histogram[i][a.q_h as usize] += 1;
            }
            max_sent = max_sent.max(sent);
        }
        let count = records.len() as f64;
        let msb = if records.len() >= 10 * msb_window {
            let norms: Vec<f64> = records.iter().map(TraceRecord::sq_norm).collect();
            let report = msb_monitor(&norms, msb_window, msb_growth)?;
            Some(MsbSummary {
                window: msb_window,
                sup: report.sup,
                sup_first_half: report.sup_first_half,
                sup_second_half: report.sup_second_half,
                bounded: report.bounded,
            })
        } else {
            None
        };
        Ok(Summary {
            rounds: records.len(),
            agents,
            m_c,
            phase_split,
            mean_cost: series.mean,
            mean_cost_pre: (split > 0).then(|| mean(&series.per_round[..split])),
            mean_cost_during: (!during.is_empty()).then(|| mean(during)),
            max_cost_moving_average: series.moving_average.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            grants,
            grants_during,
            transmissions,
            skip_marks,
            used,
            skipped,
            unassigned,
            lost_messages: lost,
            max_sent_per_round: max_sent,
            conservation_violations: violations,
            sent_without_aggregate: without_agg,
            mean_realized_slots: slots / count,
            mean_d2_self: d2_sum.iter().map(|s| s / count).collect(),
            priority_histogram: histogram,
            msb,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serialises")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("summary serialises")
    }

    /// Field names whose JSON values differ from `stored`. Floats are written
    /// in shortest round-trip form, so equal values mean bit-identical numbers;
    /// non-finite numbers appear as `null` on both sides.
    pub fn differences(&self, stored: &serde_json::Value) -> Vec<String> {
        let serde_json::Value::Object(ours) = self.to_value() else {
            unreachable!("summary is a struct");
        };
        let theirs = stored.as_object();
        let mut out: Vec<String> = ours
            .iter()
            .filter(|(k, v)| theirs.and_then(|t| t.get(*k)) != Some(v))
            .map(|(k, _)| k.clone())
            .collect();
        if let Some(t) = theirs {
            out.extend(t.keys().filter(|k| !ours.contains_key(*k)).cloned());
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::trace::AgentRound;

    fn spec(agents: usize, q: f64, q_sync0: f64) -> CostSpec<f64> {
        let mut sync = Matrix::zeros(4, 4);
        sync[(0, 0)] = q_sync0;
        CostSpec {
            q: vec![Matrix::identity(4, 4) * q; agents],
            q_sync: sync,
            r: vec![Matrix::from_element(1, 1, 0.1); agents],
        }
    }

    #[test]
    fn zero_state_costs_nothing() {
        let c = instantaneous_cost(&vec![vec![0.0; 4]; 3], &vec![vec![0.0]; 3], &spec(3, 1.0, 10.0)).unwrap();
        assert_eq!(c, 0.0);
    }

    #[test]
    fn sync_term_example() {
        let x = vec![vec![1.0, 0.0, 0.0, 0.0], vec![0.0; 4]];
        let c = instantaneous_cost(&x, &[vec![0.0], vec![0.0]], &spec(2, 0.0, 10.0)).unwrap();
        assert_eq!(c, 10.0);
    }

    #[test]
    fn full_cost_by_hand() {
        let x = vec![vec![1.0, 2.0, 0.0, 0.0], vec![0.5, 0.0, 0.0, 1.0]];
        let u = vec![vec![2.0], vec![-1.0]];
        // Q = I: 5 + 1.25; R: 0.4 + 0.1; sync: 10·0.25
        let c = instantaneous_cost(&x, &u, &spec(2, 1.0, 10.0)).unwrap();
        assert!((c - (5.0 + 1.25 + 0.4 + 0.1 + 2.5)).abs() < 1e-12);
    }

    #[test]
    fn moving_average_matches_cumulative_sums() {
        let series: Vec<f64> = (0..500).map(|k| ((k * 7919) % 101) as f64 * 0.37).collect();
        let avg = moving_average(&series, 50);
        let mut cum = vec![0.0];
        for v in &series {
            cum.push(cum.last().unwrap() + v);
        }
        for k in 0..series.len() {
            let lo = (k + 1).saturating_sub(50);
            let expect = (cum[k + 1] - cum[lo]) / (k + 1 - lo) as f64;
            assert!((avg[k] - expect).abs() < 1e-9, "k={k}");
        }
    }

    fn record(round: u64, x0: f64, granted: bool, sent: bool, has_agg: bool) -> TraceRecord {
        let agent = |x: f64| AgentRound {
            x: vec![x, 0.0, 0.0, 0.0],
            u: vec![0.0],
            e: vec![0.0; 4],
            d2_self: 1.0,
            d2_cross: 0.0,
            p_h: 0.0,
            p_0: 0.0,
            q_h: 3,
            q_0: 0,
            granted,
            sent,
            skip: false,
            has_agg,
            lost: 0,
        };
        TraceRecord {
            round,
            cost: 0.0,
            realized_slots: 10.0,
            used: sent as usize,
            skipped: (granted && !sent) as usize,
            unassigned: 2 - granted as usize,
            agents: vec![agent(x0), agent(0.0)],
        }
    }

    #[test]
    fn summary_counts() {
        let records = vec![
            record(0, 1.0, true, true, true),
            record(1, 0.0, true, false, false),
            record(2, 0.0, false, false, true),
            record(3, 2.0, true, true, true),
        ];
        let s = Summary::from_records(&records, &spec(2, 0.0, 1.0), 2, 2, 1000, 1.2).unwrap();
        assert_eq!(s.m_c, 2);
        // both agents share the flags
        assert_eq!(s.grants, vec![3, 3]);
        assert_eq!(s.grants_during, vec![1, 1]);
        assert_eq!(s.transmissions, vec![2, 2]);
        assert_eq!(s.max_sent_per_round, 2);
        assert_eq!(s.sent_without_aggregate, 0);
        assert_eq!(s.conservation_violations, 0);
        assert_eq!(s.mean_cost_pre, Some(0.5));
        assert_eq!(s.mean_cost_during, Some(2.0));
        assert_eq!(s.priority_histogram[0][3], 4);
        assert!(s.msb.is_none());
        assert!(s.differences(&s.to_value()).is_empty());
        let mut other = s.clone();
        other.grants[1] = 0;
        assert_eq!(s.differences(&other.to_value()), vec!["grants".to_string()]);
        let back = Summary::from_json(&s.to_json()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn json_text_roundtrip_is_exact() {
        let records: Vec<TraceRecord> = (0..7)
            .map(|k| record(k, 0.1 * k as f64 + 1.0 / 3.0, true, k % 2 == 0, true))
            .collect();
        let s = Summary::from_records(&records, &spec(2, 0.7, 1.3), 3, 3, 1000, 1.2).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(&s.to_json()).unwrap();
        assert!(s.differences(&parsed).is_empty(), "{:?}", s.differences(&parsed));
    }
}
