//! Scenario orchestration, baselines, metrics and persistence.

pub mod compare;
pub mod config;
pub mod gains_io;
pub mod metrics;
pub mod plot;
pub mod sim;
pub mod trace;
pub mod verify;

pub use compare::{compare_modes, ComparisonReport};
pub use config::ScenarioConfig;
pub use metrics::{evaluate_cost, Summary};
pub use sim::{run_scenario, synthesize, RunOutput, Scenario};
pub use trace::TraceRecord;

use crate::scheduler::Schedule;

/// Round-robin grants `(round·M_C + j) mod N` for `j < M_C`.
pub fn periodic_baseline_schedule(n: usize, m_c: usize, round: u64) -> Schedule {
    let slots = m_c.min(n) as u64;
    let base = round.wrapping_mul(m_c as u64);
    Schedule::from_agents(round, (0..slots).map(|j| ((base + j) % n as u64) as usize))
}
