//! Distributed schedule computation from the final priority aggregate.

use crate::error::{Error, Result};
use crate::netsim::Aggregate;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grant {
    pub agent: usize,
    pub priority: u32,
}

/// Agents allowed to send a control message in one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schedule {
    pub round: u64,
    pub grants: Vec<Grant>,
}

impl Schedule {
    pub fn empty(round: u64) -> Self {
        Self {
            round,
            grants: Vec::new(),
        }
    }

    pub fn from_agents(round: u64, agents: impl IntoIterator<Item = usize>) -> Self {
        Self {
            round,
            grants: agents.into_iter().map(|agent| Grant { agent, priority: 0 }).collect(),
        }
    }

    pub fn agents(&self) -> Vec<usize> {
        self.grants.iter().map(|g| g.agent).collect()
    }

    pub fn is_granted(&self, agent: usize) -> bool {
        self.grants.iter().any(|g| g.agent == agent)
    }
}

/// Grants the aggregate's top-`M_C` agents whose priority is strictly above `p_delta_q`.
pub fn compute_schedule(aggregate: &Aggregate, m_c: usize, p_delta_q: u32, round: u64) -> Result<Schedule> {
    if !aggregate.is_complete() {
        return Err(Error::Contract {
            round,
            agent: aggregate.contributed.iter().position(|c| !c).unwrap_or(0),
            message: "aggregate is missing contributions".into(),
        });
    }
    let grants = aggregate
        .top
        .iter()
        .take(m_c)
        .filter(|(_, p)| *p > p_delta_q)
        .map(|&(agent, priority)| Grant { agent, priority })
        .collect();
    Ok(Schedule { round, grants })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Transmit,
    /// Not granted this round.
    Idle,
    /// Granted, but the final aggregate of the previous round is missing.
    NoAggregate,
    /// Granted, but the instantaneous priority no longer clears the threshold;
    /// the slot is announced as unused.
    SkipMarked,
}

impl Decision {
    pub fn kappa(self) -> bool {
        matches!(self, Decision::Transmit)
    }

    pub fn marks_unused(self) -> bool {
        matches!(self, Decision::SkipMarked)
    }
}

/// Transmit decision of one agent for the current round.
pub fn apply_schedule(
    agent: usize,
    schedule: &Schedule,
    has_final_aggregate: bool,
    p0_q: u32,
    p_delta_q: u32,
) -> Decision {
    if !schedule.is_granted(agent) {
        Decision::Idle
    } else if !has_final_aggregate {
        Decision::NoAggregate
    } else if p0_q > p_delta_q {
        Decision::Transmit
    } else {
        Decision::SkipMarked
    }
}
