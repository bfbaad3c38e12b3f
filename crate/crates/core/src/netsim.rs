//! Round-level model of the many-to-all exchange and its bandwidth arithmetic.
//!
//! Each round carries `M_A` application and up to `M_C` control messages.
//! Control messages reach each receiver independently with probability
//! `1 − p_loss`; the priority aggregate travels in every packet header and is
//! never lost, but an agent may fail to hold the *final* aggregate with
//! probability `q_noagg`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Domain};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Predictive,
    Periodic,
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Predictive => "predictive",
            Mode::Periodic => "periodic",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "predictive" => Ok(Mode::Predictive),
            "periodic" => Ok(Mode::Periodic),
            other => Err(Error::Config(format!("unknown mode `{other}`"))),
        }
    }
}

fn ceil_log2(n: usize) -> usize {
    if n <= 1 {
        0
    } else {
        (usize::BITS - (n - 1).leading_zeros()) as usize
    }
}

/// Size of the full-list encoding: all `N` priorities.
pub fn aggregate_size_full(n: usize, w_p: usize) -> usize {
    (n * w_p).div_ceil(8)
}

/// Size of the top-list encoding: `M_C` priorities with ids plus one contribution bit per agent.
pub fn aggregate_size_top(n: usize, w_p: usize, m_c: usize) -> usize {
    (m_c * w_p + m_c * ceil_log2(n) + n).div_ceil(8)
}

/// Bytes of the priority aggregate; the more compact of the two encodings.
pub fn aggregate_size(n: usize, w_p: usize, m_c: usize) -> usize {
    aggregate_size_full(n, w_p).min(aggregate_size_top(n, w_p, m_c))
}

/// Timing constants of one communication round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandwidthParams {
    pub m_a: usize,
    /// Base slot length without aggregate [µs].
    pub slot_us: f64,
    pub slots_per_message: f64,
    /// Communication time available per update interval [µs].
    pub round_budget_us: f64,
    /// Air time per header byte [µs].
    #[serde(default = "default_byte_us")]
    pub byte_us: f64,
}

fn default_byte_us() -> f64 {
    4.0
}

impl BandwidthParams {
    pub fn reference(m_a: usize) -> Self {
        Self {
            m_a,
            slot_us: 380.0,
            slots_per_message: 9.5,
            round_budget_us: 76_000.0,
            byte_us: 4.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Bandwidth {
    pub m_c: usize,
    pub aggregate_bytes: usize,
    pub slot_us: f64,
    pub round_time_us: f64,
}

fn round_time(params: &BandwidthParams, m_c: usize, slot_us: f64) -> f64 {
    (params.m_a + m_c) as f64 * params.slots_per_message * slot_us
}

/// Largest number of control messages per round that fits the time budget.
///
/// In predictive mode the slot grows with the aggregate header, whose size
/// depends on the candidate `M_C`, so candidates are checked one by one
/// (capped at `N`, beyond which the top-list encoding is meaningless).
pub fn control_bandwidth(params: &BandwidthParams, n: usize, w_p: usize, mode: Mode) -> Result<Bandwidth> {
    let valid = [params.slot_us, params.slots_per_message, params.round_budget_us]
        .iter()
        .all(|v| v.is_finite() && *v > 0.0);
    if !valid || !(params.byte_us.is_finite() && params.byte_us >= 0.0) {
        return Err(Error::Config("bandwidth parameters must be positive".into()));
    }
    if n == 0 || w_p == 0 {
        return Err(Error::Config("need at least one agent and one priority bit".into()));
    }
    let evaluate = |m_c: usize| -> Bandwidth {
        let aggregate_bytes = match mode {
            Mode::Periodic => 0,
            Mode::Predictive => aggregate_size(n, w_p, m_c),
        };
        let slot_us = params.slot_us + params.byte_us * aggregate_bytes as f64;
        Bandwidth {
            m_c,
            aggregate_bytes,
            slot_us,
            round_time_us: round_time(params, m_c, slot_us),
        }
    };
    let fits = |b: &Bandwidth| b.round_time_us <= params.round_budget_us;
    let first = evaluate(1);
    if !fits(&first) {
        return Err(Error::Config(format!(
            "round budget of {} µs cannot carry a single control message ({} µs needed)",
            params.round_budget_us, first.round_time_us
        )));
    }
    let cap = match mode {
        Mode::Predictive => n,
        Mode::Periodic => usize::MAX,
    };
    let mut best = first;
    let mut m_c = 1;
    while m_c < cap {
        let candidate = evaluate(m_c + 1);
        if !fits(&candidate) {
            break;
        }
        best = candidate;
        m_c += 1;
    }
    Ok(best)
}

/// Runtime parameters of the round engine.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    pub n_agents: usize,
    pub m_a: usize,
    pub m_c: usize,
    pub p_loss: f64,
    pub q_noagg: f64,
    pub w_p: u32,
    pub slots_per_message: f64,
    /// Slots spent on the round even if no message is sent.
    pub aggregate_floor_slots: f64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m_c < 1 {
            return Err(Error::Config("M_C must be at least 1".into()));
        }
        if self.n_agents < 1 {
            return Err(Error::Config("need at least one agent".into()));
        }
        if !(0.0..1.0).contains(&self.p_loss) {
            return Err(Error::Config("p_loss must lie in [0, 1)".into()));
        }
        if !(0.0..1.0).contains(&self.q_noagg) {
            return Err(Error::Config("q_noagg must lie in [0, 1)".into()));
        }
        if !(1..=16).contains(&self.w_p) {
            return Err(Error::Config("W_P must be between 1 and 16 bits".into()));
        }
        Ok(())
    }

    pub fn total_messages(&self) -> usize {
        self.m_a + self.m_c
    }
}

/// The final priority aggregate of one round.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aggregate {
    /// The `M_C` highest `(agent, quantised priority)` pairs, best first.
    pub top: Vec<(usize, u32)>,
    pub contributed: Vec<bool>,
}

impl Aggregate {
    pub fn is_complete(&self) -> bool {
        self.contributed.iter().all(|&c| c)
    }
}

/// Collects every agent's quantised priority into the final aggregate.
///
/// Ties on value go to the lower agent id.
pub fn priority_exchange(priorities: &[u32], m_c: usize) -> Aggregate {
    let mut order: Vec<usize> = (0..priorities.len()).collect();
    order.sort_by(|&a, &b| priorities[b].cmp(&priorities[a]).then(a.cmp(&b)));
    Aggregate {
        top: order.into_iter().take(m_c).map(|i| (i, priorities[i])).collect(),
        contributed: vec![true; priorities.len()],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundOutcome {
    pub round: u64,
    /// Agents granted a control message this round.
    pub schedule: Vec<usize>,
    /// Agents that actually sent.
    pub senders: Vec<usize>,
    /// `delivered[s][r]`: message of `senders[s]` reached agent `r` (own entry true).
    pub delivered: Vec<Vec<bool>>,
    /// Granted agents whose slot went unused.
    pub unused: Vec<usize>,
    /// Per-agent availability of this round's final aggregate.
    pub has_aggregate: Vec<bool>,
    pub realized_slots: f64,
}

impl RoundOutcome {
    pub fn used(&self) -> usize {
        self.senders.len()
    }

    pub fn skipped(&self) -> usize {
        self.unused.len()
    }

    pub fn unassigned(&self, m_c: usize) -> usize {
        m_c - self.schedule.len()
    }

    pub fn delivered_to(&self, sender: usize, receiver: usize) -> Option<bool> {
        self.senders
            .iter()
            .position(|&s| s == sender)
            .map(|idx| self.delivered[idx][receiver])
    }
}

/// Plays one round: draws per-receiver deliveries for every sending agent and
/// per-agent availability of the final aggregate.
pub fn execute_round(
    config: &NetworkConfig,
    schedule: &[usize],
    transmit: &[bool],
    seed: u64,
    round: u64,
) -> Result<RoundOutcome> {
    if schedule.len() > config.m_c {
        return Err(Error::Contract {
            round,
            agent: schedule[config.m_c],
            message: format!(
                "schedule has {} entries for {} control messages",
                schedule.len(),
                config.m_c
            ),
        });
    }
    if transmit.len() != schedule.len() {
        return Err(Error::dimension(
            "execute_round transmit flags",
            schedule.len(),
            transmit.len(),
        ));
    }
    let n = config.n_agents;
    let mut senders = Vec::new();
    let mut unused = Vec::new();
    let mut delivered = Vec::new();
    for (&agent, &send) in schedule.iter().zip(transmit) {
        if !send {
            unused.push(agent);
            continue;
        }
        let mut rng = stream(seed, Domain::Delivery, agent as u64, round);
        let flags = (0..n)
            .map(|r| r == agent || rng.random::<f64>() >= config.p_loss)
            .collect();
        senders.push(agent);
        delivered.push(flags);
    }
    let mut rng = stream(seed, Domain::Aggregate, 0, round);
    let has_aggregate = (0..n).map(|_| rng.random::<f64>() >= config.q_noagg).collect();
    let realized_slots = config.slots_per_message * (config.m_a + senders.len()) as f64 + config.aggregate_floor_slots;
    Ok(RoundOutcome {
        round,
        schedule: schedule.to_vec(),
        senders,
        delivered,
        unused,
        has_aggregate,
        realized_slots,
    })
}
