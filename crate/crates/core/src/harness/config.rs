//! Scenario configuration (TOML).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::control::CostSpec;
use crate::dynamics::{make_cartpole_model, CartPoleParams, DisturbanceSpec, LtiModel};
use crate::error::{Error, Result};
use crate::linalg::{Matrix, Vector};
use crate::netsim::{BandwidthParams, Mode};
use crate::triggering::PriorityMeasure;

pub const SCHEMA_VERSION: u32 = 1;

/// The reference scenario shipped with the crate.
pub const REFERENCE_SCENARIO: &str = include_str!("../../scenarios/reference.toml");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    #[default]
    Lqr,
    /// All gains zero; used as a destabilising sanity check.
    OpenLoop,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSection {
    pub m_a: usize,
    pub slot_us: f64,
    pub slots_per_message: f64,
    pub round_budget_us: f64,
    #[serde(default = "default_byte_us")]
    pub byte_us: f64,
    #[serde(default = "default_p_loss")]
    pub p_loss: f64,
    #[serde(default = "default_q_noagg")]
    pub q_noagg: f64,
    /// Slots charged to a round on top of the sent messages.
    #[serde(default)]
    pub aggregate_floor_slots: f64,
    /// Overrides the control-message budget computed from the timing constants.
    #[serde(default)]
    pub m_c: Option<usize>,
}

fn default_byte_us() -> f64 {
    4.0
}

fn default_p_loss() -> f64 {
    1.0 / 50_000.0
}

fn default_q_noagg() -> f64 {
    1e-4
}

impl NetworkSection {
    pub fn bandwidth_params(&self) -> BandwidthParams {
        BandwidthParams {
            m_a: self.m_a,
            slot_us: self.slot_us,
            slots_per_message: self.slots_per_message,
            round_budget_us: self.round_budget_us,
            byte_us: self.byte_us,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TriggeringSection {
    pub e_max: Vec<f64>,
    pub p_delta: f64,
    pub w_p: u32,
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default)]
    pub measure: PriorityMeasure,
}

fn default_horizon() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostSection {
    /// Diagonal of the default per-agent state weight.
    pub q: Vec<f64>,
    /// Diagonal of the pairwise synchronisation weight.
    pub q_sync: Vec<f64>,
    pub r: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentClass {
    #[serde(flatten)]
    pub params: CartPoleParams,
    /// Per-component process-noise standard deviation.
    pub noise_std: Vec<f64>,
    /// Overrides the default state weight for agents of this class.
    #[serde(default)]
    pub q: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    #[serde(default = "default_cost_window")]
    pub cost_window: usize,
    #[serde(default = "default_msb_window")]
    pub msb_window: usize,
    #[serde(default = "default_msb_growth")]
    pub msb_growth: f64,
}

fn default_cost_window() -> usize {
    50
}

fn default_msb_window() -> usize {
    1000
}

fn default_msb_growth() -> f64 {
    1.2
}

impl Default for MetricsSection {
    fn default() -> Self {
        Self {
            cost_window: default_cost_window(),
            msb_window: default_msb_window(),
            msb_growth: default_msb_growth(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub schema_version: u32,
    pub name: String,
    pub mode: Mode,
    pub rounds: u64,
    pub seed: u64,
    /// Update interval [s].
    pub dt: f64,
    #[serde(default)]
    pub controller: ControllerKind,
    #[serde(default = "default_true")]
    pub noise_enabled: bool,
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    pub network: NetworkSection,
    pub triggering: TriggeringSection,
    pub cost: CostSection,
    pub classes: BTreeMap<String, AgentClass>,
    /// Class name of every agent, by id.
    pub roster: Vec<String>,
    #[serde(default)]
    pub disturbances: Vec<DisturbanceSpec>,
    /// Initial state per agent; all zero when empty.
    #[serde(default)]
    pub initial_states: Vec<Vec<f64>>,
    #[serde(default)]
    pub metrics: MetricsSection,
}

fn default_true() -> bool {
    true
}

const STATE_DIM: usize = 4;

fn check_vec(name: &str, v: &[f64], len: usize, positive: bool) -> Result<()> {
    if v.len() != len {
        return Err(Error::Config(format!("{name} needs {len} entries, got {}", v.len())));
    }
    let ok = v
        .iter()
        .all(|x| x.is_finite() && if positive { *x > 0.0 } else { *x >= 0.0 });
    if !ok {
        let kind = if positive { "positive" } else { "non-negative" };
        return Err(Error::Config(format!("{name} entries must be finite and {kind}")));
    }
    Ok(())
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text =
            std::fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn reference() -> Self {
        Self::from_toml(REFERENCE_SCENARIO).expect("shipped reference scenario is valid")
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn agents(&self) -> usize {
        self.roster.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.roster.is_empty() {
            return Err(Error::Config("roster must list at least one agent".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Config("rounds must be positive".into()));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Config("dt must be positive".into()));
        }
        for name in &self.roster {
            if !self.classes.contains_key(name) {
                return Err(Error::Config(format!("roster refers to unknown class `{name}`")));
            }
        }
        for (name, class) in &self.classes {
            check_vec(&format!("classes.{name}.noise_std"), &class.noise_std, STATE_DIM, false)?;
            if let Some(q) = &class.q {
                check_vec(&format!("classes.{name}.q"), q, STATE_DIM, false)?;
            }
        }
        let t = &self.triggering;
        check_vec("triggering.e_max", &t.e_max, STATE_DIM, true)?;
        if !(t.p_delta > 0.0 && t.p_delta < 1.0) {
            return Err(Error::Config("triggering.p_delta must lie in (0, 1)".into()));
        }
        if !(1..=16).contains(&t.w_p) {
            return Err(Error::Config("triggering.w_p must be between 1 and 16".into()));
        }
        if t.horizon != 1 {
            return Err(Error::Config(
                "triggering.horizon must be 1: the aggregate schedules the next round".into(),
            ));
        }
        check_vec("cost.q", &self.cost.q, STATE_DIM, false)?;
        check_vec("cost.q_sync", &self.cost.q_sync, STATE_DIM, false)?;
        if !(self.cost.r.is_finite() && self.cost.r > 0.0) {
            return Err(Error::Config("cost.r must be positive".into()));
        }
        let net = &self.network;
        if !(0.0..1.0).contains(&net.p_loss) || !(0.0..1.0).contains(&net.q_noagg) {
            return Err(Error::Config("network loss probabilities must lie in [0, 1)".into()));
        }
        if net.m_c == Some(0) {
            return Err(Error::Config("network.m_c must be at least 1".into()));
        }
        if !(net.aggregate_floor_slots.is_finite() && net.aggregate_floor_slots >= 0.0) {
            return Err(Error::Config(
                "network.aggregate_floor_slots must be non-negative".into(),
            ));
        }
        for d in &self.disturbances {
            d.validate(STATE_DIM)?;
            if d.agent_id >= self.agents() {
                return Err(Error::Config(format!(
                    "disturbance targets unknown agent {}",
                    d.agent_id
                )));
            }
        }
        if !self.initial_states.is_empty() {
            if self.initial_states.len() != self.agents() {
                return Err(Error::Config(format!(
                    "initial_states needs {} rows, got {}",
                    self.agents(),
                    self.initial_states.len()
                )));
            }
            for x in &self.initial_states {
                if x.len() != STATE_DIM || x.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Config("initial states must be finite 4-vectors".into()));
                }
            }
        }
        let m = &self.metrics;
        if m.cost_window == 0 || m.msb_window == 0 || !(m.msb_growth >= 1.0) {
            return Err(Error::Config(
                "metrics windows must be positive and msb_growth ≥ 1".into(),
            ));
        }
        Ok(())
    }

    pub fn class_of(&self, agent: usize) -> &AgentClass {
        &self.classes[&self.roster[agent]]
    }

    pub fn sigma_v(&self, agent: usize) -> Matrix<f64> {
        let std = Vector::from_column_slice(&self.class_of(agent).noise_std);
        Matrix::from_diagonal(&std.component_mul(&std))
    }

    pub fn models(&self) -> Result<Vec<LtiModel<f64>>> {
        (0..self.agents())
            .map(|i| make_cartpole_model(&self.class_of(i).params, self.dt, self.sigma_v(i)))
            .collect()
    }

    pub fn cost_spec(&self) -> CostSpec<f64> {
        let diag = |v: &[f64]| Matrix::from_diagonal(&Vector::from_column_slice(v));
        CostSpec {
            q: (0..self.agents())
                .map(|i| diag(self.class_of(i).q.as_deref().unwrap_or(&self.cost.q)))
                .collect(),
            q_sync: diag(&self.cost.q_sync),
            r: vec![Matrix::from_element(1, 1, self.cost.r); self.agents()],
        }
    }

    pub fn e_max(&self) -> Vector<f64> {
        Vector::from_column_slice(&self.triggering.e_max)
    }

    pub fn initial_state(&self, agent: usize) -> Vector<f64> {
        self.initial_states
            .get(agent)
            .map(|x| Vector::from_column_slice(x))
            .unwrap_or_else(|| Vector::zeros(STATE_DIM))
    }

    /// First round of the earliest disturbance, if any.
    pub fn disturbance_start(&self) -> Option<u64> {
        self.disturbances.iter().map(|d| d.start_step).min()
    }

    /// Rounds split into (before, during) the disturbance.
    pub fn phase_split(&self) -> u64 {
        self.disturbance_start().unwrap_or(self.rounds).min(self.rounds)
    }

    pub fn with_mode(&self, mode: Mode) -> Self {
        Self { mode, ..self.clone() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }

    /// Same scenario with every disturbance stretched or cut to a new run length.
    pub fn with_rounds(&self, rounds: u64) -> Self {
        let mut out = self.clone();
        let old = self.rounds as f64;
        out.rounds = rounds;
        for d in &mut out.disturbances {
            d.start_step = (d.start_step as f64 / old * rounds as f64).round() as u64;
            d.end_step = (d.end_step as f64 / old * rounds as f64).round() as u64;
        }
        out
    }

    pub fn without_disturbances(&self) -> Self {
        Self {
            disturbances: Vec::new(),
            ..self.clone()
        }
    }
}
