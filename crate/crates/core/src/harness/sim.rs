//! The per-round co-simulation loop.

use std::path::Path;

use crate::control::{solve_lqr, GainSet, RiccatiOptions};
use crate::dynamics::{step_disturbed, AgentState, LtiModel, NoiseSampler};
use crate::error::{Error, Result};
use crate::estimation::{EstimatorBank, ObservedAgent, Predictor, RoundObservation};
use crate::linalg::{spectral_radius, Vector};
use crate::netsim::{control_bandwidth, execute_round, priority_exchange, Bandwidth, Mode, NetworkConfig};
use crate::rng::{stream, Domain};
use crate::scheduler::{apply_schedule, compute_schedule, Decision, Schedule};
use crate::triggering::{mahalanobis_sq, quantize, ErrorStatistics};

use super::config::{ControllerKind, ScenarioConfig};
use super::metrics::{instantaneous_cost, Summary};
use super::periodic_baseline_schedule;
use super::trace::{write_trace_file, AgentRound, TraceRecord};

/// Controller gains for a scenario: the augmented LQR, or all zeros for the
/// open-loop sanity variant.
pub fn synthesize(config: &ScenarioConfig) -> Result<GainSet<f64>> {
    config.validate()?;
    let models = config.models()?;
    let (n, m) = (models[0].n(), models[0].m());
    match config.controller {
        ControllerKind::OpenLoop => Ok(GainSet::zeros(models.len(), n, m)),
        ControllerKind::Lqr => {
            let gains = solve_lqr(&models, &config.cost_spec(), RiccatiOptions::default())?;
            for (i, cl) in gains.local_closed_loops(&models).iter().enumerate() {
                let rho = spectral_radius(cl);
                if !(rho < 1.0) {
                    return Err(Error::Synthesis(format!(
                        "local closed loop of agent {i} is not stable (spectral radius {rho})"
                    )));
                }
            }
            Ok(gains)
        }
    }
}

/// Everything derived from a configuration before the first round.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub models: Vec<LtiModel<f64>>,
    pub gains: GainSet<f64>,
    pub predictor: Predictor<f64>,
    pub stats: Vec<ErrorStatistics<f64>>,
    pub network: NetworkConfig,
    /// `None` when the control budget is fixed by the configuration.
    pub bandwidth: Option<Bandwidth>,
    pub p_delta_q: u32,
    samplers: Vec<NoiseSampler<f64>>,
}

impl Scenario {
    pub fn new(config: ScenarioConfig) -> Result<Self> {
        let gains = synthesize(&config)?;
        Self::with_gains(config, gains)
    }

    pub fn with_gains(config: ScenarioConfig, gains: GainSet<f64>) -> Result<Self> {
        config.validate()?;
        let models = config.models()?;
        let predictor = Predictor::new(&models, &gains)?;
        let stats = (0..models.len())
            .map(|i| {
                ErrorStatistics::new(
                    predictor.closed_loop(i).clone(),
                    &models[i].sigma_v,
                    config.triggering.horizon,
                    config.e_max(),
                )
            })
            .collect::<Result<Vec<_>>>()?;
        let samplers = models
            .iter()
            .map(|m| NoiseSampler::new(&m.sigma_v))
            .collect::<Result<Vec<_>>>()?;
        let net = &config.network;
        let (m_c, bandwidth) = match net.m_c {
            Some(m_c) => (m_c, None),
            None => {
                let bw = control_bandwidth(
                    &net.bandwidth_params(),
                    config.agents(),
                    config.triggering.w_p as usize,
                    config.mode,
                )?;
                (bw.m_c, Some(bw))
            }
        };
        let network = NetworkConfig {
            n_agents: config.agents(),
            m_a: net.m_a,
            m_c,
            p_loss: net.p_loss,
            q_noagg: net.q_noagg,
            w_p: config.triggering.w_p,
            slots_per_message: net.slots_per_message,
            aggregate_floor_slots: net.aggregate_floor_slots,
        };
        network.validate()?;
        Ok(Self {
            p_delta_q: quantize(config.triggering.p_delta, config.triggering.w_p),
            config,
            models,
            gains,
            predictor,
            stats,
            network,
            bandwidth,
            samplers,
        })
    }

    pub fn m_c(&self) -> usize {
        self.network.m_c
    }

    pub fn summarize(&self, records: &[TraceRecord]) -> Result<Summary> {
        summarize(&self.config, records)
    }

    pub fn run(&self) -> Result<RunOutput> {
        let cfg = &self.config;
        let agents = cfg.agents();
        let m_c = self.m_c();
        let measure = cfg.triggering.measure;
        let w_p = cfg.triggering.w_p;
        let cost = cfg.cost_spec();
        let predictive = cfg.mode == Mode::Predictive;

        let mut x: Vec<Vector<f64>> = (0..agents).map(|i| cfg.initial_state(i)).collect();
        let mut banks = (0..agents)
            .map(|i| EstimatorBank::new(i, &x, 0))
            .collect::<Result<Vec<_>>>()?;
        let mut schedule = Schedule::empty(0);
        let mut has_agg = vec![true; agents];
        let mut records = Vec::with_capacity(cfg.rounds as usize);

        for k in 0..cfg.rounds {
            if !predictive {
                schedule = periodic_baseline_schedule(agents, m_c, k);
            }

            let errors: Vec<Vector<f64>> = (0..agents).map(|i| banks[i].self_error(&x[i])).collect();
            let prios: Vec<_> = (0..agents)
                .map(|i| self.stats[i].evaluate(i, &errors[i], measure, w_p))
                .collect();

            let decisions: Vec<Decision> = (0..agents)
                .map(|i| {
                    if predictive {
                        apply_schedule(i, &schedule, has_agg[i], prios[i].quantized_0, self.p_delta_q)
                    } else if schedule.is_granted(i) {
                        Decision::Transmit
                    } else {
                        Decision::Idle
                    }
                })
                .collect();
            let granted = schedule.agents();
            let flags: Vec<bool> = granted.iter().map(|&i| decisions[i].kappa()).collect();
            let outcome = execute_round(&self.network, &granted, &flags, cfg.seed, k)?;
            if outcome.used() > m_c {
                return Err(Error::Contract {
                    round: k,
                    agent: outcome.senders[m_c],
                    message: format!("{} transmissions exceed M_C = {m_c}", outcome.used()),
                });
            }

            let next_schedule = if predictive {
                let q: Vec<u32> = prios.iter().map(|p| p.quantized).collect();
                compute_schedule(&priority_exchange(&q, m_c), m_c, self.p_delta_q, k + 1)?
            } else {
                Schedule::empty(k + 1)
            };

            let u: Vec<Vector<f64>> = (0..agents)
                .map(|i| self.predictor.control(i, &x[i], &banks[i]))
                .collect();

            let agent_rounds: Vec<AgentRound> = (0..agents)
                .map(|i| {
                    let v_inv = &self.stats[i].v_now_inv;
                    let d2_cross = (0..agents)
                        .filter(|&j| j != i)
                        .map(|j| mahalanobis_sq(&banks[j].error_of(i, &x[i]), v_inv))
                        .sum();
                    let lost = outcome
                        .senders
                        .iter()
                        .position(|&s| s == i)
                        .map_or(0, |idx| outcome.delivered[idx].iter().filter(|d| !**d).count() as u32);
                    AgentRound {
                        x: x[i].iter().copied().collect(),
                        u: u[i].iter().copied().collect(),
                        e: errors[i].iter().copied().collect(),
                        d2_self: mahalanobis_sq(&errors[i], v_inv),
                        d2_cross,
                        p_h: prios[i].p_h,
                        p_0: prios[i].p_0,
                        q_h: prios[i].quantized,
                        q_0: prios[i].quantized_0,
                        granted: schedule.is_granted(i),
                        sent: decisions[i].kappa(),
                        skip: decisions[i].marks_unused(),
                        has_agg: has_agg[i],
                        lost,
                    }
                })
                .collect();
            let xs: Vec<Vec<f64>> = agent_rounds.iter().map(|a| a.x.clone()).collect();
            let us: Vec<Vec<f64>> = agent_rounds.iter().map(|a| a.u.clone()).collect();
            records.push(TraceRecord {
                round: k,
                cost: instantaneous_cost(&xs, &us, &cost)?,
                realized_slots: outcome.realized_slots,
                used: outcome.used(),
                skipped: outcome.skipped(),
                unassigned: outcome.unassigned(m_c),
                agents: agent_rounds,
            });

            banks = (0..agents)
                .map(|owner| {
                    let obs = RoundObservation {
                        round: k + 1,
                        agents: (0..agents)
                            .map(|j| match outcome.delivered_to(j, owner) {
                                Some(true) => ObservedAgent::received(x[j].clone()),
                                Some(false) => ObservedAgent::lost(),
                                None => ObservedAgent::silent(),
                            })
                            .collect(),
                    };
                    banks[owner].advance(&obs, &self.predictor)
                })
                .collect::<Result<Vec<_>>>()?;

            x = (0..agents)
                .map(|i| {
                    let noise = if cfg.noise_enabled {
                        self.samplers[i].sample(&mut stream(cfg.seed, Domain::ProcessNoise, i as u64, k))
                    } else {
                        Vector::zeros(self.models[i].n())
                    };
                    let state = AgentState::new(x[i].clone(), k);
                    step_disturbed(&self.models[i], i, &state, &u[i], &noise, &cfg.disturbances).map(|s| s.x)
                })
                .collect::<Result<Vec<_>>>()?;

            if predictive {
                has_agg = outcome.has_aggregate;
            }
            schedule = next_schedule;
        }

        let summary = self.summarize(&records)?;
        Ok(RunOutput { records, summary })
    }
}

/// Summary of a trace under a scenario's cost weights and phase boundary.
pub fn summarize(config: &ScenarioConfig, records: &[TraceRecord]) -> Result<Summary> {
    let m = &config.metrics;
    Summary::from_records(
        records,
        &config.cost_spec(),
        config.phase_split(),
        m.cost_window,
        m.msb_window,
        m.msb_growth,
    )
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    pub summary: Summary,
}

impl RunOutput {
    pub fn write_trace(&self, path: &Path) -> Result<()> {
        write_trace_file(path, &self.records)
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunOutput> {
    Scenario::new(config.clone())?.run()
}
