//! Predictive triggering and distributed scheduling for networked control of
//! coupled linear agents over a lossy many-to-all wireless bus.

// `!(x > 0)` comparisons are deliberate: they reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod dynamics;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod linalg;
pub mod netsim;
pub mod rng;
pub mod scalar;
pub mod scheduler;
pub mod stability;
pub mod triggering;

pub use error::{Error, Result};
pub use scalar::Real;

pub type LtiModelF64 = dynamics::LtiModel<f64>;
pub type AgentStateF64 = dynamics::AgentState<f64>;
pub type CostSpecF64 = control::CostSpec<f64>;
pub type GainSetF64 = control::GainSet<f64>;
pub type EstimatorBankF64 = estimation::EstimatorBank<f64>;
pub type PredictorF64 = estimation::Predictor<f64>;
pub type ErrorStatisticsF64 = triggering::ErrorStatistics<f64>;
pub type MatrixF64 = linalg::Matrix<f64>;
pub type VectorF64 = linalg::Vector<f64>;
