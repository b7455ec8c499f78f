//! Tabular policy evaluation with TD, quantile TD and projected quantile TD:
//! environments, learners, distributional dynamic programming for their
//! fixed points, and a seeded experiment harness.
//!
//! The numerical core is generic over the scalar type ([`Scalar`] for the
//! update rules, [`Real`] wherever a CDF or a linear solve is needed). The
//! aliases at the bottom of this file fix the common choices.

pub mod agents;
pub mod config;
pub mod dp;
pub mod env;
pub mod harness;
mod linalg;
pub mod mrp;
pub mod report;
pub mod reward;
pub mod rng;
pub mod scalar;
pub mod tables;

pub use agents::{AgentKind, Learner};
pub use dp::{DpAlgo, DpError, DpResult};
pub use env::{make_env, EnvSpec, TransitionKind};
pub use harness::{ExperimentConfig, ImprovementCurve, SweepSummary};
pub use mrp::{Mrp, Transition};
pub use reward::{RewardKind, RewardModel};
pub use rng::RngStream;
pub use scalar::{Real, Scalar};
pub use tables::{QuantileTable, ValueTable};

pub type MrpF64 = Mrp<f64>;
pub type MrpF32 = Mrp<f32>;
pub type QuantileTableF64 = QuantileTable<f64>;
pub type QuantileTableF32 = QuantileTable<f32>;
/// Exact tables for hand-checkable update arithmetic.
pub type QuantileTableQ = QuantileTable<num_rational::Rational64>;
pub type ValueTableF64 = ValueTable<f64>;
pub type ValueTableQ = ValueTable<num_rational::Rational64>;
