//! Incremental tabular learners: TD(0), QTD(m) and PQTD(m).
//!
//! Every quantile update reads the pre-update table for all of its
//! indicator evaluations and commits the increments afterwards, so the
//! result does not depend on the order in which coordinates are visited,
//! even when `x' = x`. Indicators use strict inequalities; a bootstrap
//! target exactly equal to the current estimate does not count.

mod diagnostics;
mod learner;
mod pqtd;
mod qtd;
mod td;

pub use crate::tables::{quantile_levels, value_from_quantiles, QuantileTable, ValueTable};
pub use diagnostics::{
    pqtd_expected_update, qtd_expected_update, td_expected_update, UpdateDiagnostics,
    NOISE_SAMPLES,
};
pub use learner::{AgentKind, Learner, PqtdLearner, QtdLearner, TdLearner};
pub use pqtd::{pqtd_increments, pqtd_update};
pub use qtd::{qtd_increment_at, qtd_increments, qtd_update, qtd_update_fast, QtdScratch};
pub use td::td_update;
