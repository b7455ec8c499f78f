use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::pqtd::increments_against;
use super::qtd::{count_below_sorted, quantile_step, sorted_bootstrap};
use super::{qtd_update, td_update};
use crate::mrp::Transition;
use crate::scalar::{from_usize, Scalar};
use crate::tables::{QuantileTable, ValueTable};

/// Which learner to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AgentKind {
    Td,
    Qtd,
    Pqtd,
}

impl AgentKind {
    pub fn name(self) -> &'static str {
        match self {
            AgentKind::Td => "td",
            AgentKind::Qtd => "qtd",
            AgentKind::Pqtd => "pqtd",
        }
    }

    pub fn uses_quantiles(self) -> bool {
        !matches!(self, AgentKind::Td)
    }
}

impl fmt::Display for AgentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AgentKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "td" => Ok(AgentKind::Td),
            "qtd" => Ok(AgentKind::Qtd),
            "pqtd" => Ok(AgentKind::Pqtd),
            other => Err(format!("unknown agent `{other}` (expected td, qtd or pqtd)")),
        }
    }
}

/// A tabular learner driven one transition at a time.
pub trait Learner<T> {
    fn observe(&mut self, t: &Transition<T>, alpha: T);

    /// Current per-state value estimates.
    fn values(&self) -> ValueTable<T>;
}

#[derive(Clone, Debug)]
pub struct TdLearner<T> {
    pub v: ValueTable<T>,
    gamma: T,
}

impl<T: Scalar> TdLearner<T> {
    pub fn new(n_states: usize, gamma: T) -> Self {
        TdLearner { v: ValueTable::zeros(n_states), gamma }
    }
}

impl<T: Scalar> Learner<T> for TdLearner<T> {
    fn observe(&mut self, t: &Transition<T>, alpha: T) {
        td_update(&mut self.v, t, alpha, self.gamma);
    }

    fn values(&self) -> ValueTable<T> {
        self.v.clone()
    }
}

/// QTD learner that keeps each state's sorted bootstrap row cached until
/// that state's estimates change.
#[derive(Clone, Debug)]
pub struct QtdLearner<T> {
    theta: QuantileTable<T>,
    gamma: T,
    m_scalar: T,
    sorted: Vec<Vec<T>>,
    stale: Vec<bool>,
    increments: Vec<T>,
}

impl<T: Scalar> QtdLearner<T> {
    pub fn new(n_states: usize, m: usize, gamma: T) -> Self {
        QtdLearner {
            theta: QuantileTable::zeros(n_states, m),
            gamma,
            m_scalar: from_usize(m),
            sorted: vec![Vec::with_capacity(m); n_states],
            stale: vec![true; n_states],
            increments: Vec::with_capacity(m),
        }
    }

    pub fn table(&self) -> &QuantileTable<T> {
        &self.theta
    }
}

impl<T: Scalar> Learner<T> for QtdLearner<T> {
    fn observe(&mut self, t: &Transition<T>, alpha: T) {
        let y = t.x_next;
        if self.stale[y] {
            if !sorted_bootstrap(self.theta.row(y), self.gamma, &mut self.sorted[y]) {
                // NaN in the bootstrap row: the reference path handles it
                qtd_update(&mut self.theta, t, alpha, self.gamma);
                self.stale[t.x] = true;
                return;
            }
            self.stale[y] = false;
        }
        let sorted = &self.sorted[y];
        self.increments.clear();
        for (i, &tau) in self.theta.tau().iter().enumerate() {
            let below = count_below_sorted(self.theta.get(t.x, i) - t.r, sorted);
            self.increments.push(quantile_step(alpha, tau, below, self.m_scalar));
        }
        for (q, &d) in self.theta.row_mut(t.x).iter_mut().zip(&self.increments) {
            *q = *q + d;
        }
        self.stale[t.x] = true;
    }

    fn values(&self) -> ValueTable<T> {
        self.theta.values()
    }
}

/// PQTD learner with cached row means.
#[derive(Clone, Debug)]
pub struct PqtdLearner<T> {
    theta: QuantileTable<T>,
    gamma: T,
    means: Vec<Option<T>>,
}

impl<T: Scalar> PqtdLearner<T> {
    pub fn new(n_states: usize, m: usize, gamma: T) -> Self {
        PqtdLearner { theta: QuantileTable::zeros(n_states, m), gamma, means: vec![None; n_states] }
    }

    pub fn table(&self) -> &QuantileTable<T> {
        &self.theta
    }
}

impl<T: Scalar> Learner<T> for PqtdLearner<T> {
    fn observe(&mut self, t: &Transition<T>, alpha: T) {
        let y = t.x_next;
        let mean = match self.means[y] {
            Some(v) => v,
            None => {
                let v = self.theta.row_mean(y);
                self.means[y] = Some(v);
                v
            }
        };
        let inc = increments_against(&self.theta, t, alpha, self.gamma * mean);
        for (q, d) in self.theta.row_mut(t.x).iter_mut().zip(inc) {
            *q = *q + d;
        }
        self.means[t.x] = None;
    }

    fn values(&self) -> ValueTable<T> {
        self.theta.values()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::pqtd_update;
    use crate::env::{make_env, EnvSpec, TransitionKind};
    use crate::reward::RewardKind;
    use crate::rng::RngStream;

    fn stream(kind: RewardKind, n: usize) -> (crate::mrp::Mrp<f64>, Vec<Transition<f64>>) {
        let spec = EnvSpec::new(TransitionKind::Dirichlet, kind).with_seed(3);
        let mrp = make_env::<f64>(&spec).unwrap();
        let mut rng = RngStream::new(11);
        let mut x = 0;
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let t = mrp.step(x, &mut rng);
            x = t.x_next;
            out.push(t);
        }
        (mrp, out)
    }

    #[test]
    fn cached_qtd_matches_reference() {
        let (mrp, ts) = stream(RewardKind::Gaussian, 3000);
        let mut learner = QtdLearner::new(mrp.n_states(), 16, mrp.gamma());
        let mut reference = QuantileTable::zeros(mrp.n_states(), 16);
        for t in &ts {
            learner.observe(t, 0.05);
            qtd_update(&mut reference, t, 0.05, mrp.gamma());
        }
        assert_eq!(learner.table(), &reference);
    }

    #[test]
    fn cached_pqtd_matches_reference() {
        let (mrp, ts) = stream(RewardKind::StudentT2, 3000);
        let mut learner = PqtdLearner::new(mrp.n_states(), 8, mrp.gamma());
        let mut reference = QuantileTable::zeros(mrp.n_states(), 8);
        for t in &ts {
            learner.observe(t, 0.05);
            pqtd_update(&mut reference, t, 0.05, mrp.gamma());
        }
        assert_eq!(learner.table(), &reference);
    }

    #[test]
    fn self_loop_refreshes_cache() {
        let mut learner = QtdLearner::new(1, 4, 0.5);
        let mut reference = QuantileTable::zeros(1, 4);
        for k in 0..50 {
            let t = Transition::new(0, (k % 3) as f64 - 1.0, 0);
            learner.observe(&t, 0.3);
            qtd_update(&mut reference, &t, 0.3, 0.5);
        }
        assert_eq!(learner.table(), &reference);
    }

    #[test]
    fn agent_names_round_trip() {
        for a in [AgentKind::Td, AgentKind::Qtd, AgentKind::Pqtd] {
            assert_eq!(a.name().parse::<AgentKind>().unwrap(), a);
        }
        assert!("sarsa".parse::<AgentKind>().is_err());
    }
}
