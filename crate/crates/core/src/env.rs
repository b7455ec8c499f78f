//! Seeded generators for the benchmark environments.
//!
//! Transition structure and reward means are drawn from independent
//! sub-streams of the environment seed, so two specs that differ only in
//! reward family (or Gaussian scale) share the same transition matrix and
//! the same reward means.

use std::fmt;
use std::str::FromStr;

use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::mrp::{Mrp, MrpError};
use crate::reward::{RewardKind, RewardModel};
use crate::rng::{substream_seed, RngStream};
use crate::scalar::{cast, Real};

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum EnvError {
    #[error("branching factor {branching} exceeds number of states {n_states}")]
    BranchingTooLarge { branching: usize, n_states: usize },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("discount {0} must lie in [0, 1)")]
    BadDiscount(f64),
    #[error("skew probability {0} must lie in (0, 1/2)")]
    BadSkewProbability(f64),
    #[error("unknown transition kind `{0}` (expected dirichlet, garnet, cycle or skewed)")]
    UnknownKind(String),
    #[error(transparent)]
    Mrp(#[from] MrpError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransitionKind {
    /// Every row drawn from Dirichlet(1, ..., 1).
    Dirichlet,
    /// Every row uniform over `branching` successors sampled without replacement.
    Garnet,
    /// Deterministic cycle `x -> x + 1 mod n`.
    Cycle,
    /// Three-state surrogate with a strongly right-skewed one-step target,
    /// see [`make_skewed_env`].
    Skewed,
}

impl TransitionKind {
    pub fn name(self) -> &'static str {
        match self {
            TransitionKind::Dirichlet => "dirichlet",
            TransitionKind::Garnet => "garnet",
            TransitionKind::Cycle => "cycle",
            TransitionKind::Skewed => "skewed",
        }
    }
}

impl fmt::Display for TransitionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TransitionKind {
    type Err = EnvError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" | "dense" => Ok(TransitionKind::Dirichlet),
            "garnet" | "sparse" => Ok(TransitionKind::Garnet),
            "cycle" | "deterministic" => Ok(TransitionKind::Cycle),
            "skewed" | "skewed_pair" => Ok(TransitionKind::Skewed),
            _ => Err(EnvError::UnknownKind(s.to_string())),
        }
    }
}

pub const DEFAULT_GAMMA: f64 = 0.9;
pub const DEFAULT_BRANCHING: usize = 6;
pub const DEFAULT_SKEW: f64 = 1.0;
pub const DEFAULT_SKEW_PROBABILITY: f64 = 0.1;

/// Description of one environment. Use [`EnvSpec::new`] for the defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvSpec {
    pub transition_kind: TransitionKind,
    pub reward_kind: RewardKind,
    pub n_states: usize,
    pub branching: usize,
    /// Gaussian standard deviation; ignored by other reward families.
    pub reward_scale: f64,
    pub gamma: f64,
    pub seed: u64,
    /// Rare-branch reward mass for [`TransitionKind::Skewed`].
    pub skew: f64,
    /// Rare-branch probability for [`TransitionKind::Skewed`].
    pub skew_prob: f64,
}

impl EnvSpec {
    /// Spec with defaults: 20 states for Dirichlet/Garnet, 10 for the cycle,
    /// 3 for the skewed surrogate; branching 6; unit Gaussian scale; γ = 0.9.
    pub fn new(transition_kind: TransitionKind, reward_kind: RewardKind) -> Self {
        let n_states = match transition_kind {
            TransitionKind::Dirichlet | TransitionKind::Garnet => 20,
            TransitionKind::Cycle => 10,
            TransitionKind::Skewed => 3,
        };
        EnvSpec {
            transition_kind,
            reward_kind,
            n_states,
            branching: DEFAULT_BRANCHING,
            reward_scale: 1.0,
            gamma: DEFAULT_GAMMA,
            seed: 0,
            skew: DEFAULT_SKEW,
            skew_prob: DEFAULT_SKEW_PROBABILITY,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_reward_scale(mut self, sigma: f64) -> Self {
        self.reward_scale = sigma;
        self
    }

    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.gamma >= 0.0 && self.gamma < 1.0) {
            return Err(EnvError::BadDiscount(self.gamma));
        }
        match self.transition_kind {
            TransitionKind::Skewed => {
                if !(self.skew_prob > 0.0 && self.skew_prob < 0.5) {
                    return Err(EnvError::BadSkewProbability(self.skew_prob));
                }
                if !(self.skew >= 0.0 && self.skew.is_finite()) {
                    return Err(EnvError::NonPositive("skew"));
                }
            }
            kind => {
                if self.n_states == 0 {
                    return Err(EnvError::NonPositive("n_states"));
                }
                if !(self.reward_scale > 0.0 && self.reward_scale.is_finite()) {
                    return Err(EnvError::NonPositive("reward_scale"));
                }
                if kind == TransitionKind::Garnet {
                    if self.branching == 0 {
                        return Err(EnvError::NonPositive("branching"));
                    }
                    if self.branching > self.n_states {
                        return Err(EnvError::BranchingTooLarge {
                            branching: self.branching,
                            n_states: self.n_states,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    /// Short identifier used in file names and CSV rows.
    pub fn env_id(&self) -> String {
        match self.transition_kind {
            TransitionKind::Skewed => {
                format!("skewed-k{}-p{}-g{}", self.skew, self.skew_prob, self.gamma)
            }
            kind => {
                let mut id = format!("{}-{}", kind, self.reward_kind);
                if self.reward_kind == RewardKind::Gaussian && self.reward_scale != 1.0 {
                    id.push_str(&format!("-sd{}", self.reward_scale));
                }
                if self.gamma != DEFAULT_GAMMA {
                    id.push_str(&format!("-g{}", self.gamma));
                }
                id.push_str(&format!("-s{}", self.seed));
                id
            }
        }
    }
}

/// Builds the environment described by `spec`. Deterministic in the spec.
pub fn make_env<T: Real>(spec: &EnvSpec) -> Result<Mrp<T>, EnvError> {
    spec.validate()?;
    if spec.transition_kind == TransitionKind::Skewed {
        return make_skewed_env(spec.skew, spec.skew_prob, spec.gamma);
    }
    let n = spec.n_states;
    let mut trng = RngStream::new(substream_seed(spec.seed, "transitions"));
    let rows: Vec<Vec<f64>> = match spec.transition_kind {
        TransitionKind::Dirichlet => (0..n).map(|_| dirichlet_ones(n, &mut trng)).collect(),
        TransitionKind::Garnet => (0..n)
            .map(|_| {
                let mut row = vec![0.0; n];
                let p = 1.0 / spec.branching as f64;
                for y in index::sample(&mut trng, n, spec.branching) {
                    row[y] = p;
                }
                row
            })
            .collect(),
        TransitionKind::Cycle => (0..n)
            .map(|x| (0..n).map(|y| if y == (x + 1) % n { 1.0 } else { 0.0 }).collect())
            .collect(),
        TransitionKind::Skewed => unreachable!(),
    };
    let means = reward_means(spec.seed, n);
    let rewards = means
        .iter()
        .map(|&mu| {
            let mu = cast::<T>(mu);
            match spec.reward_kind {
                RewardKind::PointMass => Ok(RewardModel::point_mass(mu)),
                RewardKind::Gaussian => RewardModel::gaussian(mu, cast(spec.reward_scale)),
                RewardKind::Exponential => Ok(RewardModel::exponential(mu)),
                RewardKind::StudentT2 => Ok(RewardModel::student_t2(mu)),
            }
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(MrpError::from)?;
    let rows = rows.into_iter().map(|r| r.into_iter().map(cast).collect()).collect();
    Ok(Mrp::new(rows, rewards, cast(spec.gamma))?)
}

/// Per-state reward means, i.i.d. standard normal from the reward sub-stream.
pub fn reward_means(seed: u64, n: usize) -> Vec<f64> {
    let mut rng = RngStream::new(substream_seed(seed, "reward-means"));
    (0..n).map(|_| rng.standard_normal()).collect()
}

fn dirichlet_ones(n: usize, rng: &mut RngStream) -> Vec<f64> {
    // normalized Exp(1) draws
    let w: Vec<f64> = (0..n).map(|_| -rng.uniform_open().ln()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Skewed surrogate with the default rare-branch probability 0.1.
pub fn make_skewed_pair<T: Real>(skew: f64, gamma: f64) -> Result<Mrp<T>, EnvError> {
    make_skewed_env(skew, DEFAULT_SKEW_PROBABILITY, gamma)
}

/// Three-state environment whose one-step target at state 0 is strongly
/// right-skewed.
///
/// State 0 (reward 0) moves to state 1 with probability `1 - p` and to
/// state 2 with probability `p`. State 1 pays 0 and state 2 pays `skew / p`;
/// both return to state 0. The rare branch contributes `skew` to the mean of
/// the target at state 0 but nothing to its median.
pub fn make_skewed_env<T: Real>(skew: f64, p: f64, gamma: f64) -> Result<Mrp<T>, EnvError> {
    if !(p > 0.0 && p < 0.5) {
        return Err(EnvError::BadSkewProbability(p));
    }
    if !(gamma >= 0.0 && gamma < 1.0) {
        return Err(EnvError::BadDiscount(gamma));
    }
    if !(skew >= 0.0 && skew.is_finite()) {
        return Err(EnvError::NonPositive("skew"));
    }
    let rows = vec![
        vec![T::zero(), cast(1.0 - p), cast(p)],
        vec![T::one(), T::zero(), T::zero()],
        vec![T::one(), T::zero(), T::zero()],
    ];
    let rewards = vec![
        RewardModel::point_mass(T::zero()),
        RewardModel::point_mass(T::zero()),
        RewardModel::point_mass(cast(skew / p)),
    ];
    Ok(Mrp::new(rows, rewards, cast(gamma))?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cycle_is_permutation() {
        let mrp: Mrp<f64> = make_env(&EnvSpec::new(TransitionKind::Cycle, RewardKind::Gaussian).with_seed(7)).unwrap();
        assert_eq!(mrp.n_states(), 10);
        for x in 0..10 {
            assert_eq!(mrp.successors(x), &[((x + 1) % 10, 1.0)]);
            assert_eq!(mrp.row(x).iter().sum::<f64>(), 1.0);
        }
    }

    #[test]
    fn garnet_rows_have_exact_branching() {
        for seed in 0..10 {
            let mrp: Mrp<f64> =
                make_env(&EnvSpec::new(TransitionKind::Garnet, RewardKind::PointMass).with_seed(seed)).unwrap();
            assert_eq!(mrp.n_states(), 20);
            for x in 0..20 {
                let succ = mrp.successors(x);
                assert_eq!(succ.len(), 6);
                assert!(succ.iter().all(|&(_, p)| p == 1.0 / 6.0));
            }
        }
    }

    #[test]
    fn dirichlet_rows_are_stochastic() {
        let mrp: Mrp<f64> = make_env(&EnvSpec::new(TransitionKind::Dirichlet, RewardKind::Exponential).with_seed(3)).unwrap();
        for x in 0..20 {
            assert!((mrp.row(x).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            assert!(mrp.row(x).iter().all(|&p| p > 0.0));
        }
    }

    #[test]
    fn same_seed_same_env() {
        for kind in [TransitionKind::Dirichlet, TransitionKind::Garnet, TransitionKind::Cycle] {
            let spec = EnvSpec::new(kind, RewardKind::StudentT2).with_seed(99);
            let a: Mrp<f64> = make_env(&spec).unwrap();
            let b: Mrp<f64> = make_env(&spec).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn reward_family_does_not_change_structure_or_means() {
        let base = EnvSpec::new(TransitionKind::Garnet, RewardKind::PointMass).with_seed(5);
        let a: Mrp<f64> = make_env(&base).unwrap();
        for kind in RewardKind::ALL {
            let spec = EnvSpec { reward_kind: kind, reward_scale: 2.5, ..base.clone() };
            let b: Mrp<f64> = make_env(&spec).unwrap();
            assert_eq!(a.transition_rows(), b.transition_rows());
            assert_eq!(a.mean_rewards(), b.mean_rewards());
        }
    }

    #[test]
    fn branching_larger_than_states_is_rejected() {
        let spec = EnvSpec { n_states: 20, branching: 30, ..EnvSpec::new(TransitionKind::Garnet, RewardKind::Gaussian) };
        assert_eq!(
            make_env::<f64>(&spec).unwrap_err(),
            EnvError::BranchingTooLarge { branching: 30, n_states: 20 }
        );
    }

    /// Kolmogorov–Smirnov check of reward means against N(0, 1) at the 0.999 level.
    #[test]
    fn reward_means_look_standard_normal() {
        let mut xs: Vec<f64> = (0..500).flat_map(|seed| reward_means(seed, 20)).collect();
        let n = xs.len() as f64;
        xs.sort_by(f64::total_cmp);
        let std_normal = RewardModel::gaussian(0.0, 1.0).unwrap();
        let d = xs
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = std_normal.cdf(x);
                (f - i as f64 / n).max((i + 1) as f64 / n - f)
            })
            .fold(0.0, f64::max);
        assert!(d < 1.949 / n.sqrt(), "KS statistic {d}");
    }

    #[test]
    fn skewed_env_structure() {
        let mrp: Mrp<f64> = make_skewed_pair(1.0, 0.9).unwrap();
        assert_eq!(mrp.n_states(), 3);
        assert_eq!(mrp.successors(0), &[(1, 0.9), (2, 0.1)]);
        assert_eq!(mrp.reward(2).mean(), 10.0);
        // V0 = gamma * skew / (1 - gamma^2)
        let v = mrp.true_value();
        assert!((v.v[0] - 0.9 / 0.19).abs() < 1e-12);
        let degenerate: Mrp<f64> = make_skewed_pair(0.0, 0.9).unwrap();
        assert!(degenerate.rewards().iter().all(|r| r.mean() == 0.0));
        assert_eq!(make_skewed_pair::<f64>(1.0, 0.9).unwrap(), mrp);
    }

    #[test]
    fn env_ids_are_distinct() {
        let a = EnvSpec::new(TransitionKind::Cycle, RewardKind::Gaussian);
        let b = a.clone().with_reward_scale(0.3);
        assert_ne!(a.env_id(), b.env_id());
        assert_eq!(a.env_id(), "cycle-gaussian-s0");
    }
}
