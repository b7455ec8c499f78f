//! Finite Markov reward processes: representation, exact values, sampling.

use serde::{Deserialize, Serialize};

use crate::linalg::solve_dense;
use crate::reward::{RewardError, RewardModel, RewardRecord};
use crate::rng::RngStream;
use crate::scalar::{cast, to_f64, Real};
use crate::tables::ValueTable;

#[derive(Clone, Debug, thiserror::Error, PartialEq)]
pub enum MrpError {
    #[error("MRP must have at least one state")]
    Empty,
    #[error("transition matrix has {rows} rows but {states} reward models")]
    ShapeMismatch { rows: usize, states: usize },
    #[error("transition row {row} has {len} entries, expected {expected}")]
    RaggedRow { row: usize, len: usize, expected: usize },
    #[error("transition row {row} has invalid entry {value}")]
    BadEntry { row: usize, value: f64 },
    #[error("transition row {row} sums to {sum}, not 1")]
    NotStochastic { row: usize, sum: f64 },
    #[error("discount {0} must lie in [0, 1)")]
    BadDiscount(f64),
    #[error("state {0} out of range")]
    BadState(usize),
    #[error(transparent)]
    Reward(#[from] RewardError),
}

/// Row sums must be within this distance of 1, or within `n` units of
/// roundoff of the scalar type if that is larger.
pub const ROW_SUM_TOLERANCE: f64 = 1e-12;

/// An observed transition `(x, r, x')`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Transition<T> {
    pub x: usize,
    pub r: T,
    pub x_next: usize,
}

impl<T> Transition<T> {
    pub fn new(x: usize, r: T, x_next: usize) -> Self {
        Transition { x, r, x_next }
    }
}

/// A Markov reward process: row-stochastic transitions, one reward
/// distribution per departing state, and a discount in `[0, 1)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mrp<T> {
    n: usize,
    transition: Vec<T>,
    successors: Vec<Vec<(usize, T)>>,
    rewards: Vec<RewardModel<T>>,
    gamma: T,
}

impl<T: Real> Mrp<T> {
    pub fn new(
        transition: Vec<Vec<T>>,
        rewards: Vec<RewardModel<T>>,
        gamma: T,
    ) -> Result<Self, MrpError> {
        let n = rewards.len();
        if n == 0 {
            return Err(MrpError::Empty);
        }
        if transition.len() != n {
            return Err(MrpError::ShapeMismatch { rows: transition.len(), states: n });
        }
        if !(gamma >= T::zero() && gamma < T::one()) {
            return Err(MrpError::BadDiscount(to_f64(gamma)));
        }
        let mut flat = Vec::with_capacity(n * n);
        let mut successors = Vec::with_capacity(n);
        for (row, probs) in transition.iter().enumerate() {
            if probs.len() != n {
                return Err(MrpError::RaggedRow { row, len: probs.len(), expected: n });
            }
            let mut sum = 0.0;
            let mut succ = Vec::new();
            for (col, &p) in probs.iter().enumerate() {
                let pf = to_f64(p);
                if !(pf >= 0.0 && pf.is_finite()) {
                    return Err(MrpError::BadEntry { row, value: pf });
                }
                sum += pf;
                if p > T::zero() {
                    succ.push((col, p));
                }
            }
            if (sum - 1.0).abs() > ROW_SUM_TOLERANCE.max(n as f64 * to_f64(T::epsilon())) {
                return Err(MrpError::NotStochastic { row, sum });
            }
            flat.extend_from_slice(probs);
            successors.push(succ);
        }
        Ok(Mrp { n, transition: flat, successors, rewards, gamma })
    }

    pub fn n_states(&self) -> usize {
        self.n
    }

    pub fn gamma(&self) -> T {
        self.gamma
    }

    pub fn rewards(&self) -> &[RewardModel<T>] {
        &self.rewards
    }

    pub fn reward(&self, x: usize) -> &RewardModel<T> {
        &self.rewards[x]
    }

    /// `P(x -> y)`.
    #[inline]
    pub fn prob(&self, x: usize, y: usize) -> T {
        self.transition[x * self.n + y]
    }

    pub fn row(&self, x: usize) -> &[T] {
        &self.transition[x * self.n..(x + 1) * self.n]
    }

    /// Nonzero entries `(y, P(x -> y))` of row `x`.
    pub fn successors(&self, x: usize) -> &[(usize, T)] {
        &self.successors[x]
    }

    pub fn transition_rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|x| self.row(x).to_vec()).collect()
    }

    pub fn mean_rewards(&self) -> Vec<T> {
        self.rewards.iter().map(RewardModel::mean).collect()
    }

    /// Samples one transition from state `x`. The next state is drawn first,
    /// then the reward of the departing state, independently.
    pub fn step(&self, x: usize, rng: &mut RngStream) -> Transition<T> {
        let succ = &self.successors[x];
        let x_next = if succ.len() == 1 {
            succ[0].0
        } else {
            let u = rng.uniform();
            let mut acc = 0.0;
            let mut chosen = succ[succ.len() - 1].0;
            for &(y, p) in succ {
                acc += to_f64(p);
                if u < acc {
                    chosen = y;
                    break;
                }
            }
            chosen
        };
        let r = self.rewards[x].sample(rng);
        Transition { x, r, x_next }
    }

    /// Exact value function: solves `(I - gamma P) V = rbar`.
    pub fn true_value(&self) -> ValueTable<T> {
        let n = self.n;
        let mut a = vec![T::zero(); n * n];
        for x in 0..n {
            for y in 0..n {
                let id = if x == y { T::one() } else { T::zero() };
                a[x * n + y] = id - self.gamma * self.prob(x, y);
            }
        }
        let v = solve_dense(a, self.mean_rewards())
            .expect("I - gamma P is nonsingular for gamma < 1");
        ValueTable::from_vec(v)
    }

    /// `(T V)(x) = rbar(x) + gamma sum_y P(x, y) V(y)`.
    pub fn bellman(&self, v: &ValueTable<T>) -> ValueTable<T> {
        let out = (0..self.n)
            .map(|x| {
                let boot = self.successors[x]
                    .iter()
                    .fold(T::zero(), |acc, &(y, p)| acc + p * v.v[y]);
                self.rewards[x].mean() + self.gamma * boot
            })
            .collect();
        ValueTable::from_vec(out)
    }

    /// Tight bounds on the support of all reward distributions, with
    /// infinities for unbounded families.
    pub fn reward_support_bounds(&self) -> (T, T) {
        self.rewards.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), r| {
            let (a, b) = r.support();
            (lo.min(a), hi.max(b))
        })
    }

    /// Smallest and largest reward mean.
    pub fn reward_mean_bounds(&self) -> (T, T) {
        self.rewards.iter().fold((T::infinity(), T::neg_infinity()), |(lo, hi), r| {
            (lo.min(r.mean()), hi.max(r.mean()))
        })
    }

    /// A stationary distribution `pi = pi P`, normalized to sum to one.
    /// For chains with several recurrent classes this is one of them, as
    /// determined by the linear solve.
    pub fn stationary_distribution(&self) -> Vec<T> {
        let n = self.n;
        // (P^T - I) pi = 0 with the last equation replaced by sum(pi) = 1.
        let mut a = vec![T::zero(); n * n];
        for i in 0..n {
            for j in 0..n {
                let id = if i == j { T::one() } else { T::zero() };
                a[i * n + j] = self.prob(j, i) - id;
            }
        }
        for j in 0..n {
            a[(n - 1) * n + j] = T::one();
        }
        let mut b = vec![T::zero(); n];
        b[n - 1] = T::one();
        match solve_dense(a, b) {
            Some(pi) if pi.iter().all(|p| p.is_finite()) => {
                pi.into_iter().map(|p| p.max(T::zero())).collect()
            }
            _ => self.cesaro_stationary(),
        }
    }

    fn cesaro_stationary(&self) -> Vec<T> {
        let n = self.n;
        let mut dist = vec![T::one() / cast::<T>(n as f64); n];
        let mut avg = vec![T::zero(); n];
        let iters = 10_000;
        for _ in 0..iters {
            let mut next = vec![T::zero(); n];
            for x in 0..n {
                for &(y, p) in &self.successors[x] {
                    next[y] = next[y] + dist[x] * p;
                }
            }
            for (a, d) in avg.iter_mut().zip(&next) {
                *a = *a + *d;
            }
            dist = next;
        }
        avg.into_iter().map(|a| a / cast::<T>(iters as f64)).collect()
    }

    pub fn to_record(&self) -> MrpRecord {
        MrpRecord {
            gamma: to_f64(self.gamma),
            transition: (0..self.n).map(|x| self.row(x).iter().map(|&p| to_f64(p)).collect()).collect(),
            rewards: self.rewards.iter().map(RewardModel::to_record).collect(),
        }
    }

    pub fn from_record(rec: &MrpRecord) -> Result<Self, MrpError> {
        let rewards = rec
            .rewards
            .iter()
            .map(RewardModel::from_record)
            .collect::<Result<Vec<_>, _>>()?;
        let transition =
            rec.transition.iter().map(|row| row.iter().map(|&p| cast(p)).collect()).collect();
        Mrp::new(transition, rewards, cast(rec.gamma))
    }
}

/// Serialized MRP: nested transition rows, reward records and discount.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MrpRecord {
    pub gamma: f64,
    pub transition: Vec<Vec<f64>>,
    pub rewards: Vec<RewardRecord>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reward::RewardKind;

    fn two_cycle() -> Mrp<f64> {
        Mrp::new(
            vec![vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![RewardModel::point_mass(0.0), RewardModel::point_mass(1.0)],
            0.9,
        )
        .unwrap()
    }

    #[test]
    fn deterministic_step() {
        let mrp = two_cycle();
        let mut rng = RngStream::new(1);
        for _ in 0..10 {
            assert_eq!(mrp.step(0, &mut rng), Transition::new(0, 0.0, 1));
        }
    }

    #[test]
    fn self_loop_stays_put() {
        let mrp = Mrp::new(
            vec![vec![1.0, 0.0], vec![0.5, 0.5]],
            vec![RewardModel::point_mass(0.0), RewardModel::point_mass(1.0)],
            0.5,
        )
        .unwrap();
        let mut rng = RngStream::new(2);
        for _ in 0..100 {
            assert_eq!(mrp.step(0, &mut rng).x_next, 0);
        }
    }

    #[test]
    fn empirical_next_state_frequencies() {
        let row = vec![0.1, 0.25, 0.4, 0.05, 0.2];
        let mrp = Mrp::new(
            vec![row.clone(); 5],
            (0..5).map(|_| RewardModel::point_mass(0.0)).collect(),
            0.9,
        )
        .unwrap();
        let mut rng = RngStream::new(17);
        let n = 100_000;
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[mrp.step(2, &mut rng).x_next] += 1;
        }
        for (c, p) in counts.iter().zip(&row) {
            let freq = *c as f64 / n as f64;
            assert!((freq - p).abs() <= 4.0 * (p * (1.0 - p) / n as f64).sqrt(), "{freq} vs {p}");
        }
    }

    #[test]
    fn two_cycle_value() {
        let v = two_cycle().true_value();
        assert!((v.v[0] - 90.0 / 19.0).abs() < 1e-12);
        assert!((v.v[1] - 100.0 / 19.0).abs() < 1e-12);
    }

    #[test]
    fn constant_rewards_give_constant_value() {
        let rows = vec![vec![0.2, 0.3, 0.5], vec![0.0, 0.0, 1.0], vec![0.6, 0.4, 0.0]];
        let mrp = Mrp::new(rows, vec![RewardModel::<f64>::point_mass(1.5); 3], 0.8).unwrap();
        for v in mrp.true_value().v {
            assert!((v - 1.5 / 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn value_depends_only_on_reward_means() {
        let rows = vec![vec![0.2, 0.3, 0.5], vec![0.0, 0.0, 1.0], vec![0.6, 0.4, 0.0]];
        let means = [0.3, -1.0, 2.0];
        let pm = Mrp::new(rows.clone(), means.iter().map(|&m| RewardModel::point_mass(m)).collect(), 0.9)
            .unwrap();
        let g = Mrp::new(
            rows,
            means.iter().map(|&m| RewardModel::gaussian(m, 2.0).unwrap()).collect(),
            0.9,
        )
        .unwrap();
        assert_eq!(pm.true_value(), g.true_value());
    }

    #[test]
    fn bellman_residual_is_tiny() {
        let mut rng = RngStream::new(4);
        for _ in 0..20 {
            let n = 12;
            let rows: Vec<Vec<f64>> = (0..n)
                .map(|_| {
                    let w: Vec<f64> = (0..n).map(|_| -rng.uniform_open().ln()).collect();
                    let s: f64 = w.iter().sum();
                    w.into_iter().map(|x| x / s).collect()
                })
                .collect();
            let rewards = (0..n).map(|_| RewardModel::point_mass(rng.standard_normal())).collect();
            let mrp = Mrp::new(rows, rewards, 0.95).unwrap();
            let v = mrp.true_value();
            assert!(mrp.bellman(&v).sup_distance(&v) < 1e-9);
        }
    }

    /// Monte-Carlo cross-check against truncated discounted returns.
    #[test]
    fn monte_carlo_returns_match_value() {
        let mrp = Mrp::new(
            vec![vec![0.5, 0.5, 0.0], vec![0.0, 0.3, 0.7], vec![0.9, 0.0, 0.1]],
            vec![
                RewardModel::gaussian(1.0, 1.0).unwrap(),
                RewardModel::exponential(-0.5),
                RewardModel::point_mass(0.25),
            ],
            0.9,
        )
        .unwrap();
        let v = mrp.true_value();
        let horizon = 200;
        let n = 10_000;
        let mut rng = RngStream::new(8);
        for x0 in 0..3 {
            let returns: Vec<f64> = (0..n)
                .map(|_| {
                    let (mut x, mut g, mut disc) = (x0, 0.0, 1.0);
                    for _ in 0..horizon {
                        let t = mrp.step(x, &mut rng);
                        g += disc * t.r;
                        disc *= 0.9;
                        x = t.x_next;
                    }
                    g
                })
                .collect();
            let mean = returns.iter().sum::<f64>() / n as f64;
            let sd = (returns.iter().map(|g| (g - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
            assert!((mean - v.v[x0]).abs() < 4.0 * sd / 100.0, "state {x0}: {mean} vs {}", v.v[x0]);
        }
    }

    #[test]
    fn support_bounds() {
        let pm = Mrp::new(
            vec![vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]],
            vec![RewardModel::point_mass(-1.0), RewardModel::point_mass(0.0), RewardModel::point_mass(2.0)],
            0.9,
        )
        .unwrap();
        assert_eq!(pm.reward_support_bounds(), (-1.0, 2.0));
        let g = Mrp::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![RewardModel::point_mass(0.0), RewardModel::gaussian(0.0, 1.0).unwrap()],
            0.9,
        )
        .unwrap();
        assert_eq!(g.reward_support_bounds(), (f64::NEG_INFINITY, f64::INFINITY));
        let e = Mrp::new(
            vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            vec![RewardModel::exponential(3.0), RewardModel::exponential(0.5)],
            0.9,
        )
        .unwrap();
        assert_eq!(e.reward_support_bounds(), (-0.5, f64::INFINITY));
    }

    #[test]
    fn validation_errors() {
        let r = || vec![RewardModel::point_mass(0.0); 2];
        assert!(matches!(
            Mrp::new(vec![vec![0.5, 0.4], vec![0.0, 1.0]], r(), 0.9),
            Err(MrpError::NotStochastic { row: 0, .. })
        ));
        assert!(matches!(
            Mrp::new(vec![vec![1.5, -0.5], vec![0.0, 1.0]], r(), 0.9),
            Err(MrpError::BadEntry { row: 0, .. })
        ));
        assert!(matches!(
            Mrp::new(vec![vec![1.0, 0.0], vec![0.0, 1.0]], r(), 1.0),
            Err(MrpError::BadDiscount(_))
        ));
        assert!(matches!(
            Mrp::new(vec![vec![1.0], vec![0.0, 1.0]], r(), 0.5),
            Err(MrpError::RaggedRow { row: 0, .. })
        ));
        assert!(matches!(Mrp::<f64>::new(vec![], vec![], 0.5), Err(MrpError::Empty)));
    }

    #[test]
    fn stationary_distribution_of_cycle_is_uniform() {
        let n = 5;
        let rows = (0..n).map(|x| (0..n).map(|y| if y == (x + 1) % n { 1.0 } else { 0.0 }).collect()).collect();
        let mrp = Mrp::new(rows, vec![RewardModel::<f64>::point_mass(0.0); n], 0.9).unwrap();
        for p in mrp.stationary_distribution() {
            assert!((p - 0.2).abs() < 1e-12);
        }
    }

    #[test]
    fn record_round_trip() {
        let mrp = Mrp::new(
            vec![vec![0.25, 0.75], vec![1.0, 0.0]],
            vec![RewardModel::gaussian(0.5, 2.0).unwrap(), RewardModel::student_t2(-1.0)],
            0.9,
        )
        .unwrap();
        let rec = mrp.to_record();
        assert_eq!(rec.rewards[1].kind, RewardKind::StudentT2);
        assert_eq!(Mrp::from_record(&rec).unwrap(), mrp);
    }
}
