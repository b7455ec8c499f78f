//! Fixed points of the projected distributional Bellman operator for QTD and
//! PQTD, their value error, and the closed-form error bounds.
//!
//! The projection takes left quantiles at the midpoint levels. Targets are
//! mixtures `R_x + a_k` with atom shifts `a_k` and weights `w_k`; CDF
//! evaluation and inversion happen in `f64` whatever the table's scalar type.

use std::fmt;

use rayon::prelude::*;

use crate::mrp::Mrp;
use crate::reward::{RewardKind, RewardModel};
use crate::scalar::{cast, to_f64, Real};
use crate::tables::{value_from_quantiles, QuantileTable, ValueTable};

/// Sup-norm change below which iteration stops.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;
pub const DEFAULT_MAX_ITERATIONS: usize = 100_000;
/// Width of the bracket at which root finding stops.
pub const QUANTILE_TOLERANCE: f64 = 1e-10;
/// Slack on cumulative weights when inverting atomic targets.
pub const ATOM_TOLERANCE: f64 = 1e-12;
const TAIL_LEVEL: f64 = 1e-14;
const MAX_DOUBLINGS: usize = 200;
const MAX_ROOT_STEPS: usize = 500;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum DpError {
    /// The quantile bracket could not be widened to contain the target level.
    #[error("bracket expansion failed after {MAX_DOUBLINGS} doublings at state {state}, level {tau}")]
    BracketExpansion { state: usize, tau: f64 },
    /// The table being projected contains NaN or an infinity.
    #[error("non-finite quantile estimates feeding state {state}")]
    NonFinite { state: usize },
    #[error("number of quantiles must be positive")]
    ZeroQuantiles,
}

/// Which operator to iterate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum DpAlgo {
    /// Targets `R + gamma theta(X', J)` with `J` uniform.
    Qtd,
    /// Targets `R + gamma vbar(X')`.
    Pqtd,
}

impl std::str::FromStr for DpAlgo {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "qtd" => Ok(DpAlgo::Qtd),
            "pqtd" => Ok(DpAlgo::Pqtd),
            other => Err(format!("unknown fixed-point algorithm `{other}` (expected qtd or pqtd)")),
        }
    }
}

impl fmt::Display for DpAlgo {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DpAlgo::Qtd => "qtd",
            DpAlgo::Pqtd => "pqtd",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DpOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for DpOptions {
    fn default() -> Self {
        DpOptions { tolerance: DEFAULT_TOLERANCE, max_iterations: DEFAULT_MAX_ITERATIONS }
    }
}

#[derive(Clone, Debug)]
pub struct DpResult<T> {
    pub theta_fixed: QuantileTable<T>,
    pub value: ValueTable<T>,
    /// `max_x |V_m(x) - V(x)|`.
    pub value_error_sup: f64,
    pub iterations: usize,
    /// Sup-norm change made by the last iteration.
    pub residual: f64,
    /// `false` when the iteration cap was reached first.
    pub converged: bool,
}

/// The one-step target distribution at a single state: `R + a` with `a`
/// drawn from weighted atoms.
#[derive(Clone, Debug)]
pub struct TargetMixture {
    kind: RewardKind,
    scale: f64,
    /// Atom positions with the reward mean folded in, ascending.
    shifts: Vec<f64>,
    weights: Vec<f64>,
    /// Offsets of the reward's `TAIL_LEVEL` quantiles from its mean.
    tails: (f64, f64),
    /// Exponential family only: prefix sums of weights, and of
    /// `w_j exp(s_j - s_k)` over `j <= k`.
    prefix: Option<(Vec<f64>, Vec<f64>)>,
}

impl TargetMixture {
    /// Builds the mixture of `reward` shifted by each `(atom, weight)`.
    pub fn new<T: Real>(reward: &RewardModel<T>, atoms: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mean = to_f64(reward.mean());
        let mut pairs: Vec<(f64, f64)> =
            atoms.into_iter().filter(|&(_, w)| w > 0.0).map(|(a, w)| (mean + a, w)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let tails = if reward.is_continuous() {
            let q = |p: f64| to_f64(reward.quantile(cast(p)).expect("tail level is in (0, 1)")) - mean;
            (q(TAIL_LEVEL), q(1.0 - TAIL_LEVEL))
        } else {
            (0.0, 0.0)
        };
        let shifts: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let prefix = (reward.kind() == RewardKind::Exponential).then(|| exponential_prefix(&shifts, &weights));
        TargetMixture { kind: reward.kind(), scale: to_f64(reward.scale()), shifts, weights, tails, prefix }
    }

    /// QTD target at `x`: atoms `gamma theta(x', j)` with weight `P(x, x') / m`.
    pub fn qtd<T: Real>(mrp: &Mrp<T>, theta: &QuantileTable<T>, x: usize) -> Self {
        let g = to_f64(mrp.gamma());
        let m = theta.m() as f64;
        let atoms = mrp.successors(x).iter().flat_map(|&(y, p)| {
            let w = to_f64(p) / m;
            theta.row(y).iter().map(move |&q| (g * to_f64(q), w))
        });
        Self::new(mrp.reward(x), atoms)
    }

    /// PQTD target at `x`: atoms `gamma vbar(x')` with weight `P(x, x')`.
    pub fn pqtd<T: Real>(mrp: &Mrp<T>, theta: &QuantileTable<T>, x: usize) -> Self {
        let g = to_f64(mrp.gamma());
        let atoms = mrp.successors(x).iter().map(|&(y, p)| (g * to_f64(theta.row_mean(y)), to_f64(p)));
        Self::new(mrp.reward(x), atoms)
    }

    fn is_finite(&self) -> bool {
        self.shifts.iter().all(|s| s.is_finite())
    }

    /// `P(target <= z)`.
    pub fn cdf(&self, z: f64) -> f64 {
        match self.kind {
            RewardKind::PointMass => {
                let k = self.shifts.partition_point(|&s| s <= z);
                self.weights[..k].iter().sum()
            }
            _ => self.eval(z).0,
        }
    }

    /// `P(target < z)`.
    pub fn cdf_left(&self, z: f64) -> f64 {
        match self.kind {
            RewardKind::PointMass => {
                let k = self.shifts.partition_point(|&s| s < z);
                self.weights[..k].iter().sum()
            }
            _ => self.eval(z).0,
        }
    }

    /// CDF and density of a continuous mixture at `z`.
    fn eval(&self, z: f64) -> (f64, f64) {
        let mut c = 0.0;
        let mut d = 0.0;
        match self.kind {
            RewardKind::Gaussian => {
                let inv = 1.0 / self.scale;
                let k = INV_SQRT_2PI * inv;
                // beyond GAUSS_CUTOFF standard deviations a component's CDF
                // rounds to 0 or 1 and its density is below 1e-16
                let reach = GAUSS_CUTOFF * self.scale;
                let a = self.shifts.partition_point(|&s| s < z - reach);
                let b = self.shifts.partition_point(|&s| s <= z + reach);
                c = self.weights[..a].iter().sum();
                for (&s, &w) in self.shifts[a..b].iter().zip(&self.weights[a..b]) {
                    let u = (z - s) * inv;
                    c += w * 0.5 * statrs::function::erf::erfc(-u * FRAC_1_SQRT_2);
                    d += w * k * (-0.5 * u * u).exp();
                }
            }
            RewardKind::Exponential => {
                // atoms with s < z + 1 are active; their densities share the
                // factor exp(-(z + 1 - s)) up to the stored prefix ratios
                let k = self.shifts.partition_point(|&s| s < z + 1.0);
                if k > 0 {
                    let (cum_w, cum_e) = self.prefix.as_ref().expect("built for exponential mixtures");
                    d = cum_e[k - 1] * (-(z + 1.0 - self.shifts[k - 1])).exp();
                    c = cum_w[k - 1] - d;
                }
            }
            RewardKind::StudentT2 => {
                for (&s, &w) in self.shifts.iter().zip(&self.weights) {
                    let u = z - s;
                    let q = u * u + 2.0;
                    let r = q.sqrt();
                    // lower tail written to avoid cancellation
                    c += w * if u < 0.0 { 1.0 / (r * (r - u)) } else { 0.5 + 0.5 * u / r };
                    d += w / (q * r);
                }
            }
            RewardKind::PointMass => unreachable!("atomic targets are inverted by walking"),
        }
        (c, d)
    }

    /// Upper bound on `|F''|` for smooth mixtures (total weight one).
    fn curvature_bound(&self) -> Option<f64> {
        match self.kind {
            // max |phi'| = phi(1) / sigma^2
            RewardKind::Gaussian => Some(0.241_970_724_519_143_37 / (self.scale * self.scale)),
            // max |d/du (u^2 + 2)^{-3/2}|, attained at u^2 = 1/2
            RewardKind::StudentT2 => Some(0.214_663_676_938_002_3),
            _ => None,
        }
    }

    /// Whether the point after a Newton step `step` taken with slope `d` is
    /// provably within half the quantile tolerance of the root.
    fn newton_accept(&self, step: f64, d: f64) -> bool {
        match self.curvature_bound() {
            Some(m2) => {
                let slope = d - 2.0 * m2 * step.abs();
                slope > 0.0 && m2 * step * step / (2.0 * slope) <= 0.5 * QUANTILE_TOLERANCE
            }
            None => step.abs() <= 0.1 * QUANTILE_TOLERANCE,
        }
    }

    /// Left quantile at `tau` with an optional starting guess.
    pub fn quantile(&self, tau: f64, start: Option<f64>) -> Option<f64> {
        let mut out = [0.0];
        self.quantiles(&[tau], &[start.unwrap_or(f64::NAN)], &mut out).ok()?;
        Some(out[0])
    }

    /// Left quantiles at ascending levels `taus`, using `start[i]` as the
    /// first guess for level `i` (NaN for none).
    fn quantiles(&self, taus: &[f64], start: &[f64], out: &mut [f64]) -> Result<(), f64> {
        if self.kind == RewardKind::PointMass {
            let mut cum = 0.0;
            let mut k = 0;
            let last = self.shifts.len() - 1;
            for (o, &tau) in out.iter_mut().zip(taus) {
                while k < last && cum + self.weights[k] < tau - ATOM_TOLERANCE {
                    cum += self.weights[k];
                    k += 1;
                }
                *o = self.shifts[k];
            }
            return Ok(());
        }
        let lo0 = self.shifts[0] + self.tails.0;
        let hi0 = self.shifts[self.shifts.len() - 1] + self.tails.1;
        let mut floor = lo0;
        for ((o, &tau), &s) in out.iter_mut().zip(taus).zip(start) {
            let lo = floor.max(lo0).min(hi0);
            let mut z = self.root(tau, s, lo, hi0);
            if z - lo0 <= 2.0 * QUANTILE_TOLERANCE || hi0 - z <= 2.0 * QUANTILE_TOLERANCE {
                let (lo, hi) = self.verified_bracket(tau, lo0, hi0).ok_or(tau)?;
                z = self.root(tau, z, lo, hi);
            }
            *o = z;
            floor = z;
        }
        Ok(())
    }

    /// Newton iteration safeguarded by bisection on `[lo, hi]`.
    fn root(&self, tau: f64, start: f64, mut lo: f64, mut hi: f64) -> f64 {
        let mut x = if start.is_finite() { start.clamp(lo, hi) } else { 0.5 * (lo + hi) };
        let mut prev_gap = f64::INFINITY;
        for _ in 0..MAX_ROOT_STEPS {
            let (c, d) = self.eval(x);
            let f = c - tau;
            if f == 0.0 {
                return x;
            }
            if f > 0.0 {
                hi = x;
            } else {
                lo = x;
            }
            if hi - lo < QUANTILE_TOLERANCE {
                return 0.5 * (lo + hi);
            }
            let mut next = x - f / d;
            // stalled progress or a step leaving the bracket: bisect
            if !(next > lo && next < hi) || f.abs() > 0.5 * prev_gap {
                next = 0.5 * (lo + hi);
            } else if self.newton_accept(next - x, d) {
                return next;
            }
            prev_gap = f.abs();
            x = next;
        }
        0.5 * (lo + hi)
    }

    fn verified_bracket(&self, tau: f64, mut lo: f64, mut hi: f64) -> Option<(f64, f64)> {
        let mut width = (hi - lo).max(1.0);
        let mut n = 0;
        while self.eval(lo).0 >= tau {
            lo -= width;
            width *= 2.0;
            n += 1;
            if n > MAX_DOUBLINGS || !lo.is_finite() {
                return None;
            }
        }
        let mut width = (hi - lo).max(1.0);
        let mut n = 0;
        while self.eval(hi).0 < tau {
            hi += width;
            width *= 2.0;
            n += 1;
            if n > MAX_DOUBLINGS || !hi.is_finite() {
                return None;
            }
        }
        Some((lo, hi))
    }
}

fn exponential_prefix(shifts: &[f64], weights: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut cum_w = Vec::with_capacity(shifts.len());
    let mut cum_e = Vec::with_capacity(shifts.len());
    let (mut w_acc, mut e_acc) = (0.0, 0.0);
    for (k, (&s, &w)) in shifts.iter().zip(weights).enumerate() {
        if k > 0 {
            e_acc *= (shifts[k - 1] - s).exp();
        }
        w_acc += w;
        e_acc += w;
        cum_w.push(w_acc);
        cum_e.push(e_acc);
    }
    (cum_w, cum_e)
}

const GAUSS_CUTOFF: f64 = 8.5;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// QTD target CDF `F(z) = sum_{x'} P(x, x') (1/m) sum_j P(R_x <= z - gamma theta(x', j))`.
pub fn target_cdf<T: Real>(mrp: &Mrp<T>, theta: &QuantileTable<T>, x: usize, z: T) -> T {
    cast(TargetMixture::qtd(mrp, theta, x).cdf(to_f64(z)))
}

/// Left `tau`-quantile of the QTD target at `x`.
pub fn target_quantile<T: Real>(mrp: &Mrp<T>, theta: &QuantileTable<T>, x: usize, tau: T) -> Result<T, DpError> {
    let mix = TargetMixture::qtd(mrp, theta, x);
    if !mix.is_finite() {
        return Err(DpError::NonFinite { state: x });
    }
    let t = to_f64(tau);
    mix.quantile(t, None).map(cast).ok_or(DpError::BracketExpansion { state: x, tau: t })
}

/// One application of the projected operator, warm-started from `theta`.
pub fn dp_iterate<T: Real>(mrp: &Mrp<T>, theta: &QuantileTable<T>, algo: DpAlgo) -> Result<QuantileTable<T>, DpError> {
    let m = theta.m();
    let taus: Vec<f64> = theta.tau().iter().map(|&t| to_f64(t)).collect();
    let rows: Vec<Result<Vec<T>, DpError>> = (0..theta.n_states())
        .into_par_iter()
        .map(|x| {
            let mix = match algo {
                DpAlgo::Qtd => TargetMixture::qtd(mrp, theta, x),
                DpAlgo::Pqtd => TargetMixture::pqtd(mrp, theta, x),
            };
            if !mix.is_finite() {
                return Err(DpError::NonFinite { state: x });
            }
            let start: Vec<f64> = theta.row(x).iter().map(|&q| to_f64(q)).collect();
            let mut out = vec![0.0; m];
            mix.quantiles(&taus, &start, &mut out)
                .map_err(|tau| DpError::BracketExpansion { state: x, tau })?;
            Ok(out.into_iter().map(cast).collect())
        })
        .collect();
    let mut flat = Vec::with_capacity(theta.n_states() * m);
    for r in rows {
        flat.extend(r?);
    }
    Ok(QuantileTable::from_rows(theta.n_states(), m, flat))
}

pub fn qdp_iterate<T: Real>(mrp: &Mrp<T>, theta: &QuantileTable<T>) -> Result<QuantileTable<T>, DpError> {
    dp_iterate(mrp, theta, DpAlgo::Qtd)
}

pub fn pqtd_iterate<T: Real>(mrp: &Mrp<T>, theta: &QuantileTable<T>) -> Result<QuantileTable<T>, DpError> {
    dp_iterate(mrp, theta, DpAlgo::Pqtd)
}

/// Iterates the chosen operator from the all-zero table until the sup-norm
/// change drops below `opts.tolerance` or the cap is hit.
pub fn fixed_point<T: Real>(mrp: &Mrp<T>, m: usize, algo: DpAlgo, opts: DpOptions) -> Result<DpResult<T>, DpError> {
    if m == 0 {
        return Err(DpError::ZeroQuantiles);
    }
    let mut theta = QuantileTable::zeros(mrp.n_states(), m);
    let mut residual = f64::INFINITY;
    let mut iterations = 0;
    while iterations < opts.max_iterations {
        let next = dp_iterate(mrp, &theta, algo)?;
        residual = to_f64(next.sup_distance(&theta));
        theta = next;
        iterations += 1;
        if residual < opts.tolerance {
            break;
        }
    }
    let value = value_from_quantiles(&theta);
    let truth = mrp.true_value();
    let value_error_sup = to_f64(value.sup_distance(&truth));
    Ok(DpResult { theta_fixed: theta, value, value_error_sup, iterations, residual, converged: residual < opts.tolerance })
}

pub fn qdp_fixed_point<T: Real>(mrp: &Mrp<T>, m: usize) -> Result<DpResult<T>, DpError> {
    fixed_point(mrp, m, DpAlgo::Qtd, DpOptions::default())
}

pub fn pqtd_fixed_point<T: Real>(mrp: &Mrp<T>, m: usize) -> Result<DpResult<T>, DpError> {
    fixed_point(mrp, m, DpAlgo::Pqtd, DpOptions::default())
}

/// `(R_max - R_min) / (2 m (1 - gamma)^2)` over reward supports; `+inf` if
/// any reward is unbounded.
pub fn bound_bounded_support<T: Real>(mrp: &Mrp<T>, m: usize) -> f64 {
    let (lo, hi) = mrp.reward_support_bounds();
    let (lo, hi) = (to_f64(lo), to_f64(hi));
    if !(lo.is_finite() && hi.is_finite()) {
        return f64::INFINITY;
    }
    let c = 1.0 - to_f64(mrp.gamma());
    (hi - lo) / (2.0 * c * c * m as f64)
}

/// Sub-Gaussian bound
/// `(r_max - r_min + 2 sigma s) / (2 (1 - gamma)^2 m) + sigma / (s (1 - gamma) m)`
/// with `s = sqrt(2 ln 2m)`.
pub fn bound_sub_gaussian(r_min: f64, r_max: f64, sigma: f64, gamma: f64, m: usize) -> f64 {
    let c = 1.0 - gamma;
    let mf = m as f64;
    let s = (2.0 * (2.0 * mf).ln()).sqrt();
    (r_max - r_min + 2.0 * sigma * s) / (2.0 * c * c * mf) + sigma / (s * c * mf)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BoundReport {
    pub bound_41: f64,
    pub bound_42: f64,
    pub observed_error: f64,
}

impl BoundReport {
    /// Whether the observed error respects every finite bound within `slack`.
    pub fn satisfied(&self, slack: f64) -> bool {
        self.observed_error <= self.bound_41 + slack && self.observed_error <= self.bound_42 + slack
    }
}

/// Both bounds for `mrp` at `m` next to an observed error. The sub-Gaussian
/// bound uses reward means for `r_min`, `r_max` and the largest variance
/// proxy; it is `+inf` unless every reward is sub-Gaussian.
pub fn bound_report<T: Real>(mrp: &Mrp<T>, m: usize, observed_error: f64) -> BoundReport {
    let sigma = mrp
        .rewards()
        .iter()
        .map(|r| r.sub_gaussian_sigma().map(to_f64))
        .try_fold(0.0f64, |acc, s| s.map(|s| acc.max(s)));
    let bound_42 = match sigma {
        Some(sigma) => {
            let (lo, hi) = mrp.reward_mean_bounds();
            bound_sub_gaussian(to_f64(lo), to_f64(hi), sigma, to_f64(mrp.gamma()), m)
        }
        None => f64::INFINITY,
    };
    BoundReport { bound_41: bound_bounded_support(mrp, m), bound_42, observed_error }
}

/// One row of a fixed-point error curve.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorPoint {
    pub m: usize,
    pub value_error_sup: f64,
    pub iterations: usize,
    pub residual: f64,
    pub converged: bool,
    pub bounds: BoundReport,
}

/// Fixed-point value error for each `m`, computed in parallel.
pub fn fixed_point_error_curve<T: Real>(mrp: &Mrp<T>, m_list: &[usize], algo: DpAlgo) -> Result<Vec<ErrorPoint>, DpError> {
    fixed_point_error_curve_with(mrp, m_list, algo, DpOptions::default())
}

pub fn fixed_point_error_curve_with<T: Real>(
    mrp: &Mrp<T>,
    m_list: &[usize],
    algo: DpAlgo,
    opts: DpOptions,
) -> Result<Vec<ErrorPoint>, DpError> {
    m_list
        .par_iter()
        .map(|&m| {
            let r = fixed_point(mrp, m, algo, opts)?;
            Ok(ErrorPoint {
                m,
                value_error_sup: r.value_error_sup,
                iterations: r.iterations,
                residual: r.residual,
                converged: r.converged,
                bounds: bound_report(mrp, m, r.value_error_sup),
            })
        })
        .collect()
}
