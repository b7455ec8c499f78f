//! Expected-update and noise decompositions of a single sampled update at a
//! fixed state, computed exactly where the reward CDF allows and by Monte
//! Carlo for the noise.

use crate::mrp::Mrp;
use crate::rng::RngStream;
use crate::scalar::{compensated_sum, from_usize, to_f64, Real};
use crate::tables::{QuantileTable, ValueTable};

/// Default number of Monte-Carlo samples for the noise estimate.
pub const NOISE_SAMPLES: usize = 10_000;

/// Expected increment per unit step size, and the variance of the sampled
/// increment around it.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UpdateDiagnostics {
    pub expected: f64,
    pub noise_variance: f64,
}

/// `(T V)(x) - V(x)` and the variance of `r + gamma V(x') - V(x)`.
pub fn td_expected_update<T: Real>(
    mrp: &Mrp<T>,
    v: &ValueTable<T>,
    x: usize,
    n_samples: usize,
    rng: &mut RngStream,
) -> UpdateDiagnostics {
    let expected = to_f64(mrp.bellman(v).v[x] - v.v[x]);
    let g = mrp.gamma();
    let noise = sample_variance(n_samples, expected, || {
        let t = mrp.step(x, rng);
        to_f64(t.r + g * v.v[t.x_next] - v.v[x])
    });
    UpdateDiagnostics { expected, noise_variance: noise }
}

/// Expected QTD increment for coordinate `i` at state `x`:
/// `tau_i - sum_{x'} P(x, x') (1/m) sum_j P(r + gamma theta(x', j) < theta(x, i))`.
pub fn qtd_expected_update<T: Real>(
    mrp: &Mrp<T>,
    theta: &QuantileTable<T>,
    x: usize,
    i: usize,
    n_samples: usize,
    rng: &mut RngStream,
) -> UpdateDiagnostics {
    let g = mrp.gamma();
    let m = from_usize::<T>(theta.m());
    let q = theta.get(x, i);
    let rm = mrp.reward(x);
    let below = compensated_sum(mrp.successors(x).iter().map(|&(y, p)| {
        p * compensated_sum(theta.row(y).iter().map(|&b| rm.cdf_left(q - g * b))) / m
    }));
    let tau = theta.tau()[i];
    let expected = to_f64(tau - below);
    let noise = sample_variance(n_samples, expected, || {
        let t = mrp.step(x, rng);
        let shifted = q - t.r;
        let k = theta.row(t.x_next).iter().filter(|&&b| shifted - g * b > T::zero()).count();
        to_f64(tau - from_usize::<T>(k) / m)
    });
    UpdateDiagnostics { expected, noise_variance: noise }
}

/// Expected PQTD increment for coordinate `i` at state `x`:
/// `tau_i - sum_{x'} P(x, x') P(r + gamma vbar(x') < theta(x, i))`.
pub fn pqtd_expected_update<T: Real>(
    mrp: &Mrp<T>,
    theta: &QuantileTable<T>,
    x: usize,
    i: usize,
    n_samples: usize,
    rng: &mut RngStream,
) -> UpdateDiagnostics {
    let g = mrp.gamma();
    let q = theta.get(x, i);
    let rm = mrp.reward(x);
    let below = compensated_sum(
        mrp.successors(x).iter().map(|&(y, p)| p * rm.cdf_left(q - g * theta.row_mean(y))),
    );
    let tau = theta.tau()[i];
    let expected = to_f64(tau - below);
    let noise = sample_variance(n_samples, expected, || {
        let t = mrp.step(x, rng);
        let fired = q - t.r - g * theta.row_mean(t.x_next) > T::zero();
        to_f64(if fired { tau - T::one() } else { tau })
    });
    UpdateDiagnostics { expected, noise_variance: noise }
}

fn sample_variance(n: usize, center: f64, mut draw: impl FnMut() -> f64) -> f64 {
    if n == 0 {
        return f64::NAN;
    }
    let sq: Vec<f64> = (0..n).map(|_| (draw() - center).powi(2)).collect();
    crate::scalar::pairwise_sum(&sq) / n as f64
}
