//! Per-state value estimates and per-state quantile estimates.

use crate::scalar::{compensated_sum, from_usize, to_f64, Scalar};

/// Per-state scalar value estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct ValueTable<T> {
    pub v: Vec<T>,
}

impl<T: Scalar> ValueTable<T> {
    pub fn zeros(n_states: usize) -> Self {
        ValueTable { v: vec![T::zero(); n_states] }
    }

    pub fn from_vec(v: Vec<T>) -> Self {
        ValueTable { v }
    }

    pub fn n_states(&self) -> usize {
        self.v.len()
    }

    /// `max_x |self(x) - other(x)|`.
    pub fn sup_distance(&self, other: &ValueTable<T>) -> T {
        self.v
            .iter()
            .zip(&other.v)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), |acc, d| if d > acc { d } else { acc })
    }

    /// Weighted squared error `sum_x w(x) (self(x) - truth(x))^2`, in `f64`.
    /// Returns `+inf` if any estimate is non-finite.
    pub fn weighted_sq_error(&self, truth: &ValueTable<T>, weights: &[f64]) -> f64 {
        let mut total = 0.0;
        for ((&a, &b), &w) in self.v.iter().zip(&truth.v).zip(weights) {
            let a = to_f64(a);
            if !a.is_finite() {
                return f64::INFINITY;
            }
            let d = a - to_f64(b);
            total += w * d * d;
        }
        total
    }

    pub fn is_finite(&self) -> bool {
        self.v.iter().all(|&x| to_f64(x).is_finite())
    }
}

/// Quantile estimates `theta(x, i)` for `x` in states and `i` in `0..m`,
/// stored row-major, together with the levels `tau_i = (2i + 1) / (2m)`
/// (zero-based `i`).
///
/// Rows are not required to be sorted; crossing quantiles are left as-is.
#[derive(Clone, Debug, PartialEq)]
pub struct QuantileTable<T> {
    n_states: usize,
    m: usize,
    theta: Vec<T>,
    tau: Vec<T>,
}

/// Midpoint levels `(2i - 1) / (2m)` for `i = 1..=m`.
pub fn quantile_levels<T: Scalar>(m: usize) -> Vec<T> {
    let denom = from_usize::<T>(2 * m);
    (0..m).map(|i| from_usize::<T>(2 * i + 1) / denom).collect()
}

impl<T: Scalar> QuantileTable<T> {
    /// All-zero table. Panics if `m == 0`.
    pub fn zeros(n_states: usize, m: usize) -> Self {
        assert!(m >= 1, "number of quantiles must be positive");
        QuantileTable { n_states, m, theta: vec![T::zero(); n_states * m], tau: quantile_levels(m) }
    }

    /// Builds a table from row-major values. Panics on a length mismatch.
    pub fn from_rows(n_states: usize, m: usize, theta: Vec<T>) -> Self {
        assert!(m >= 1, "number of quantiles must be positive");
        assert_eq!(theta.len(), n_states * m, "table has wrong number of entries");
        QuantileTable { n_states, m, theta, tau: quantile_levels(m) }
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn tau(&self) -> &[T] {
        &self.tau
    }

    #[inline]
    pub fn get(&self, x: usize, i: usize) -> T {
        self.theta[x * self.m + i]
    }

    #[inline]
    pub fn set(&mut self, x: usize, i: usize, value: T) {
        self.theta[x * self.m + i] = value;
    }

    #[inline]
    pub fn row(&self, x: usize) -> &[T] {
        &self.theta[x * self.m..(x + 1) * self.m]
    }

    #[inline]
    pub fn row_mut(&mut self, x: usize) -> &mut [T] {
        &mut self.theta[x * self.m..(x + 1) * self.m]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.theta
    }

    /// Mean of one row (compensated summation).
    pub fn row_mean(&self, x: usize) -> T {
        compensated_sum(self.row(x).iter().copied()) / from_usize(self.m)
    }

    /// `v(x) = (1/m) sum_i theta(x, i)`.
    pub fn values(&self) -> ValueTable<T> {
        ValueTable { v: (0..self.n_states).map(|x| self.row_mean(x)).collect() }
    }

    /// `max |self - other|` over all entries.
    pub fn sup_distance(&self, other: &QuantileTable<T>) -> T {
        self.theta
            .iter()
            .zip(&other.theta)
            .map(|(&a, &b)| (a - b).abs())
            .fold(T::zero(), |acc, d| if d > acc { d } else { acc })
    }
}

/// Free-function form of [`QuantileTable::values`].
pub fn value_from_quantiles<T: Scalar>(theta: &QuantileTable<T>) -> ValueTable<T> {
    theta.values()
}
