use std::cmp::Ordering;

use crate::mrp::Transition;
use crate::scalar::{from_usize, Scalar};
use crate::tables::QuantileTable;

/// `alpha (tau - below / m)`, shared by every QTD code path so that they
/// agree bitwise.
#[inline]
pub(crate) fn quantile_step<T: Scalar>(alpha: T, tau: T, below: usize, m: T) -> T {
    alpha * (tau - from_usize::<T>(below) / m)
}

/// Number of bootstrap values `gamma theta(x', j)` lying strictly below
/// `shifted = theta(x, i) - r`, counted by direct comparison.
#[inline]
fn count_below_naive<T: Scalar>(shifted: T, next_row: &[T], gamma: T) -> usize {
    next_row.iter().filter(|&&q| shifted - gamma * q > T::zero()).count()
}

/// Same count against an ascending slice of bootstrap values.
#[inline]
pub(crate) fn count_below_sorted<T: Scalar>(shifted: T, sorted_boot: &[T]) -> usize {
    sorted_boot.partition_point(|&b| b < shifted)
}

/// QTD increment for coordinate `i` at state `t.x`, reading `theta` as is.
pub fn qtd_increment_at<T: Scalar>(
    theta: &QuantileTable<T>,
    t: &Transition<T>,
    alpha: T,
    gamma: T,
    i: usize,
) -> T {
    let m = from_usize::<T>(theta.m());
    let shifted = theta.get(t.x, i) - t.r;
    let below = count_below_naive(shifted, theta.row(t.x_next), gamma);
    quantile_step(alpha, theta.tau()[i], below, m)
}

/// All `m` QTD increments at state `t.x`, by the `O(m^2)` double loop.
pub fn qtd_increments<T: Scalar>(
    theta: &QuantileTable<T>,
    t: &Transition<T>,
    alpha: T,
    gamma: T,
) -> Vec<T> {
    (0..theta.m()).map(|i| qtd_increment_at(theta, t, alpha, gamma, i)).collect()
}

/// Reference QTD update:
/// `theta(x, i) += alpha (tau_i - (1/m) sum_j 1[r + gamma theta(x', j) < theta(x, i)])`.
pub fn qtd_update<T: Scalar>(theta: &mut QuantileTable<T>, t: &Transition<T>, alpha: T, gamma: T) {
    let inc = qtd_increments(theta, t, alpha, gamma);
    for (q, d) in theta.row_mut(t.x).iter_mut().zip(inc) {
        *q = *q + d;
    }
}

/// Reusable buffers for [`qtd_update_fast`].
#[derive(Clone, Debug, Default)]
pub struct QtdScratch<T> {
    sorted: Vec<T>,
    increments: Vec<T>,
}

impl<T: Scalar> QtdScratch<T> {
    pub fn new() -> Self {
        QtdScratch { sorted: Vec::new(), increments: Vec::new() }
    }
}

/// Fills `out` with the ascending bootstrap values `gamma theta(x', .)`.
/// Returns `false` (leaving `out` unsorted) if any value is NaN.
pub(crate) fn sorted_bootstrap<T: Scalar>(row: &[T], gamma: T, out: &mut Vec<T>) -> bool {
    out.clear();
    out.extend(row.iter().map(|&q| gamma * q));
    #[allow(clippy::eq_op)]
    if out.iter().any(|&b| b != b) {
        return false;
    }
    out.sort_unstable_by(|a, b| a.partial_cmp(b).unwrap_or(Ordering::Equal));
    true
}

/// QTD update in `O(m log m)`: sorts the bootstrap values once and counts
/// by binary search. Bitwise identical to [`qtd_update`].
pub fn qtd_update_fast<T: Scalar>(
    theta: &mut QuantileTable<T>,
    t: &Transition<T>,
    alpha: T,
    gamma: T,
    scratch: &mut QtdScratch<T>,
) {
    if !sorted_bootstrap(theta.row(t.x_next), gamma, &mut scratch.sorted) {
        qtd_update(theta, t, alpha, gamma);
        return;
    }
    let m = from_usize::<T>(theta.m());
    scratch.increments.clear();
    for (i, &tau) in theta.tau().iter().enumerate() {
        let below = count_below_sorted(theta.get(t.x, i) - t.r, &scratch.sorted);
        scratch.increments.push(quantile_step(alpha, tau, below, m));
    }
    for (q, &d) in theta.row_mut(t.x).iter_mut().zip(&scratch.increments) {
        *q = *q + d;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Rational64;
    use proptest::prelude::*;

    #[test]
    fn all_targets_above() {
        // r + gamma * 0 = 1 > 0 = theta: no indicator fires
        let mut theta = QuantileTable::zeros(2, 2);
        qtd_update(&mut theta, &Transition::new(0, 1.0, 1), 0.1, 0.9);
        assert_eq!(theta.row(0), &[0.1 * 0.25, 0.1 * 0.75]);
        assert_eq!(theta.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn all_targets_below() {
        let mut theta = QuantileTable::zeros(2, 2);
        qtd_update(&mut theta, &Transition::new(0, -1.0, 1), 0.1, 0.9);
        assert_eq!(theta.row(0), &[0.1 * (0.25 - 1.0), 0.1 * (0.75 - 1.0)]);
    }

    #[test]
    fn exact_rational_update() {
        let mut theta = QuantileTable::<Rational64>::zeros(2, 2);
        let alpha = Rational64::new(1, 2);
        qtd_update(&mut theta, &Transition::new(0, Rational64::from_integer(-1), 1), alpha, Rational64::new(9, 10));
        assert_eq!(theta.row(0), &[Rational64::new(-3, 8), Rational64::new(-1, 8)]);
    }

    #[test]
    fn zero_step_size_is_identity() {
        let mut theta = QuantileTable::from_rows(2, 3, vec![0.5, -1.0, 2.0, 3.0, 1.0, 0.0]);
        let before = theta.clone();
        qtd_update(&mut theta, &Transition::new(1, 0.3, 0), 0.0, 0.9);
        assert_eq!(theta, before);
    }

    #[test]
    fn ties_do_not_count() {
        // theta(0, i) - r equals gamma * theta(1, 0) exactly for i = 0
        let mut theta = QuantileTable::from_rows(2, 2, vec![1.5, 4.0, 1.0, 10.0]);
        let t = Transition::new(0, 0.5, 1);
        let inc = qtd_increments(&theta, &t, 1.0, 1.0);
        // i = 0: shifted 1.0, targets {1.0, 10.0}: none strictly below
        assert_eq!(inc[0], 0.25);
        // i = 1: shifted 3.5, one target below
        assert_eq!(inc[1], 0.75 - 0.5);
        let mut fast = theta.clone();
        qtd_update_fast(&mut fast, &t, 1.0, 1.0, &mut QtdScratch::new());
        qtd_update(&mut theta, &t, 1.0, 1.0);
        assert_eq!(fast, theta);
    }

    #[test]
    fn self_loop_reads_pre_update_row() {
        let theta = QuantileTable::from_rows(1, 3, vec![0.0, 1.0, 2.0]);
        let t = Transition::new(0, 0.0, 0);
        let expected: Vec<f64> = (0..3).map(|i| qtd_increment_at(&theta, &t, 0.5, 0.5, i)).collect();
        let mut updated = theta.clone();
        qtd_update(&mut updated, &t, 0.5, 0.5);
        for i in 0..3 {
            assert_eq!(updated.get(0, i), theta.get(0, i) + expected[i]);
        }
    }

    #[test]
    fn nan_row_falls_back_to_reference() {
        let mut a = QuantileTable::from_rows(2, 2, vec![0.0, 1.0, f64::NAN, 2.0]);
        let mut b = a.clone();
        let t = Transition::new(0, 0.1, 1);
        qtd_update(&mut a, &t, 0.3, 0.9);
        qtd_update_fast(&mut b, &t, 0.3, 0.9, &mut QtdScratch::new());
        assert_eq!(a.row(0), b.row(0));
    }

    fn table_strategy() -> impl Strategy<Value = (QuantileTable<f64>, Transition<f64>, f64, f64)> {
        (1usize..12, 1usize..4).prop_flat_map(|(m, n)| {
            (
                prop::collection::vec(prop::sample::select(vec![-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 3.0]), n * m),
                0..n,
                0..n,
                prop::sample::select(vec![-1.0, 0.0, 0.5, 1.0]),
                0.0f64..2.0,
                prop::sample::select(vec![0.0, 0.5, 1.0]),
            )
                .prop_map(move |(vals, x, y, r, alpha, gamma)| {
                    (QuantileTable::from_rows(n, m, vals), Transition::new(x, r, y), alpha, gamma)
                })
        })
    }

    proptest! {
        #[test]
        fn fast_matches_reference_with_ties((theta, t, alpha, gamma) in table_strategy()) {
            let mut a = theta.clone();
            let mut b = theta.clone();
            qtd_update(&mut a, &t, alpha, gamma);
            qtd_update_fast(&mut b, &t, alpha, gamma, &mut QtdScratch::new());
            prop_assert_eq!(a.as_slice(), b.as_slice());
        }

        #[test]
        fn order_independent((theta, t, alpha, gamma) in table_strategy(), seed in any::<u64>()) {
            let m = theta.m();
            let mut order: Vec<usize> = (0..m).collect();
            // deterministic shuffle
            let mut s = seed;
            for k in (1..m).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                order.swap(k, (s >> 33) as usize % (k + 1));
            }
            let mut buffered = vec![0.0; m];
            for &i in &order {
                buffered[i] = qtd_increment_at(&theta, &t, alpha, gamma, i);
            }
            let mut permuted = theta.clone();
            for &i in &order {
                permuted.set(t.x, i, theta.get(t.x, i) + buffered[i]);
            }
            let mut reference = theta.clone();
            qtd_update(&mut reference, &t, alpha, gamma);
            prop_assert_eq!(permuted.as_slice(), reference.as_slice());
        }

        #[test]
        fn increments_are_bounded((theta, t, alpha, gamma) in table_strategy()) {
            for (i, d) in qtd_increments(&theta, &t, alpha, gamma).into_iter().enumerate() {
                let tau = theta.tau()[i];
                prop_assert!(d.abs() <= alpha * tau.max(1.0 - tau));
                prop_assert!(d.abs() <= alpha);
            }
        }
    }
}
