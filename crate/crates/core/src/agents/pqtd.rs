use crate::mrp::Transition;
use crate::scalar::Scalar;
use crate::tables::QuantileTable;

/// PQTD increments at state `t.x`: each quantile regresses on the single
/// one-step target `r + gamma vbar(x')`, where `vbar(x')` is the mean of the
/// next state's quantile estimates. Each increment is `alpha tau_i` or
/// `alpha (tau_i - 1)`.
pub fn pqtd_increments<T: Scalar>(
    theta: &QuantileTable<T>,
    t: &Transition<T>,
    alpha: T,
    gamma: T,
) -> Vec<T> {
    let boot = gamma * theta.row_mean(t.x_next);
    increments_against(theta, t, alpha, boot)
}

pub(crate) fn increments_against<T: Scalar>(
    theta: &QuantileTable<T>,
    t: &Transition<T>,
    alpha: T,
    boot: T,
) -> Vec<T> {
    theta
        .row(t.x)
        .iter()
        .zip(theta.tau())
        .map(|(&q, &tau)| {
            if q - t.r - boot > T::zero() {
                alpha * (tau - T::one())
            } else {
                alpha * tau
            }
        })
        .collect()
}

/// Buffered PQTD update.
pub fn pqtd_update<T: Scalar>(theta: &mut QuantileTable<T>, t: &Transition<T>, alpha: T, gamma: T) {
    let inc = pqtd_increments(theta, t, alpha, gamma);
    for (q, d) in theta.row_mut(t.x).iter_mut().zip(inc) {
        *q = *q + d;
    }
}
