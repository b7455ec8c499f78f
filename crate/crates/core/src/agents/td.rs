use crate::mrp::Transition;
use crate::scalar::Scalar;
use crate::tables::ValueTable;

/// `v(x) <- v(x) + alpha (r + gamma v(x') - v(x))`.
#[inline]
pub fn td_update<T: Scalar>(v: &mut ValueTable<T>, t: &Transition<T>, alpha: T, gamma: T) {
    let vx = v.v[t.x];
    v.v[t.x] = vx + alpha * (t.r + gamma * v.v[t.x_next] - vx);
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_bootstrap() {
        let mut v = ValueTable::zeros(3);
        td_update(&mut v, &Transition::new(1, 1.0, 2), 1.0, 0.9);
        assert_eq!(v.v, vec![0.0, 1.0, 0.0]);
    }

    #[test]
    fn hand_evaluated_step() {
        let mut v = ValueTable::from_vec(vec![2.0, 10.0]);
        td_update(&mut v, &Transition::new(0, 0.0, 1), 0.5, 0.9);
        assert_eq!(v.v, vec![5.5, 10.0]);
    }

    #[test]
    fn zero_step_size_is_identity() {
        let mut v = ValueTable::from_vec(vec![2.0, -3.0]);
        td_update(&mut v, &Transition::new(0, 7.0, 1), 0.0, 0.9);
        assert_eq!(v.v, vec![2.0, -3.0]);
    }

    proptest! {
        #[test]
        fn affine_form(
            vx in -100.0f64..100.0, vy in -100.0f64..100.0, r in -10.0f64..10.0,
            alpha in 0.0f64..1.0, gamma in 0.0f64..0.99,
        ) {
            let mut v = ValueTable::from_vec(vec![vx, vy]);
            td_update(&mut v, &Transition::new(0, r, 1), alpha, gamma);
            let expected = (1.0 - alpha) * vx + alpha * (r + gamma * vy);
            prop_assert!((v.v[0] - expected).abs() <= 1e-10 * (1.0 + expected.abs()));
            prop_assert_eq!(v.v[1], vy);
        }
    }
}
