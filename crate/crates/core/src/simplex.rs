//! Maximizer of the smoothed superquantile dual over the capped simplex
//! `{ q : 0 <= q_i <= 1/(n(1-p)), Σ q_i = 1 }`.
//!
//! The objective `Σ q_i g_i - (rho/2) Σ (q_i - 1/n)^2` is strongly concave, so
//! the maximizer is `q_i(θ) = clamp(1/n + (g_i - θ)/rho, 0, U)` for the unique
//! `θ` solving `Σ q_i(θ) = 1`. `Σ q_i(θ)` is piecewise linear and
//! non-increasing with kinks at `g_i + rho/n` and `g_i + rho(1/n - U)`; the
//! root is located by binary search over the sorted kinks and then linear
//! interpolation on the bracketing piece.

use crate::scalar::{compensated_sum, Real};

const BISECTION_ITERS: usize = 200;

fn sum_tol<T: Real>() -> T {
    T::lit(1e-12).max(T::epsilon() * T::lit(8.0))
}

/// Returns the maximizer `q̃`; `gvals` must be non-empty, `0 <= p < 1`,
/// `rho > 0`.
pub fn capped_simplex_argmax<T: Real>(gvals: &[T], p: T, rho: T) -> Vec<T> {
    let n = gvals.len();
    assert!(n > 0, "empty constraint vector");
    assert!(rho > T::zero(), "smoothing parameter must be positive");
    let nf = T::from_count(n);
    let base = T::one() / nf;
    let cap = T::one() / (nf * (T::one() - p));
    // U >= 1/n always, so the set is non-empty.
    assert!(cap * nf >= T::one() - T::epsilon() * nf, "infeasible cap");
    if cap * nf <= T::one() + T::epsilon() * nf {
        return vec![base; n];
    }

    let weights_at = |theta: T| -> Vec<T> {
        gvals
            .iter()
            .map(|&g| (base + (g - theta) / rho).max(T::zero()).min(cap))
            .collect()
    };
    let mass_at = |theta: T| compensated_sum(weights_at(theta));

    let mut kinks: Vec<T> = gvals
        .iter()
        .flat_map(|&g| [g + rho * base, g + rho * (base - cap)])
        .collect();
    kinks.sort_by(|a, b| a.partial_cmp(b).expect("finite kinks"));

    // mass(kinks[0]) = nU >= 1 and mass(kinks[last]) = 0 < 1.
    let (mut lo, mut hi) = (0usize, kinks.len() - 1);
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if mass_at(kinks[mid]) >= T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let (a, b) = (kinks[lo], kinks[hi]);
    let (ma, mb) = (mass_at(a), mass_at(b));
    let theta = if ma > mb {
        a + (ma - T::one()) * (b - a) / (ma - mb)
    } else {
        a
    };

    let mut q = weights_at(theta);
    rebalance(&mut q, gvals, cap);
    if (compensated_sum(q.iter().copied()) - T::one()).abs() > sum_tol::<T>() {
        q = bisect(&weights_at, a.min(kinks[0]), b.max(kinks[kinks.len() - 1]));
        rebalance(&mut q, gvals, cap);
    }
    q
}

/// Spreads the residual `1 - Σ q` over the coordinates strictly inside
/// `(0, U)`, which keeps the KKT structure intact. When `theta` landed exactly
/// on a kink and no coordinate is free, the residual goes to the coordinate
/// next to that kink.
fn rebalance<T: Real>(q: &mut [T], gvals: &[T], cap: T) {
    let residual = T::one() - compensated_sum(q.iter().copied());
    if residual == T::zero() {
        return;
    }
    let free: Vec<usize> = (0..q.len())
        .filter(|&i| q[i] > T::zero() && q[i] < cap)
        .collect();
    if !free.is_empty() {
        let share = residual / T::from_count(free.len());
        for i in free {
            q[i] = (q[i] + share).max(T::zero()).min(cap);
        }
        return;
    }
    let pick = if residual > T::zero() {
        // largest g among the zeros is the next to enter
        (0..q.len())
            .filter(|&i| q[i] < cap)
            .max_by(|&a, &b| gvals[a].partial_cmp(&gvals[b]).expect("finite"))
    } else {
        // smallest g among the capped is the next to leave
        (0..q.len())
            .filter(|&i| q[i] > T::zero())
            .min_by(|&a, &b| gvals[a].partial_cmp(&gvals[b]).expect("finite"))
    };
    if let Some(i) = pick {
        q[i] = (q[i] + residual).max(T::zero()).min(cap);
    }
}

fn bisect<T: Real>(weights_at: &impl Fn(T) -> Vec<T>, mut lo: T, mut hi: T) -> Vec<T> {
    for _ in 0..BISECTION_ITERS {
        let mid = (lo + hi) / T::lit(2.0);
        let mass = compensated_sum(weights_at(mid));
        if (mass - T::one()).abs() <= sum_tol::<T>() {
            return weights_at(mid);
        }
        if mass > T::one() {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    weights_at((lo + hi) / T::lit(2.0))
}

/// Value of the smoothed dual objective at `q`.
pub fn smoothed_dual_value<T: Real>(gvals: &[T], q: &[T], rho: T) -> T {
    let base = T::one() / T::from_count(gvals.len());
    let linear = compensated_sum(gvals.iter().zip(q).map(|(&g, &w)| g * w));
    let quad = compensated_sum(q.iter().map(|&w| (w - base) * (w - base)));
    linear - rho / T::lit(2.0) * quad
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verify::brute_force_capped_simplex;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn feasible(q: &[f64], p: f64) -> bool {
        let cap = 1.0 / (q.len() as f64 * (1.0 - p));
        let sum: f64 = compensated_sum(q.iter().copied());
        (sum - 1.0).abs() <= 1e-12 && q.iter().all(|&v| v >= 0.0 && v <= cap + 1e-15)
    }

    #[test]
    fn symmetric_input_gives_uniform() {
        let q = capped_simplex_argmax(&[0.0, 0.0], 0.5, 3.0);
        assert_abs_diff_eq!(q[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn stationary_point_clamped_to_corner() {
        let q = capped_simplex_argmax(&[0.0, 10.0], 0.5, 1.0);
        assert_abs_diff_eq!(q[0], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(q[1], 1.0, epsilon = 1e-15);
        let brute = brute_force_capped_simplex(&[0.0, 10.0], 0.5, 1.0);
        assert_abs_diff_eq!(brute[0], 0.0, epsilon = 1e-6);
    }

    #[test]
    fn cap_becomes_active() {
        let q = capped_simplex_argmax(&[0.0, 10.0], 0.25, 1.0);
        assert_abs_diff_eq!(q[0], 1.0 / 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(q[1], 2.0 / 3.0, epsilon = 1e-12);
        let brute = brute_force_capped_simplex(&[0.0, 10.0], 0.25, 1.0);
        assert_abs_diff_eq!(brute[1], 2.0 / 3.0, epsilon = 1e-6);
    }

    #[test]
    fn zero_level_forces_uniform() {
        let q = capped_simplex_argmax(&[3.0, -1.0, 7.0, 0.0], 0.0, 0.1);
        assert!(q.iter().all(|&v| v == 0.25));
    }

    #[test]
    fn large_smoothing_tends_to_uniform() {
        let g = [1.0, 2.0, 5.0, -3.0];
        let q = capped_simplex_argmax(&g, 0.5, 1e8);
        for v in q {
            assert_abs_diff_eq!(v, 0.25, epsilon = 1e-7);
        }
    }

    #[test]
    fn feasible_at_scale() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let g: Vec<f64> = (0..100_000).map(|_| rng.gen_range(-100.0..100.0)).collect();
        for &p in &[0.0, 0.3, 0.8, 0.99999] {
            for &rho in &[1e-4, 1e-2, 1.0, 1e3] {
                let q = capped_simplex_argmax(&g, p, rho);
                assert!(feasible(&q, p), "p={p} rho={rho}");
            }
        }
    }

    #[test]
    fn single_precision_is_feasible() {
        let q = capped_simplex_argmax(&[0.0f32, 10.0, 3.0], 0.5, 1.0);
        let s: f32 = q.iter().sum();
        assert!((s - 1.0).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn matches_brute_force_small(g in prop::collection::vec(-5.0..5.0f64, 2..=3), p in 0.0..0.95f64, rho in 0.05..5.0f64) {
            let q = capped_simplex_argmax(&g, p, rho);
            prop_assert!(feasible(&q, p));
            let brute = brute_force_capped_simplex(&g, p, rho);
            for (a, b) in q.iter().zip(&brute) {
                prop_assert!((a - b).abs() <= 1e-6, "{:?} vs {:?}", q, brute);
            }
        }
    }
}
