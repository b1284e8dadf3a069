//! Penalized reformulation of the chance constraint.
//!
//! With `G(x, s) = s + E[max(g(x, xi) - s, 0)] / (1 - p)` the constraint
//! `P[g <= 0] >= p` holds iff some `eta <= 0` minimizes `G(x, .)`. The
//! penalized objective
//!
//! ```text
//! f(x) + lambda * h(x, eta) + mu * max(eta, 0),   h = G(x, eta) - min_s G(x, s)
//! ```
//!
//! splits as `phi1 - phi2` with `phi1 = f + lambda G + mu max(eta, 0)` and
//! `phi2 = lambda min_s G`, both convex. `phi2` is replaced in the solver by a
//! smooth under-approximation built from the capped-simplex dual.
//!
//! Points are passed as `u = (x, eta)` of length `d + 1`.

use crate::empirical::{grid_index, quantile_rank, rockafellar_value, Sample};
use crate::error::{Error, Result};
use crate::problem::ChanceProblem;
use crate::scalar::Real;
use crate::simplex::{capped_simplex_argmax, smoothed_dual_value};

/// Absolute tolerance for `g(x, xi_i) == t` ties.
pub const TIE_TOL: f64 = 1e-12;

/// `(p, mu, lambda, rho)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PenaltyParams<T> {
    pub p: T,
    pub mu: T,
    pub lambda: T,
    pub rho: T,
}

impl<T: Real> PenaltyParams<T> {
    pub fn new(p: T, mu: T, lambda: T, rho: T) -> Result<Self> {
        crate::empirical::check_probability(p)?;
        for (name, v) in [("mu", mu), ("lambda", lambda), ("rho", rho)] {
            if !(v > T::zero()) || !v.is_finite() {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        Ok(Self { p, mu, lambda, rho })
    }

    fn tail_scale(&self, n: usize) -> T {
        T::one() / (T::from_count(n) * (T::one() - self.p))
    }
}

/// Value and one subgradient (x-part then eta-part).
#[derive(Debug, Clone, PartialEq)]
pub struct DcOracleOutput<T> {
    pub value: T,
    pub subgradient: Vec<T>,
}

/// Growth constant of `h`: `1/(n(1-p))` if `p ∈ {i/n : 0 <= i < n}`,
/// otherwise `dist(p, {i/n : 0 <= i <= n}) / (1-p)`. The level `1` counts in
/// the distance because `G` has slope exactly 1 past the largest value.
pub fn delta<T: Real>(n: usize, p: T) -> T {
    assert!(n >= 1, "delta needs at least one scenario");
    let nf = T::from_count(n);
    let one_minus = T::one() - p;
    if grid_index(n, p).is_some() {
        return T::one() / (nf * one_minus);
    }
    let below = (p * nf).floor().min(T::from_count(n - 1));
    let mut dist = (p - below / nf).abs();
    let above = below + T::one();
    if above <= nf {
        dist = dist.min((above / nf - p).abs());
    }
    dist / one_minus
}

fn split_point<T>(u: &[T], d: usize) -> Result<(&[T], T)>
where
    T: Copy,
{
    if u.len() != d + 1 {
        return Err(Error::Dimension {
            expected: d + 1,
            got: u.len(),
        });
    }
    Ok((&u[..d], u[d]))
}

/// Evaluates the penalty pieces of one [`ChanceProblem`].
pub struct PenaltyOracle<'a, T> {
    pub problem: &'a ChanceProblem<T>,
    pub params: PenaltyParams<T>,
}

impl<'a, T: Real> PenaltyOracle<'a, T> {
    pub fn new(problem: &'a ChanceProblem<T>, params: PenaltyParams<T>) -> Self {
        Self { problem, params }
    }

    fn n(&self) -> usize {
        self.problem.num_scenarios()
    }

    fn tie_tol(&self) -> T {
        T::lit(TIE_TOL)
    }

    /// `G(x, s)`.
    pub fn lower_objective(&self, x: &[T], s: T) -> Result<T> {
        let g = self.problem.constraint_values(x)?;
        Ok(rockafellar_value(&g, self.params.p, s))
    }

    /// `min_s G(x, s)`, the superquantile of the constraint values.
    pub fn lower_minimum(&self, x: &[T]) -> Result<T> {
        let g = self.problem.constraint_values(x)?;
        Sample::new(g)?.superquantile(self.params.p)
    }

    /// `h(x, eta) = G(x, eta) - min_s G(x, s) >= 0`.
    pub fn value_function(&self, x: &[T], eta: T) -> Result<T> {
        let g = self.problem.constraint_values(x)?;
        value_function_from_values(&g, self.params.p, eta)
    }

    /// `phi1(x, eta) = f(x) + lambda G(x, eta) + mu max(eta, 0)`.
    pub fn phi1(&self, u: &[T]) -> Result<DcOracleOutput<T>> {
        let (x, eta) = split_point(u, self.problem.dim())?;
        let g = self.problem.constraint_values(x)?;
        self.phi1_with_values(x, eta, &g)
    }

    pub(crate) fn phi1_with_values(&self, x: &[T], eta: T, g: &[T]) -> Result<DcOracleOutput<T>> {
        let PenaltyParams { p, mu, lambda, .. } = self.params;
        let scale = self.params.tail_scale(self.n());
        let f = self.problem.objective(x)?;
        let value = f + lambda * rockafellar_value(g, p, eta) + mu * eta.max(T::zero());

        let above: Vec<(usize, T)> = g
            .iter()
            .enumerate()
            .filter(|(_, &v)| v > eta + self.tie_tol())
            .map(|(i, _)| (i, T::one()))
            .collect();
        let mut sub = self.problem.objective_grad(x);
        let tail = self.problem.weighted_constraint_grad(x, &above);
        crate::scalar::axpy(lambda * scale, &tail, &mut sub);
        let indicator = if eta > T::zero() { T::one() } else { T::zero() };
        sub.push(lambda + mu * indicator - lambda * scale * T::from_count(above.len()));
        Ok(DcOracleOutput {
            value,
            subgradient: sub,
        })
    }

    /// `phi2(x, eta) = lambda min_s G(x, s)` with the subgradient whose
    /// eta-component vanishes.
    pub fn phi2(&self, u: &[T]) -> Result<DcOracleOutput<T>> {
        let (x, _) = split_point(u, self.problem.dim())?;
        let g = self.problem.constraint_values(x)?;
        self.phi2_with_values(x, &g)
    }

    pub(crate) fn phi2_with_values(&self, x: &[T], g: &[T]) -> Result<DcOracleOutput<T>> {
        let PenaltyParams { p, lambda, .. } = self.params;
        let n = self.n();
        let sample = Sample::new(g.to_vec())?;
        let q = sample.sorted_values()[quantile_rank(n, p) - 1];
        let value = lambda * sample.superquantile(p)?;

        let tol = self.tie_tol();
        let mut weights = Vec::new();
        let mut n_eq = 0usize;
        let mut n_gt = 0usize;
        for (i, &v) in g.iter().enumerate() {
            if v > q + tol {
                n_gt += 1;
                weights.push((i, T::one()));
            } else if (v - q).abs() <= tol {
                n_eq += 1;
            }
        }
        // q is itself one of the constraint values.
        debug_assert!(n_eq >= 1);
        let count_le = T::from_count(n - n_gt);
        let alpha = ((count_le - T::from_count(n) * p) / T::from_count(n_eq))
            .max(T::zero())
            .min(T::one());
        weights.extend(
            g.iter()
                .enumerate()
                .filter(|(_, &v)| v <= q + tol && (v - q).abs() <= tol)
                .map(|(i, _)| (i, alpha)),
        );
        let mut sub = self.problem.weighted_constraint_grad(x, &weights);
        let scale = lambda * self.params.tail_scale(n);
        sub.iter_mut().for_each(|s| *s = *s * scale);
        sub.push(T::zero());
        Ok(DcOracleOutput {
            value,
            subgradient: sub,
        })
    }

    /// Smooth under-approximation of `phi2` and its gradient `(lambda S q̃, 0)`.
    pub fn smoothed_phi2(&self, u: &[T]) -> Result<DcOracleOutput<T>> {
        let (x, _) = split_point(u, self.problem.dim())?;
        let g = self.problem.constraint_values(x)?;
        self.smoothed_phi2_with_values(x, &g)
    }

    pub(crate) fn smoothed_phi2_with_values(&self, x: &[T], g: &[T]) -> Result<DcOracleOutput<T>> {
        let PenaltyParams { p, lambda, rho, .. } = self.params;
        let q = capped_simplex_argmax(g, p, rho);
        let value = lambda * smoothed_dual_value(g, &q, rho);
        let weights: Vec<(usize, T)> = q
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > T::zero())
            .map(|(i, &w)| (i, lambda * w))
            .collect();
        let mut grad = self.problem.weighted_constraint_grad(x, &weights);
        grad.push(T::zero());
        Ok(DcOracleOutput {
            value,
            subgradient: grad,
        })
    }

    /// `phi1 - phi2` (or `phi1 - smoothed phi2`) with the matching
    /// difference of subgradients.
    pub fn penalized_objective(&self, u: &[T], smoothed: bool) -> Result<DcOracleOutput<T>> {
        let (x, eta) = split_point(u, self.problem.dim())?;
        let g = self.problem.constraint_values(x)?;
        let first = self.phi1_with_values(x, eta, &g)?;
        let second = if smoothed {
            self.smoothed_phi2_with_values(x, &g)?
        } else {
            self.phi2_with_values(x, &g)?
        };
        Ok(DcOracleOutput {
            value: first.value - second.value,
            subgradient: first
                .subgradient
                .iter()
                .zip(&second.subgradient)
                .map(|(&a, &b)| a - b)
                .collect(),
        })
    }
}

/// `h` from precomputed constraint values.
pub fn value_function_from_values<T: Real>(g: &[T], p: T, eta: T) -> Result<T> {
    let min = Sample::new(g.to_vec())?.superquantile(p)?;
    Ok((rockafellar_value(g, p, eta) - min).max(T::zero()))
}
