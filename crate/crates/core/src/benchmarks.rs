//! Benchmark families with seeded scenario generation, the closed-form
//! optimum of the norm family, and an exhaustive grid oracle for `d <= 2`.

use std::fmt::Write as _;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;

use crate::bundle::BundleConfig;
use crate::chi2::chi2_inv;
use crate::error::{Error, Result};
use crate::problem::{empirical_probability, BoxConstraints, ChanceProblem, Oracles, ScenarioSet};
use crate::scalar::Real;
use crate::solver::SolverConfig;

pub struct BenchmarkInstance<T> {
    pub name: String,
    pub problem: ChanceProblem<T>,
    pub p: T,
    /// Known optimal value of the underlying (non-sampled) problem.
    pub known_opt: Option<f64>,
    pub config: SolverConfig<T>,
}

/// `n * dim` standard normals from a ChaCha8 stream, drawn in `f64` so both
/// precisions see the same scenarios.
pub fn standard_normals(seed: u64, count: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| StandardNormal.sample(&mut rng)).collect()
}

fn lit<T: Real>(v: f64) -> T {
    T::lit(v)
}

/// `f(x) = 1/2 (x-a)^T Q (x-a)`, `g(x, z) = z^T W(x) z + w^T z` with
/// `W(x) = diag(x1^2 + 1/2, |x2 - 1|^3 + 1)`.
pub struct Toy2dOracles<T> {
    pub a: [T; 2],
    pub q: [[T; 2]; 2],
    pub w: [T; 2],
}

impl<T: Real> Toy2dOracles<T> {
    pub fn new(w: [T; 2]) -> Self {
        Self {
            a: [lit(2.0), lit(2.0)],
            q: [[lit(5.5), lit(4.5)], [lit(4.5), lit(5.5)]],
            w,
        }
    }

    fn weights(x: &[T]) -> [T; 2] {
        let c = (x[1] - T::one()).abs();
        [x[0] * x[0] + lit(0.5), c * c * c + T::one()]
    }
}

impl<T: Real> Oracles<T> for Toy2dOracles<T> {
    fn dim(&self) -> usize {
        2
    }

    fn objective(&self, x: &[T]) -> T {
        let r = [x[0] - self.a[0], x[1] - self.a[1]];
        let qr0 = self.q[0][0] * r[0] + self.q[0][1] * r[1];
        let qr1 = self.q[1][0] * r[0] + self.q[1][1] * r[1];
        lit::<T>(0.5) * (r[0] * qr0 + r[1] * qr1)
    }

    fn objective_grad(&self, x: &[T], out: &mut [T]) {
        let r = [x[0] - self.a[0], x[1] - self.a[1]];
        out[0] = self.q[0][0] * r[0] + self.q[0][1] * r[1];
        out[1] = self.q[1][0] * r[0] + self.q[1][1] * r[1];
    }

    fn constraint(&self, x: &[T], z: &[T]) -> T {
        let w = Self::weights(x);
        w[0] * z[0] * z[0] + w[1] * z[1] * z[1] + self.w[0] * z[0] + self.w[1] * z[1]
    }

    fn constraint_grad(&self, x: &[T], z: &[T], out: &mut [T]) {
        let c = x[1] - T::one();
        let sign = if c > T::zero() {
            T::one()
        } else if c < T::zero() {
            -T::one()
        } else {
            T::zero()
        };
        out[0] = lit::<T>(2.0) * x[0] * z[0] * z[0];
        out[1] = lit::<T>(3.0) * c * c * sign * z[1] * z[1];
    }
}

/// Default linear term of the 2-d problem. With `w = 0` the constraint is
/// positive almost surely and no point is feasible.
pub fn toy2d_default_w<T: Real>() -> [T; 2] {
    [lit(-1.0), lit(-1.0)]
}

/// Scenarios `z ~ N((1, 1), 20 I)`.
pub fn toy2d_scenarios<T: Real>(seed: u64, n: usize) -> ScenarioSet<T> {
    let sd = 20.0f64.sqrt();
    let data = standard_normals(seed, 2 * n)
        .into_iter()
        .map(|v| T::lit(1.0 + sd * v))
        .collect();
    ScenarioSet::new(data, n, 2).expect("shape matches")
}

pub fn toy2d<T: Real>(seed: u64, n: usize) -> BenchmarkInstance<T> {
    toy2d_with_w(seed, n, toy2d_default_w())
}

pub fn toy2d_with_w<T: Real>(seed: u64, n: usize, w: [T; 2]) -> BenchmarkInstance<T> {
    let problem = ChanceProblem::new(
        Toy2dOracles::new(w),
        BoxConstraints::unbounded(2),
        toy2d_scenarios(seed, n),
    )
    .expect("dimensions agree");
    BenchmarkInstance {
        name: "toy2d".into(),
        problem,
        p: lit(0.008),
        known_opt: None,
        config: toy2d_config(seed),
    }
}

pub fn toy2d_config<T: Real>(seed: u64) -> SolverConfig<T> {
    SolverConfig {
        p: lit(0.008),
        mu0: lit(400.0),
        lambda0: lit(600.0),
        start: vec![lit(0.5), lit(1.5), lit(0.01)],
        bundle: BundleConfig {
            prox_start: lit(38.0),
            prox_min: lit(1e-3),
            prox_max: lit(1e3),
            prox_up: lit(1.05),
            prox_down: lit(0.95),
            prox_restart: lit(38.0),
            kappa: lit(1e-4),
            max_planes: 20,
            stop_tol: lit(1e-7),
            max_iters: 5000,
        },
        seed,
        ..SolverConfig::default()
    }
}

/// `f(x) = -Σ x_j` on `x >= 0`, `g(x, Z) = max_i Σ_j Z_ij^2 x_j^2 - 100`
/// with `Z` a `10 x d` matrix stored row-major in each scenario.
pub struct NormOracles {
    pub d: usize,
}

pub const NORM_ROWS: usize = 10;

impl NormOracles {
    /// Index and value of the largest row term, lowest index on ties.
    pub fn active_row<T: Real>(&self, x: &[T], z: &[T]) -> (usize, T) {
        let mut best = (0, T::neg_infinity());
        for i in 0..NORM_ROWS {
            let row = &z[i * self.d..(i + 1) * self.d];
            let v = row
                .iter()
                .zip(x)
                .fold(T::zero(), |acc, (&zij, &xj)| acc + zij * zij * xj * xj);
            // strict comparison keeps the lowest index on ties
            if v > best.1 {
                best = (i, v);
            }
        }
        best
    }
}

impl<T: Real> Oracles<T> for NormOracles {
    fn dim(&self) -> usize {
        self.d
    }

    fn objective(&self, x: &[T]) -> T {
        -x.iter().copied().sum::<T>()
    }

    fn objective_grad(&self, _x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = -T::one());
    }

    fn constraint(&self, x: &[T], z: &[T]) -> T {
        self.active_row(x, z).1 - lit(100.0)
    }

    fn constraint_grad(&self, x: &[T], z: &[T], out: &mut [T]) {
        let (i, _) = self.active_row(x, z);
        let row = &z[i * self.d..(i + 1) * self.d];
        for ((o, &zij), &xj) in out.iter_mut().zip(row).zip(x) {
            *o = lit::<T>(2.0) * zij * zij * xj;
        }
    }
}

pub fn norm_scenarios<T: Real>(d: usize, seed: u64, n: usize) -> ScenarioSet<T> {
    let data = standard_normals(seed, NORM_ROWS * d * n)
        .into_iter()
        .map(T::lit)
        .collect();
    ScenarioSet::new(data, n, NORM_ROWS * d).expect("shape matches")
}

pub fn norm_problem<T: Real>(d: usize, seed: u64, n: usize) -> Result<BenchmarkInstance<T>> {
    if d == 0 || n == 0 {
        return Err(Error::InvalidParameter("norm problem needs d >= 1 and n >= 1".into()));
    }
    let p = 0.8;
    let problem = ChanceProblem::new(NormOracles { d }, BoxConstraints::nonnegative(d), norm_scenarios(d, seed, n))?;
    Ok(BenchmarkInstance {
        name: format!("norm:{d}"),
        problem,
        p: lit(p),
        known_opt: Some(norm_problem_opt_value(d, p)?),
        config: norm_config(d, seed),
    })
}

/// `lambda` used for the norm family; dimensions outside the tabulated set
/// use 2.
pub fn norm_lambda(d: usize) -> f64 {
    match d {
        2 => 1.75,
        10 | 50 => 1.5,
        _ => 2.0,
    }
}

pub fn norm_config<T: Real>(d: usize, seed: u64) -> SolverConfig<T> {
    SolverConfig {
        p: lit(0.8),
        mu0: lit(10.0),
        lambda0: lit(norm_lambda(d)),
        start: vec![lit(0.1); d + 1],
        bundle: BundleConfig {
            prox_start: lit(60.0),
            prox_min: lit(1e-4),
            prox_max: lit(1e5),
            prox_up: lit(1.01),
            prox_down: lit(0.99),
            prox_restart: lit(60.0),
            kappa: lit(1e-4),
            max_planes: 300,
            stop_tol: lit(1e-7),
            max_iters: 5000,
        },
        seed,
        ..SolverConfig::default()
    }
}

/// `f* = -10 d / sqrt(F^{-1}_{chi2_d}(p^{1/10}))`.
pub fn norm_problem_opt_value(d: usize, p: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter("d must be at least 1".into()));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidProbability(p));
    }
    let t = chi2_inv(d, p.powf(1.0 / NORM_ROWS as f64))?;
    Ok(-10.0 * d as f64 / t.sqrt())
}

/// Rectangular window `[lo_j, hi_j]` sampled with `resolution` points per
/// axis, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWindow<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
    pub resolution: usize,
}

impl<T: Real> GridWindow<T> {
    pub fn square(lo: T, hi: T, d: usize, resolution: usize) -> Self {
        Self {
            lower: vec![lo; d],
            upper: vec![hi; d],
            resolution,
        }
    }

    fn validate(&self, d: usize) -> Result<()> {
        if d == 0 || d > 2 {
            return Err(Error::InvalidParameter(format!("grid oracle supports d <= 2, got {d}")));
        }
        if self.lower.len() != d || self.upper.len() != d {
            return Err(Error::Dimension {
                expected: d,
                got: self.lower.len().min(self.upper.len()),
            });
        }
        if self.resolution < 2 {
            return Err(Error::InvalidParameter("grid resolution must be at least 2".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.resolution.pow(self.lower.len() as u32)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid spacing along axis `j`.
    pub fn cell(&self, j: usize) -> T {
        (self.upper[j] - self.lower[j]) / T::from_count(self.resolution - 1)
    }

    /// Point `k` in row-major order (first axis slowest).
    pub fn point(&self, k: usize) -> Vec<T> {
        let d = self.lower.len();
        let mut idx = vec![0; d];
        let mut rest = k;
        for j in (0..d).rev() {
            idx[j] = rest % self.resolution;
            rest /= self.resolution;
        }
        (0..d)
            .map(|j| self.lower[j] + self.cell(j) * T::from_count(idx[j]))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridBest<T> {
    pub x: Vec<T>,
    pub f: T,
    pub prob: T,
    /// Grid points whose feasibility was checked.
    pub checked: usize,
}

fn feasible_at<T: Real>(problem: &ChanceProblem<T>, x: &[T], p: T) -> Result<(bool, T)> {
    let prob = empirical_probability(&problem.constraint_values(x)?);
    Ok((prob >= p, prob))
}

/// Best grid point satisfying the empirical chance constraint, or `None`
/// when no grid point is feasible. Points are visited in increasing `f`.
pub fn grid_oracle<T: Real>(problem: &ChanceProblem<T>, p: T, window: &GridWindow<T>) -> Result<Option<GridBest<T>>> {
    window.validate(problem.dim())?;
    let mut order: Vec<(T, usize)> = (0..window.len())
        .into_par_iter()
        .map(|k| {
            let x = window.point(k);
            if !problem.bounds.contains(&x) {
                return Ok((T::infinity(), k));
            }
            problem.objective(&x).map(|f| (f, k))
        })
        .collect::<Result<_>>()?;
    order.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite objective").then(a.1.cmp(&b.1)));

    const BATCH: usize = 256;
    for (b, chunk) in order.chunks(BATCH).enumerate() {
        if chunk[0].0.is_infinite() {
            break;
        }
        let hits: Vec<(bool, T)> = chunk
            .par_iter()
            .map(|&(f, k)| {
                if f.is_infinite() {
                    Ok((false, T::zero()))
                } else {
                    feasible_at(problem, &window.point(k), p)
                }
            })
            .collect::<Result<_>>()?;
        if let Some(pos) = hits.iter().position(|h| h.0) {
            let (f, k) = chunk[pos];
            return Ok(Some(GridBest {
                x: window.point(k),
                f,
                prob: hits[pos].1,
                checked: b * BATCH + pos + 1,
            }));
        }
    }
    Ok(None)
}

/// `f` and empirical probability at every grid point, for plotting.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelPoint<T> {
    pub x: Vec<T>,
    pub f: T,
    pub prob: T,
}

pub fn level_sets<T: Real>(problem: &ChanceProblem<T>, window: &GridWindow<T>) -> Result<Vec<LevelPoint<T>>> {
    window.validate(problem.dim())?;
    (0..window.len())
        .into_par_iter()
        .map(|k| {
            let x = window.point(k);
            let f = problem.objective(&x)?;
            let prob = problem.empirical_probability_at(&x)?;
            Ok(LevelPoint { x, f, prob })
        })
        .collect()
}

/// CSV with columns `x1,x2,f,prob` (`x1,f,prob` in one dimension).
pub fn level_sets_csv<T: Real>(points: &[LevelPoint<T>]) -> String {
    let d = points.first().map_or(2, |p| p.x.len());
    let mut out = String::new();
    for j in 1..=d {
        let _ = write!(out, "x{j},");
    }
    out.push_str("f,prob\n");
    for pt in points {
        for v in &pt.x {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{},{}", pt.f, pt.prob);
    }
    out
}
