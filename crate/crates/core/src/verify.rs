//! Property suites run with fixed seeds against independent oracles: grid
//! minimization, dense brute force, and central finite differences.

use std::fmt;
use std::str::FromStr;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::benchmarks::{norm_problem, standard_normals, toy2d, NormOracles};
use crate::empirical::{Interval, Sample};
use crate::error::{Error, Result};
use crate::penalty::{delta, value_function_from_values, DcOracleOutput, PenaltyOracle, PenaltyParams};
use crate::problem::{BoxConstraints, ChanceProblem, FnOracles, ScenarioSet};
use crate::scalar::compensated_sum;
use crate::simplex::{capped_simplex_argmax, smoothed_dual_value};
use crate::solver::theory_lambda;

/// Margin allowed below the lower bound of `h`.
pub const ERROR_BOUND_SLACK: f64 = 1e-10;
/// Central-difference step.
pub const FD_STEP: f64 = 1e-6;
/// Relative tolerance between finite differences and oracle gradients.
pub const FD_REL_TOL: f64 = 1e-5;
/// Margin in the subgradient inequality.
pub const SUBGRADIENT_SLACK: f64 = 1e-8;
/// Margin in the smoothing sandwich.
pub const SANDWICH_SLACK: f64 = 1e-10;
/// Agreement between grid and closed-form superquantiles.
pub const SUPERQUANTILE_TOL: f64 = 1e-8;
/// Agreement between the capped-simplex solver and brute force.
pub const SIMPLEX_BRUTE_TOL: f64 = 1e-6;
/// Sum and bound violation allowed in capped-simplex output.
pub const SIMPLEX_FEAS_TOL: f64 = 1e-12;
/// Allowed growth between consecutive difference quotients of `h`.
pub const QUOTIENT_NOISE: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    ErrorBound,
    Subgradients,
    Smoothing,
    Penalization,
    Quantiles,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::ErrorBound,
        Suite::Subgradients,
        Suite::Smoothing,
        Suite::Penalization,
        Suite::Quantiles,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::ErrorBound => "errorbound",
            Suite::Subgradients => "subgradients",
            Suite::Smoothing => "smoothing",
            Suite::Penalization => "penalization",
            Suite::Quantiles => "quantiles",
        }
    }

    /// Suites named by `name`; `all` expands to every suite.
    pub fn parse_list(name: &str) -> Result<Vec<Suite>> {
        if name == "all" {
            return Ok(Self::ALL.to_vec());
        }
        name.parse().map(|s| vec![s])
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|suite| suite.name() == s)
            .ok_or_else(|| {
                let known: Vec<_> = Self::ALL.iter().map(|s| s.name()).collect();
                Error::InvalidParameter(format!("unknown suite `{s}`; expected one of {}, all", known.join(", ")))
            })
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub suite: Suite,
    pub checks: Vec<Check>,
    pub elapsed: Duration,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// One line per check: suite, check, PASS/FAIL, detail.
    pub fn table(&self) -> String {
        let width = self.checks.iter().map(|c| c.name.len()).max().unwrap_or(0);
        self.checks
            .iter()
            .map(|c| {
                format!(
                    "{:<13} {:<width$}  {}  {}\n",
                    self.suite.name(),
                    c.name,
                    if c.passed { "PASS" } else { "FAIL" },
                    c.detail
                )
            })
            .collect()
    }
}

pub fn run_suite(suite: Suite, seed: u64) -> Result<SuiteReport> {
    let start = Instant::now();
    let checks = match suite {
        Suite::ErrorBound => error_bound_checks(seed)?,
        Suite::Subgradients => subgradient_checks(seed)?,
        Suite::Smoothing => smoothing_checks(seed)?,
        Suite::Penalization => penalization_checks()?,
        Suite::Quantiles => quantile_checks(seed)?,
    };
    Ok(SuiteReport {
        suite,
        checks,
        elapsed: start.elapsed(),
    })
}

// ---------------------------------------------------------------------------
// benchmark families

/// Oracle family used to draw random instances.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    Toy2d,
    Norm(usize),
}

impl Family {
    pub fn problem(self, seed: u64, n: usize) -> Result<ChanceProblem<f64>> {
        Ok(match self {
            Family::Toy2d => toy2d(seed, n).problem,
            Family::Norm(d) => norm_problem(d, seed, n)?.problem,
        })
    }

    /// Level used by the published experiments on this family.
    pub fn level(self) -> f64 {
        match self {
            Family::Toy2d => 0.008,
            Family::Norm(_) => 0.8,
        }
    }

    pub fn random_x(self, rng: &mut impl Rng) -> Vec<f64> {
        match self {
            Family::Toy2d => (0..2).map(|_| rng.gen_range(-1.0..3.0)).collect(),
            Family::Norm(d) => (0..d).map(|_| rng.gen_range(0.05..2.0)).collect(),
        }
    }

    /// Per-scenario index of the active piece of `g`, empty when `g` is smooth.
    fn pieces(self, problem: &ChanceProblem<f64>, x: &[f64]) -> Vec<usize> {
        match self {
            Family::Toy2d => Vec::new(),
            Family::Norm(d) => {
                let o = NormOracles { d };
                problem.scenarios.rows().map(|z| o.active_row(x, z).0).collect()
            }
        }
    }

    pub fn label(self) -> String {
        match self {
            Family::Toy2d => "toy2d".into(),
            Family::Norm(d) => format!("norm:{d}"),
        }
    }
}

/// Families exercised by the oracle suites.
pub const FAMILIES: [Family; 2] = [Family::Toy2d, Family::Norm(3)];

fn spread(g: &[f64]) -> (f64, f64) {
    let lo = g.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = g.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

// ---------------------------------------------------------------------------
// grid oracles

/// `eta + Σ max(v_i - eta, 0) / (n(1-p))`, summed directly.
pub fn rockafellar_direct(values: &[f64], p: f64, eta: f64) -> f64 {
    eta + values.iter().map(|v| (v - eta).max(0.0)).sum::<f64>() / (values.len() as f64 * (1.0 - p))
}

/// Minimum of the Rockafellar objective over a uniform grid with the sample
/// values added as extra nodes, and every node within `tol` of it.
pub fn grid_minimize(values: &[f64], p: f64, resolution: usize, tol: f64) -> (f64, Vec<f64>) {
    let (lo, hi) = spread(values);
    let pad = 1.0 + 0.1 * (hi - lo);
    let (a, b) = (lo - pad, hi + pad);
    let mut nodes: Vec<f64> = (0..=resolution)
        .map(|i| a + (b - a) * i as f64 / resolution as f64)
        .collect();
    nodes.extend_from_slice(values);
    let objective: Vec<f64> = nodes.iter().map(|&e| rockafellar_direct(values, p, e)).collect();
    let best = objective.iter().copied().fold(f64::INFINITY, f64::min);
    let minimizers = nodes
        .into_iter()
        .zip(objective)
        .filter(|&(_, v)| v <= best + tol)
        .map(|(e, _)| e)
        .collect();
    (best, minimizers)
}

// ---------------------------------------------------------------------------
// error bound

#[derive(Debug, Clone, PartialEq)]
pub struct ErrorBoundStats {
    pub configurations: usize,
    /// Points with `h < delta * dist - slack`.
    pub violations: usize,
    /// Smallest `h / (delta * dist)` over points off the interval.
    pub min_ratio: f64,
    /// Points where the grid minimization disagrees with the interval.
    pub interval_mismatches: usize,
    /// Interval endpoints where `h` is not zero.
    pub nonzero_on_interval: usize,
}

impl ErrorBoundStats {
    pub fn passed(&self) -> bool {
        self.violations == 0 && self.interval_mismatches == 0 && self.nonzero_on_interval == 0
    }
}

/// Random `(x, eta, n, p)` over both benchmark families, checking
/// `h >= delta * dist(eta, S) - slack` with `S` from the closed-form interval
/// and confirming `S` against grid minimization.
pub fn error_bound(configurations: usize, seed: u64) -> Result<ErrorBoundStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = ErrorBoundStats {
        configurations,
        violations: 0,
        min_ratio: f64::INFINITY,
        interval_mismatches: 0,
        nonzero_on_interval: 0,
    };
    for k in 0..configurations {
        let family = if k % 2 == 0 {
            Family::Toy2d
        } else {
            Family::Norm(rng.gen_range(1..=4))
        };
        let n = *[4usize, 10, 50].choose(&mut rng).expect("non-empty");
        let p = if rng.gen_bool(0.5) {
            rng.gen_range(0..n) as f64 / n as f64
        } else {
            rng.gen_range(0.0..0.99)
        };
        let problem = family.problem(rng.gen(), n)?;
        let x = family.random_x(&mut rng);
        let g = problem.constraint_values(&x)?;
        let sample = Sample::new(g.clone())?;
        let interval = sample.argmin_interval(p)?;
        let (lo, hi) = spread(&g);
        let eta = match rng.gen_range(0..4) {
            0 => g[rng.gen_range(0..n)],
            1 if interval.lo.is_finite() => rng.gen_range(interval.lo..=interval.hi),
            _ => rng.gen_range(lo - 0.5 * (hi - lo) - 1.0..hi + 0.5 * (hi - lo) + 1.0),
        };

        let dl = delta(n, p);
        let h = value_function_from_values(&g, p, eta)?;
        let dist = interval.distance(eta);
        if h < dl * dist - ERROR_BOUND_SLACK {
            stats.violations += 1;
        }
        if dist > 1e-9 {
            stats.min_ratio = stats.min_ratio.min(h / (dl * dist));
        }

        let sq = sample.superquantile(p)?;
        let tol = 1e-10 * (1.0 + sq.abs());
        let (best, minimizers) = grid_minimize(&g, p, 4000, tol);
        let reach = 2.0 * tol / dl + 1e-12;
        let endpoints_optimal = [interval.lo, interval.hi]
            .into_iter()
            .filter(|e| e.is_finite())
            .all(|e| rockafellar_direct(&g, p, e) <= best + tol);
        if (best - sq).abs() > tol || !endpoints_optimal || minimizers.iter().any(|&m| interval.distance(m) > reach) {
            stats.interval_mismatches += 1;
        }
        for e in [interval.lo, interval.hi].into_iter().filter(|e| e.is_finite()) {
            if value_function_from_values(&g, p, e)? > tol {
                stats.nonzero_on_interval += 1;
            }
        }
    }
    Ok(stats)
}

/// `|h(q + s) - h(q - s)| / (2s)` at `q = Q_p`, `s = 1/sqrt(n)`, for
/// `g(x, xi) = x - xi` at `x = 0` with standard normal `xi`.
pub fn quantile_difference_quotient(n: usize, p: f64, seed: u64) -> Result<f64> {
    let g: Vec<f64> = standard_normals(seed, n).into_iter().map(|xi| -xi).collect();
    let q = Sample::new(g.clone())?.quantile(p)?;
    let s = 1.0 / (n as f64).sqrt();
    let up = value_function_from_values(&g, p, q + s)?;
    let down = value_function_from_values(&g, p, q - s)?;
    Ok((up - down).abs() / (2.0 * s))
}

/// Difference quotients along `ns` and whether each step grows by at most
/// [`QUOTIENT_NOISE`] with an overall decrease.
pub fn vanishing_quotients(ns: &[usize], p: f64, seed: u64) -> Result<(Vec<f64>, bool)> {
    let quotients = ns
        .iter()
        .map(|&n| quantile_difference_quotient(n, p, seed))
        .collect::<Result<Vec<_>>>()?;
    let steps_ok = quotients.windows(2).all(|w| w[1] <= QUOTIENT_NOISE * w[0]);
    let decreased = quotients.len() < 2 || quotients[quotients.len() - 1] < quotients[0];
    Ok((quotients, steps_ok && decreased))
}

fn error_bound_checks(seed: u64) -> Result<Vec<Check>> {
    let stats = error_bound(500, seed)?;
    let bound = Check::new(
        "lower bound on h",
        stats.violations == 0,
        format!(
            "{} configurations, {} violations, min ratio h/(delta*dist) = {:.4}",
            stats.configurations, stats.violations, stats.min_ratio
        ),
    );
    let grid = Check::new(
        "argmin interval vs grid",
        stats.interval_mismatches == 0 && stats.nonzero_on_interval == 0,
        format!(
            "{} mismatches, {} nonzero h at endpoints",
            stats.interval_mismatches, stats.nonzero_on_interval
        ),
    );
    let (q, ok) = vanishing_quotients(&[100, 1000, 10_000], 0.8, seed)?;
    let vanish = Check::new(
        "quotient at quantile vanishes",
        ok,
        format!("n=1e2,1e3,1e4: {:.3e}, {:.3e}, {:.3e}", q[0], q[1], q[2]),
    );
    Ok(vec![bound, grid, vanish])
}

// ---------------------------------------------------------------------------
// finite differences and subgradients

/// Central differences of `f` at `u` with step `h`.
pub fn central_differences(f: impl Fn(&[f64]) -> Result<f64>, u: &[f64], h: f64) -> Result<Vec<f64>> {
    let mut v = u.to_vec();
    let mut out = Vec::with_capacity(u.len());
    for k in 0..u.len() {
        v[k] = u[k] + h;
        let plus = f(&v)?;
        v[k] = u[k] - h;
        let minus = f(&v)?;
        v[k] = u[k];
        out.push((plus - minus) / (2.0 * h));
    }
    Ok(out)
}

/// `max_k |a_k - b_k| / max(|b|_inf, 1)`.
pub fn relative_gap(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())) / scale
}

/// Combinatorial state that fixes which formula each oracle uses near `u`.
fn kink_signature(family: Family, problem: &ChanceProblem<f64>, u: &[f64]) -> Result<Vec<i64>> {
    let d = problem.dim();
    let (x, eta) = (&u[..d], u[d]);
    let g = problem.constraint_values(x)?;
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| g[a].total_cmp(&g[b]).then(a.cmp(&b)));
    let mut sig: Vec<i64> = order.into_iter().map(|i| i as i64).collect();
    sig.extend(g.iter().map(|&v| sign(v - eta)));
    sig.push(sign(eta));
    sig.extend(family.pieces(problem, x).into_iter().map(|i| i as i64));
    Ok(sig)
}

fn sign(v: f64) -> i64 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

/// True when no coordinate step of size `h` changes the kink signature.
fn smooth_at(family: Family, problem: &ChanceProblem<f64>, u: &[f64], h: f64) -> Result<bool> {
    let base = kink_signature(family, problem, u)?;
    let mut v = u.to_vec();
    for k in 0..u.len() {
        for step in [h, -h] {
            v[k] = u[k] + step;
            if kink_signature(family, problem, &v)? != base {
                return Ok(false);
            }
        }
        v[k] = u[k];
    }
    Ok(true)
}

/// Random `(x, eta)` with `eta` drawn across the range of the constraint
/// values at `x`.
fn random_point(family: Family, problem: &ChanceProblem<f64>, rng: &mut impl Rng) -> Result<Vec<f64>> {
    let mut u = family.random_x(rng);
    let (lo, hi) = spread(&problem.constraint_values(&u)?);
    let pad = 0.1 * (hi - lo) + 1.0;
    u.push(rng.gen_range(lo.min(0.0) - pad..hi.max(0.0) + pad));
    Ok(u)
}

/// Worst relative finite-difference gaps over smooth random points.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteDifferenceStats {
    pub family: Family,
    pub points: usize,
    pub phi1: f64,
    pub phi2: f64,
    pub smoothed_phi2: f64,
}

impl FiniteDifferenceStats {
    pub fn worst(&self) -> f64 {
        self.phi1.max(self.phi2).max(self.smoothed_phi2)
    }
}

fn oracle_params(family: Family) -> Result<PenaltyParams<f64>> {
    PenaltyParams::new(family.level(), 10.0, 2.0, 1e-2)
}

/// Finite differences of `phi1`, `phi2` and the smoothed `phi2` at `points`
/// random points of `family` where every oracle is differentiable.
pub fn finite_differences(family: Family, points: usize, seed: u64) -> Result<FiniteDifferenceStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = family.problem(seed, 50)?;
    let oracle = PenaltyOracle::new(&problem, oracle_params(family)?);
    let mut stats = FiniteDifferenceStats {
        family,
        points: 0,
        phi1: 0.0,
        phi2: 0.0,
        smoothed_phi2: 0.0,
    };
    let mut attempts = 0;
    while stats.points < points {
        attempts += 1;
        if attempts > 100 * points {
            return Err(Error::InvalidParameter(format!(
                "only {} smooth points found for {}",
                stats.points,
                family.label()
            )));
        }
        let u = random_point(family, &problem, &mut rng)?;
        if !smooth_at(family, &problem, &u, 2.0 * FD_STEP)? {
            continue;
        }
        let fd1 = central_differences(|v| oracle.phi1(v).map(|o| o.value), &u, FD_STEP)?;
        let fd2 = central_differences(|v| oracle.phi2(v).map(|o| o.value), &u, FD_STEP)?;
        let fds = central_differences(|v| oracle.smoothed_phi2(v).map(|o| o.value), &u, FD_STEP)?;
        stats.phi1 = stats.phi1.max(relative_gap(&fd1, &oracle.phi1(&u)?.subgradient));
        stats.phi2 = stats.phi2.max(relative_gap(&fd2, &oracle.phi2(&u)?.subgradient));
        stats.smoothed_phi2 = stats.smoothed_phi2.max(relative_gap(&fds, &oracle.smoothed_phi2(&u)?.subgradient));
        stats.points += 1;
    }
    Ok(stats)
}

/// Worst `phi(u) + <s(u), v - u> - phi(v)` over random pairs, for `phi1` and
/// `phi2`. Non-positive means every linearization underestimates.
pub fn subgradient_inequality(family: Family, pairs: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = family.problem(seed, 50)?;
    let oracle = PenaltyOracle::new(&problem, oracle_params(family)?);
    let mut worst = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..pairs {
        let u = random_point(family, &problem, &mut rng)?;
        let v = random_point(family, &problem, &mut rng)?;
        let excess = |at_u: DcOracleOutput<f64>, at_v: f64| {
            let lin: f64 = at_u.subgradient.iter().zip(v.iter().zip(&u)).map(|(s, (a, b))| s * (a - b)).sum();
            at_u.value + lin - at_v
        };
        worst.0 = worst.0.max(excess(oracle.phi1(&u)?, oracle.phi1(&v)?.value));
        worst.1 = worst.1.max(excess(oracle.phi2(&u)?, oracle.phi2(&v)?.value));
    }
    Ok(worst)
}

fn subgradient_checks(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for family in FAMILIES {
        let fd = finite_differences(family, 100, seed)?;
        checks.push(Check::new(
            format!("phi1/phi2 differences {}", family.label()),
            fd.phi1 <= FD_REL_TOL && fd.phi2 <= FD_REL_TOL,
            format!("{} points, worst rel gap phi1 {:.2e}, phi2 {:.2e}", fd.points, fd.phi1, fd.phi2),
        ));
        let (w1, w2) = subgradient_inequality(family, 100, seed)?;
        checks.push(Check::new(
            format!("linearizations underestimate {}", family.label()),
            w1 <= SUBGRADIENT_SLACK && w2 <= SUBGRADIENT_SLACK,
            format!("100 pairs, worst excess phi1 {w1:.2e}, phi2 {w2:.2e}"),
        ));
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// smoothing

/// Worst violations of `phi2s <= phi2` and `phi2 <= phi2s + lambda rho / 2`
/// over random points.
pub fn smoothing_sandwich(family: Family, points: usize, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let problem = family.problem(seed, 50)?;
    let params = oracle_params(family)?;
    let oracle = PenaltyOracle::new(&problem, params);
    let gap = params.lambda * params.rho / 2.0;
    let mut worst = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for _ in 0..points {
        let u = random_point(family, &problem, &mut rng)?;
        let exact = oracle.phi2(&u)?.value;
        let smooth = oracle.smoothed_phi2(&u)?.value;
        worst.0 = worst.0.max(smooth - exact);
        worst.1 = worst.1.max(exact - smooth - gap);
    }
    Ok(worst)
}

/// Brute-force maximizer of the smoothed dual over the capped simplex for
/// `n <= 3` by zooming grids.
pub fn brute_force_capped_simplex(g: &[f64], p: f64, rho: f64) -> Vec<f64> {
    let n = g.len();
    let cap = 1.0 / (n as f64 * (1.0 - p));
    match n {
        1 => vec![1.0],
        2 => {
            let (lo, hi) = ((1.0 - cap).max(0.0), cap.min(1.0));
            let (mut center, mut half) = ((lo + hi) / 2.0, (hi - lo) / 2.0);
            for _ in 0..4 {
                let mut best = (f64::NEG_INFINITY, center);
                for i in 0..=2000 {
                    let q1 = (center - half + 2.0 * half * i as f64 / 2000.0).clamp(lo, hi);
                    let v = smoothed_dual_value(g, &[q1, 1.0 - q1], rho);
                    if v > best.0 {
                        best = (v, q1);
                    }
                }
                center = best.1;
                half /= 100.0;
            }
            vec![center, 1.0 - center]
        }
        3 => {
            let (mut c1, mut c2, mut half) = (cap / 2.0, cap / 2.0, cap / 2.0);
            for _ in 0..9 {
                let mut best = (f64::NEG_INFINITY, c1, c2);
                for i in 0..=200 {
                    for j in 0..=200 {
                        let q1 = (c1 - half + 2.0 * half * i as f64 / 200.0).clamp(0.0, cap);
                        let q2 = (c2 - half + 2.0 * half * j as f64 / 200.0).clamp(0.0, cap);
                        let q3 = 1.0 - q1 - q2;
                        if !(0.0..=cap).contains(&q3) {
                            continue;
                        }
                        let v = smoothed_dual_value(g, &[q1, q2, q3], rho);
                        if v > best.0 {
                            best = (v, q1, q2);
                        }
                    }
                }
                c1 = best.1;
                c2 = best.2;
                half /= 8.0;
            }
            vec![c1, c2, 1.0 - c1 - c2]
        }
        _ => panic!("brute force covers n <= 3"),
    }
}

/// Largest violation of `Σ q = 1` and `0 <= q_i <= 1/(n(1-p))`.
pub fn capped_simplex_violation(q: &[f64], p: f64) -> f64 {
    let cap = 1.0 / (q.len() as f64 * (1.0 - p));
    let sum = (compensated_sum(q.iter().copied()) - 1.0).abs();
    q.iter().fold(sum, |m, &v| m.max(-v).max(v - cap)).max(0.0).abs()
}

/// Worst distance to brute force over random instances with `n <= 3`.
pub fn simplex_against_brute_force(cases: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let n = rng.gen_range(1..=3);
        let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-5.0..5.0)).collect();
        let p = rng.gen_range(0.0..0.95);
        let rho = rng.gen_range(0.05..5.0);
        let q = capped_simplex_argmax(&g, p, rho);
        let brute = brute_force_capped_simplex(&g, p, rho);
        worst = q.iter().zip(&brute).fold(worst, |m, (a, b)| m.max((a - b).abs()));
    }
    worst
}

/// Feasibility violation and wall time of one projection of size `n`.
pub fn simplex_at_scale(n: usize, p: f64, rho: f64, seed: u64) -> (f64, Duration) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g: Vec<f64> = (0..n).map(|_| rng.gen_range(-100.0..100.0)).collect();
    let start = Instant::now();
    let q = capped_simplex_argmax(&g, p, rho);
    let elapsed = start.elapsed();
    (capped_simplex_violation(&q, p), elapsed)
}

fn smoothing_checks(seed: u64) -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    for family in FAMILIES {
        let fd = finite_differences(family, 100, seed)?;
        checks.push(Check::new(
            format!("smoothed gradient differences {}", family.label()),
            fd.smoothed_phi2 <= FD_REL_TOL,
            format!("{} points, worst rel gap {:.2e}", fd.points, fd.smoothed_phi2),
        ));
        let (below, above) = smoothing_sandwich(family, 100, seed)?;
        checks.push(Check::new(
            format!("sandwich {}", family.label()),
            below <= SANDWICH_SLACK && above <= SANDWICH_SLACK,
            format!("100 points, worst excess lower {below:.2e}, upper {above:.2e}"),
        ));
    }
    let brute = simplex_against_brute_force(200, seed);
    checks.push(Check::new(
        "capped simplex vs brute force",
        brute <= SIMPLEX_BRUTE_TOL,
        format!("200 cases n<=3, worst {brute:.2e}"),
    ));
    let mut worst = 0.0f64;
    for (k, n) in [10usize, 1000, 100_000].into_iter().enumerate() {
        for p in [0.0, 0.5, 0.99] {
            worst = worst.max(simplex_at_scale(n, p, 1e-2, seed + k as u64).0);
        }
    }
    checks.push(Check::new(
        "capped simplex feasibility",
        worst <= SIMPLEX_FEAS_TOL,
        format!("n up to 1e5, worst violation {worst:.2e}"),
    ));
    Ok(checks)
}

// ---------------------------------------------------------------------------
// exact penalization

/// `f(x) = x`, `g(x, xi) = xi - x` with `xi` in `{1, 2, 3, 4}` and `x` free.
pub fn penalization_instance() -> ChanceProblem<f64> {
    let oracles = FnOracles::new(
        1,
        |x: &[f64]| x[0],
        |_: &[f64], out: &mut [f64]| out[0] = 1.0,
        |x: &[f64], xi: &[f64]| xi[0] - x[0],
        |_: &[f64], _: &[f64], out: &mut [f64]| out[0] = -1.0,
    );
    let rows: Vec<Vec<f64>> = (1..=4).map(|v| vec![v as f64]).collect();
    ChanceProblem::new(
        oracles,
        BoxConstraints::unbounded(1),
        ScenarioSet::from_rows(&rows).expect("rectangular"),
    )
    .expect("dimensions agree")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PenalizationOutcome {
    pub lambda: f64,
    pub minimizers: usize,
    /// Largest `h` among grid minimizers.
    pub worst_h: f64,
    /// `5 * (L_x * cell_x + L_eta * cell_eta)` with `L` bounds on the slopes of `h`.
    pub tolerance: f64,
}

impl PenalizationOutcome {
    pub fn passed(&self) -> bool {
        self.worst_h <= self.tolerance
    }
}

/// Grid minimizers of `f + lambda h + mu max(eta, 0)` over
/// `[-2, 6] x [-4, 4]` on [`penalization_instance`].
pub fn exact_penalization(p: f64, mu: f64, lambda: f64, resolution: usize) -> Result<PenalizationOutcome> {
    let problem = penalization_instance();
    let window = Interval { lo: -2.0, hi: 6.0 };
    let eta_window = Interval { lo: -4.0, hi: 4.0 };
    let cell_x = (window.hi - window.lo) / (resolution - 1) as f64;
    let cell_eta = (eta_window.hi - eta_window.lo) / (resolution - 1) as f64;
    let mut values = Vec::with_capacity(resolution * resolution);
    for i in 0..resolution {
        let x = window.lo + cell_x * i as f64;
        let g = problem.constraint_values(&[x])?;
        let f = problem.objective(&[x])?;
        for j in 0..resolution {
            let eta = eta_window.lo + cell_eta * j as f64;
            let h = value_function_from_values(&g, p, eta)?;
            values.push((f + lambda * h + mu * eta.max(0.0), h));
        }
    }
    let best = values.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
    let tie = 1e-12 * (1.0 + best.abs());
    let winners: Vec<f64> = values.iter().filter(|v| v.0 <= best + tie).map(|v| v.1).collect();
    // |dG/dx| and |d min G/dx| are at most max|grad g| / (1-p) each; |dG/deta| <= 1/(1-p)
    let slope_x = 2.0 / (1.0 - p);
    let slope_eta = 1.0 / (1.0 - p);
    Ok(PenalizationOutcome {
        lambda,
        minimizers: winners.len(),
        worst_h: winners.iter().copied().fold(0.0, f64::max),
        tolerance: 5.0 * (slope_x * cell_x + slope_eta * cell_eta),
    })
}

fn penalization_checks() -> Result<Vec<Check>> {
    let mut checks = Vec::new();
    let mu = 10.0;
    for p in [0.5, 0.75] {
        let threshold = theory_lambda(mu, 4, p);
        let above = exact_penalization(p, mu, threshold, 801)?;
        checks.push(Check::new(
            format!("lambda above mu/delta, p={p}"),
            above.passed(),
            format!(
                "lambda {:.4}, {} minimizers, worst h {:.2e} <= {:.2e}",
                above.lambda, above.minimizers, above.worst_h, above.tolerance
            ),
        ));
        let below = exact_penalization(p, mu, 0.01 * mu / delta(4, p), 801)?;
        checks.push(Check::new(
            format!("lambda = 0.01 mu/delta breaks it, p={p}"),
            !below.passed(),
            format!(
                "lambda {:.4}, worst h {:.2e} vs tolerance {:.2e}",
                below.lambda, below.worst_h, below.tolerance
            ),
        ));
    }
    Ok(checks)
}

// ---------------------------------------------------------------------------
// quantiles

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileStats {
    pub samples: usize,
    /// Largest `|grid minimum - superquantile|`.
    pub superquantile_gap: f64,
    /// Samples where `ecdf(Q_p) < p` or `Q_p > CVaR_p`.
    pub order_failures: usize,
}

/// Random samples (sizes 1 to 60, on-grid and off-grid levels) comparing the
/// grid minimum of the Rockafellar objective with the superquantile.
pub fn superquantile_grid(samples: usize, seed: u64) -> Result<QuantileStats> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut stats = QuantileStats {
        samples,
        superquantile_gap: 0.0,
        order_failures: 0,
    };
    for _ in 0..samples {
        let n = rng.gen_range(1..=60);
        let mut values: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        if n > 2 && rng.gen_bool(0.3) {
            values[1] = values[0];
        }
        let p = if rng.gen_bool(0.3) {
            rng.gen_range(0..n) as f64 / n as f64
        } else {
            rng.gen_range(0.0..0.999)
        };
        let sample = Sample::new(values.clone())?;
        let sq = sample.superquantile(p)?;
        let (best, _) = grid_minimize(&values, p, 4000, 0.0);
        stats.superquantile_gap = stats.superquantile_gap.max((best - sq).abs());
        let q = sample.quantile(p)?;
        if sample.ecdf(q) < p - 1e-12 || q > sq + 1e-12 {
            stats.order_failures += 1;
        }
    }
    Ok(stats)
}

fn quantile_checks(seed: u64) -> Result<Vec<Check>> {
    let stats = superquantile_grid(200, seed)?;
    Ok(vec![
        Check::new(
            "grid minimum equals superquantile",
            stats.superquantile_gap <= SUPERQUANTILE_TOL,
            format!("{} samples, worst gap {:.2e}", stats.samples, stats.superquantile_gap),
        ),
        Check::new(
            "quantile reaches level below superquantile",
            stats.order_failures == 0,
            format!("{} failures", stats.order_failures),
        ),
    ])
}
