//! Outer double-penalization loop around the bundle method.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::time::{Duration, Instant};

use crate::bundle::{run_bundle, BundleConfig, BundleStatus, DcObjective, SeriousStep};
use crate::empirical::Sample;
use crate::error::{Error, Result};
use crate::penalty::{delta, value_function_from_values, DcOracleOutput, PenaltyOracle, PenaltyParams};
use crate::problem::{satisfied_fraction, ChanceProblem};
use crate::scalar::Real;

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig<T> {
    pub p: T,
    pub mu0: T,
    pub lambda0: T,
    pub mu_factor: T,
    pub lambda_factor: T,
    /// Raise `lambda` above `mu / delta` after each update.
    pub enforce_theory_ratio: bool,
    pub rho: T,
    /// Use the smoothed superquantile in the concave part.
    pub smoothed: bool,
    pub outer_max: usize,
    pub feasibility_tol: T,
    /// Scenarios with `g <= constraint_tol` count as satisfied.
    pub constraint_tol: T,
    pub bundle: BundleConfig<T>,
    /// `(x, eta)`; empty means the origin.
    pub start: Vec<T>,
    pub seed: u64,
    /// Record wall-clock time in the log rows. Off keeps logs reproducible.
    pub log_time: bool,
}

impl<T: Real> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            p: T::lit(0.9),
            mu0: T::lit(10.0),
            lambda0: T::lit(2.0),
            mu_factor: T::one(),
            lambda_factor: T::one(),
            enforce_theory_ratio: false,
            rho: T::lit(1e-2),
            smoothed: true,
            outer_max: 10,
            feasibility_tol: T::zero(),
            constraint_tol: T::lit(1e-9),
            bundle: BundleConfig::default(),
            start: Vec::new(),
            seed: 0,
            log_time: false,
        }
    }
}

impl<T: Real> SolverConfig<T> {
    pub fn validate(&self) -> Result<()> {
        PenaltyParams::new(self.p, self.mu0, self.lambda0, self.rho)?;
        if !(self.mu_factor >= T::one() && self.lambda_factor >= T::one()) {
            return Err(Error::InvalidParameter("penalty factors must be at least 1".into()));
        }
        if self.outer_max == 0 {
            return Err(Error::InvalidParameter("outer_max must be at least 1".into()));
        }
        if !(self.constraint_tol >= T::zero()) {
            return Err(Error::InvalidParameter("constraint_tol must be non-negative".into()));
        }
        if !(self.feasibility_tol >= T::zero()) {
            return Err(Error::InvalidParameter("feasibility_tol must be non-negative".into()));
        }
        self.bundle.validate()
    }
}

/// One accepted stability center.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRow<T> {
    pub iter: usize,
    pub time_s: f64,
    pub f: T,
    pub prob: T,
    pub h: T,
    pub eta: T,
    pub x: Vec<T>,
}

/// State at the end of one outer iteration.
#[derive(Debug, Clone, PartialEq)]
pub struct OuterRecord<T> {
    pub mu: T,
    pub lambda: T,
    pub f: T,
    pub eta: T,
    pub prob: T,
    pub status: BundleStatus,
}

#[derive(Debug, Clone)]
pub struct SolveReport<T> {
    pub solution: Vec<T>,
    pub eta: T,
    pub objective: T,
    pub empirical_prob: T,
    pub h: T,
    pub feasible: bool,
    pub outer_iterations: usize,
    pub outer: Vec<OuterRecord<T>>,
    pub log: Vec<LogRow<T>>,
    pub warnings: Vec<String>,
    pub serious_steps: usize,
    pub null_steps: usize,
    pub elapsed: Duration,
}

impl<T: Real> SolveReport<T> {
    /// Iterate log as CSV: `iter,time_s,f,prob,h,eta,x1..xd`.
    pub fn log_csv(&self) -> String {
        let d = self.solution.len();
        let mut out = String::from("iter,time_s,f,prob,h,eta");
        for j in 1..=d {
            let _ = write!(out, ",x{j}");
        }
        out.push('\n');
        for row in &self.log {
            let _ = write!(
                out,
                "{},{},{},{},{},{}",
                row.iter, row.time_s, row.f, row.prob, row.h, row.eta
            );
            for v in &row.x {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// The penalized problem as a DC objective over `(x, eta)`.
pub struct PenalizedDc<'a, T> {
    oracle: PenaltyOracle<'a, T>,
    smoothed: bool,
    constraint_tol: T,
    lower: Vec<T>,
    upper: Vec<T>,
    cache: RefCell<Option<(Vec<T>, Vec<T>)>>,
}

impl<'a, T: Real> PenalizedDc<'a, T> {
    pub fn new(problem: &'a ChanceProblem<T>, params: PenaltyParams<T>, smoothed: bool, constraint_tol: T) -> Self {
        let mut lower = problem.bounds.lower.clone();
        let mut upper = problem.bounds.upper.clone();
        lower.push(T::neg_infinity());
        upper.push(T::infinity());
        Self {
            oracle: PenaltyOracle::new(problem, params),
            smoothed,
            constraint_tol,
            lower,
            upper,
            cache: RefCell::new(None),
        }
    }

    /// Constraint values at `x`, reusing the last evaluation.
    pub fn constraint_values(&self, x: &[T]) -> Result<Vec<T>> {
        if let Some((cx, g)) = self.cache.borrow().as_ref() {
            if cx.as_slice() == x {
                return Ok(g.clone());
            }
        }
        let g = self.oracle.problem.constraint_values(x)?;
        *self.cache.borrow_mut() = Some((x.to_vec(), g.clone()));
        Ok(g)
    }

    fn split<'u>(&self, u: &'u [T]) -> (&'u [T], T) {
        let d = self.oracle.problem.dim();
        (&u[..d], u[d])
    }
}

impl<T: Real> DcObjective<T> for PenalizedDc<'_, T> {
    fn dim(&self) -> usize {
        self.oracle.problem.dim() + 1
    }

    fn lower(&self) -> &[T] {
        &self.lower
    }

    fn upper(&self) -> &[T] {
        &self.upper
    }

    fn phi1(&self, u: &[T]) -> Result<DcOracleOutput<T>> {
        let (x, eta) = self.split(u);
        let g = self.constraint_values(x)?;
        self.oracle.phi1_with_values(x, eta, &g)
    }

    fn phi2(&self, u: &[T]) -> Result<DcOracleOutput<T>> {
        let (x, _) = self.split(u);
        let g = self.constraint_values(x)?;
        if self.smoothed {
            self.oracle.smoothed_phi2_with_values(x, &g)
        } else {
            self.oracle.phi2_with_values(x, &g)
        }
    }

    /// Moves `eta` to the `p`-quantile when the center is chance-feasible.
    fn restart_hook(&self, center: &mut [T]) -> Result<bool> {
        let d = self.oracle.problem.dim();
        let g = self.constraint_values(&center[..d])?;
        let p = self.oracle.params.p;
        if satisfied_fraction(&g, self.constraint_tol) >= p {
            center[d] = Sample::new(g)?.quantile(p)?;
            return Ok(true);
        }
        Ok(false)
    }
}

/// Summary of `(x, eta)` against the original chance constraint.
struct Status<T> {
    f: T,
    prob: T,
    h: T,
    g: Vec<T>,
}

fn status_at<T: Real>(problem: &ChanceProblem<T>, g: Vec<T>, x: &[T], eta: T, config: &SolverConfig<T>) -> Result<Status<T>> {
    let p = config.p;
    Ok(Status {
        f: problem.objective(x)?,
        prob: satisfied_fraction(&g, config.constraint_tol),
        h: value_function_from_values(&g, p, eta)?,
        g,
    })
}

/// Runs the outer penalty loop.
pub fn solve<T: Real>(problem: &ChanceProblem<T>, config: &SolverConfig<T>) -> Result<SolveReport<T>> {
    config.validate()?;
    let d = problem.dim();
    let mut u = if config.start.is_empty() {
        vec![T::zero(); d + 1]
    } else if config.start.len() == d + 1 {
        config.start.clone()
    } else {
        return Err(Error::Dimension {
            expected: d + 1,
            got: config.start.len(),
        });
    };
    problem.bounds.project(&mut u[..d]);

    let clock = Instant::now();
    let n = problem.num_scenarios();
    let (mut mu, mut lambda) = (config.mu0, config.lambda0);
    if config.enforce_theory_ratio {
        lambda = lambda.max(theory_lambda(mu, n, config.p));
    }
    let mut log: Vec<LogRow<T>> = Vec::new();
    let mut outer = Vec::new();
    let mut warnings = Vec::new();
    let (mut serious, mut null) = (0, 0);
    let mut feasible = false;

    for k in 0..config.outer_max {
        let params = PenaltyParams::new(config.p, mu, lambda, config.rho)?;
        let dc = PenalizedDc::new(problem, params, config.smoothed, config.constraint_tol);
        let mut log_error = None;
        let outcome = run_bundle(&dc, &u, &config.bundle, |step: SeriousStep<'_, T>| {
            if log_error.is_some() {
                return;
            }
            let x = &step.center[..d];
            let eta = step.center[d];
            let row = dc
                .constraint_values(x)
                .and_then(|g| status_at(problem, g, x, eta, config));
            match row {
                Ok(st) => log.push(LogRow {
                    iter: log.len() + 1,
                    time_s: if config.log_time {
                        clock.elapsed().as_secs_f64()
                    } else {
                        0.0
                    },
                    f: st.f,
                    prob: st.prob,
                    h: st.h,
                    eta,
                    x: x.to_vec(),
                }),
                Err(e) => log_error = Some(e),
            }
        })?;
        if let Some(e) = log_error {
            return Err(e);
        }
        serious += outcome.serious_steps;
        null += outcome.null_steps;
        u = outcome.point;
        if outcome.status == BundleStatus::IterationLimit {
            warnings.push(format!(
                "outer iteration {}: bundle stopped at the iteration limit ({})",
                k + 1,
                config.bundle.max_iters
            ));
        }

        let g = dc.constraint_values(&u[..d])?;
        let prob = satisfied_fraction(&g, config.constraint_tol);
        feasible = prob >= config.p - config.feasibility_tol;
        if feasible && prob >= config.p {
            u[d] = Sample::new(g)?.quantile(config.p)?;
        }
        outer.push(OuterRecord {
            mu,
            lambda,
            f: problem.objective(&u[..d])?,
            eta: u[d],
            prob,
            status: outcome.status,
        });
        if feasible && outcome.status == BundleStatus::Converged {
            break;
        }
        mu = mu * config.mu_factor;
        lambda = lambda * config.lambda_factor;
        if config.enforce_theory_ratio {
            lambda = lambda.max(theory_lambda(mu, n, config.p));
        }
    }

    let x = u[..d].to_vec();
    let eta = u[d];
    let st = status_at(problem, problem.constraint_values(&x)?, &x, eta, config)?;
    debug_assert_eq!(st.g.len(), n);
    Ok(SolveReport {
        objective: st.f,
        empirical_prob: st.prob,
        h: st.h,
        feasible,
        solution: x,
        eta,
        outer_iterations: outer.len(),
        outer,
        log,
        warnings,
        serious_steps: serious,
        null_steps: null,
        elapsed: clock.elapsed(),
    })
}

/// Smallest `lambda` above the exact-penalty threshold `mu / delta`.
pub fn theory_lambda<T: Real>(mu: T, n: usize, p: T) -> T {
    (T::one() + T::lit(1e-6)) * mu / delta(n, p)
}

/// Advisory check of the outer sequence: `f` non-decreasing and
/// `max(eta, 0)` non-increasing, both up to `1e-6 (1 + |f|)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MonotonicityDiagnostic {
    pub checked: usize,
    pub f_violations: usize,
    pub eta_violations: usize,
}

impl MonotonicityDiagnostic {
    pub fn violations(&self) -> usize {
        self.f_violations + self.eta_violations
    }
}

pub fn check_monotonicity<T: Real>(records: &[OuterRecord<T>]) -> MonotonicityDiagnostic {
    let mut diag = MonotonicityDiagnostic {
        checked: records.len().saturating_sub(1),
        f_violations: 0,
        eta_violations: 0,
    };
    for pair in records.windows(2) {
        let (a, b) = (&pair[0], &pair[1]);
        let tol = T::lit(1e-6) * (T::one() + a.f.abs());
        if a.f > b.f + tol {
            diag.f_violations += 1;
        }
        if a.eta.max(T::zero()) < b.eta.max(T::zero()) - tol {
            diag.eta_violations += 1;
        }
    }
    diag
}
