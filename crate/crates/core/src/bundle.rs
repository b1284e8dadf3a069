//! Proximal bundle method for `φ1 - φ2` with `φ1`, `φ2` convex and `φ2`
//! differentiable (or replaced by its smoothing).
//!
//! Cutting planes model `φ1`; `φ2` enters through its linearization at the
//! current stability center. The master problem is solved by [`crate::qp`].

use crate::error::{Error, Result};
use crate::penalty::DcOracleOutput;
use crate::qp::MasterQp;
use crate::scalar::{dist2, dot, Real};

/// Difference-of-convex objective seen by the bundle method.
pub trait DcObjective<T: Real> {
    fn dim(&self) -> usize;
    /// Lower bounds of the variables (`-inf` for free coordinates).
    fn lower(&self) -> &[T];
    fn upper(&self) -> &[T];
    /// Value and a subgradient of the convex part.
    fn phi1(&self, u: &[T]) -> Result<DcOracleOutput<T>>;
    /// Value and gradient of the subtracted convex part.
    fn phi2(&self, u: &[T]) -> Result<DcOracleOutput<T>>;
    /// Called when the bundle overflows. May move the center to a point with
    /// no larger objective; returns whether it did.
    fn restart_hook(&self, _center: &mut [T]) -> Result<bool> {
        Ok(false)
    }
}

/// Linearization `value + <slope, u - anchor>` of `φ1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CuttingPlane<T> {
    pub anchor: Vec<T>,
    pub value: T,
    pub slope: Vec<T>,
}

impl<T: Real> CuttingPlane<T> {
    pub fn eval(&self, u: &[T]) -> T {
        let mut v = self.value;
        for ((&s, &ui), &ai) in self.slope.iter().zip(u).zip(&self.anchor) {
            v = v + s * (ui - ai);
        }
        v
    }

    /// Checks `plane(u) <= φ1(u) + tol (1 + |φ1(u)|)` at the given points.
    pub fn underestimates<O: DcObjective<T> + ?Sized>(&self, obj: &O, points: &[Vec<T>], tol: T) -> Result<bool> {
        for u in points {
            let actual = obj.phi1(u)?.value;
            if self.eval(u) > actual + tol * (T::one() + actual.abs()) {
                return Ok(false);
            }
        }
        Ok(true)
    }
}

/// `prox` is the step parameter `t` of the master problem, which penalizes
/// `|u - c|^2 / (2t)`; larger values allow longer steps.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleConfig<T> {
    pub prox_start: T,
    pub prox_min: T,
    pub prox_max: T,
    /// Multiplier applied to the prox step after a serious step.
    pub prox_up: T,
    /// Multiplier applied after a null step.
    pub prox_down: T,
    /// Cap on the prox step after the bundle overflows.
    pub prox_restart: T,
    pub kappa: T,
    pub max_planes: usize,
    pub stop_tol: T,
    pub max_iters: usize,
}

impl<T: Real> Default for BundleConfig<T> {
    fn default() -> Self {
        Self {
            prox_start: T::one(),
            prox_min: T::lit(1e-4),
            prox_max: T::lit(1e5),
            prox_up: T::one(),
            prox_down: T::one(),
            prox_restart: T::one(),
            kappa: T::lit(1e-4),
            max_planes: 50,
            stop_tol: T::lit(1e-7),
            max_iters: 5000,
        }
    }
}

impl<T: Real> BundleConfig<T> {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if !(self.prox_min > T::zero() && self.prox_min <= self.prox_max) {
            return bad("prox bounds must satisfy 0 < min <= max");
        }
        for (name, v) in [("prox_start", self.prox_start), ("prox_restart", self.prox_restart)] {
            if !(v > T::zero() && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive")));
            }
        }
        if !(self.prox_up > T::zero() && self.prox_down > T::zero()) {
            return bad("prox factors must be positive");
        }
        if !(self.kappa > T::zero() && self.kappa < T::one()) {
            return bad("kappa must lie in (0, 1)");
        }
        if self.max_planes == 0 {
            return bad("max_planes must be at least 1");
        }
        if !(self.stop_tol >= T::zero()) {
            return bad("stop_tol must be non-negative");
        }
        Ok(())
    }
}

/// Mutable state of a bundle run.
#[derive(Debug, Clone)]
pub struct BundleState<T> {
    pub center: Vec<T>,
    /// `φ1(center) - φ2(center)`.
    pub center_value: T,
    pub center_phi1: T,
    pub planes: Vec<CuttingPlane<T>>,
    pub prox: T,
    pub config: BundleConfig<T>,
}

impl<T: Real> BundleState<T> {
    fn clamp_prox(&mut self) {
        self.prox = self.prox.max(self.config.prox_min).min(self.config.prox_max);
    }
}

/// Candidate point from the master problem.
#[derive(Debug, Clone)]
pub struct MasterStep<T> {
    pub candidate: Vec<T>,
    /// DC model value at the candidate.
    pub model_value: T,
    pub kkt_residual: T,
}

/// Minimizes `max_j plane_j(u) - <phi2_grad, u - c> + |u - c|^2 / (2 prox)`
/// over the box.
pub fn master_subproblem<T: Real>(
    state: &BundleState<T>,
    phi2_grad: &[T],
    lower: &[T],
    upper: &[T],
) -> Result<MasterStep<T>> {
    assert!(!state.planes.is_empty(), "master problem needs a plane");
    let c = &state.center;
    let slopes: Vec<Vec<T>> = state
        .planes
        .iter()
        .map(|pl| pl.slope.iter().zip(phi2_grad).map(|(&s, &g)| s - g).collect())
        .collect();
    let errors: Vec<T> = state
        .planes
        .iter()
        .map(|pl| (state.center_phi1 - pl.eval(c)).max(T::zero()))
        .collect();
    let lo: Vec<T> = lower.iter().zip(c).map(|(&l, &ci)| l - ci).collect();
    let hi: Vec<T> = upper.iter().zip(c).map(|(&h, &ci)| h - ci).collect();
    let qp = MasterQp {
        slopes: &slopes,
        errors: &errors,
        prox: state.prox.recip(),
        lower: &lo,
        upper: &hi,
    };
    let sol = qp.solve()?;
    let candidate: Vec<T> = c
        .iter()
        .zip(&sol.step)
        .zip(lower.iter().zip(upper))
        .map(|((&ci, &w), (&l, &h))| (ci + w).max(l).min(h))
        .collect();
    Ok(MasterStep {
        candidate,
        model_value: state.center_value + sol.model,
        kkt_residual: sol.kkt_residual,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StepKind {
    Serious,
    Null,
}

/// Serious iff `center_value - candidate_value >= kappa * predicted` with
/// `predicted = center_value - model_value` and a positive achieved decrease.
pub fn descent_test<T: Real>(state: &BundleState<T>, model_value: T, candidate_value: T) -> StepKind {
    let predicted = (state.center_value - model_value).max(T::zero());
    let achieved = state.center_value - candidate_value;
    if achieved > T::zero() && achieved >= state.config.kappa * predicted {
        StepKind::Serious
    } else {
        StepKind::Null
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BundleStatus {
    /// Candidate within `stop_tol` of the center.
    Converged,
    IterationLimit,
}

#[derive(Debug, Clone)]
pub struct BundleOutcome<T> {
    pub point: Vec<T>,
    pub value: T,
    pub status: BundleStatus,
    pub iterations: usize,
    pub serious_steps: usize,
    pub null_steps: usize,
    pub restarts: usize,
    pub final_prox: T,
}

/// Progress notification for each accepted center.
#[derive(Debug, Clone, Copy)]
pub struct SeriousStep<'a, T> {
    pub center: &'a [T],
    pub value: T,
}

fn plane_at<T: Real>(u: &[T], out: &DcOracleOutput<T>) -> Result<CuttingPlane<T>> {
    if let Some(bad) = out.subgradient.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            index: bad,
            value: out.subgradient[bad].as_f64(),
        });
    }
    Ok(CuttingPlane {
        anchor: u.to_vec(),
        value: out.value,
        slope: out.subgradient.clone(),
    })
}

fn residual_limit<T: Real>() -> T {
    T::lit(1e-6).max(T::epsilon().sqrt())
}

/// Runs the proximal bundle method from `start` (projected onto the box).
pub fn run_bundle<T: Real, O: DcObjective<T> + ?Sized>(
    obj: &O,
    start: &[T],
    config: &BundleConfig<T>,
    mut on_serious: impl FnMut(SeriousStep<'_, T>),
) -> Result<BundleOutcome<T>> {
    config.validate()?;
    let (lower, upper) = (obj.lower(), obj.upper());
    if start.len() != obj.dim() {
        return Err(Error::Dimension {
            expected: obj.dim(),
            got: start.len(),
        });
    }
    let center: Vec<T> = start
        .iter()
        .zip(lower.iter().zip(upper))
        .map(|(&v, (&l, &h))| v.max(l).min(h))
        .collect();

    let mut state = BundleState {
        center,
        center_value: T::zero(),
        center_phi1: T::zero(),
        planes: Vec::new(),
        prox: config.prox_start,
        config: config.clone(),
    };
    state.clamp_prox();
    let mut phi2_grad = reseed(obj, &mut state)?;

    let (mut serious, mut null, mut restarts) = (0, 0, 0);
    for iter in 0..config.max_iters {
        let step = match master_subproblem(&state, &phi2_grad, lower, upper) {
            Ok(step) => step,
            Err(Error::Qp { residual, best, .. }) if T::lit(residual) <= residual_limit::<T>() => {
                fallback_step(&state, &phi2_grad, &best, lower, upper)
            }
            // compress to the center cut, whose master problem is closed form
            Err(Error::Qp { .. }) if state.planes.len() > 1 => {
                state.planes.truncate(1);
                continue;
            }
            Err(e) => return Err(e),
        };
        if dist2(&step.candidate, &state.center) <= config.stop_tol {
            return Ok(BundleOutcome {
                point: state.center,
                value: state.center_value,
                status: BundleStatus::Converged,
                iterations: iter + 1,
                serious_steps: serious,
                null_steps: null,
                restarts,
                final_prox: state.prox,
            });
        }
        let out1 = obj.phi1(&step.candidate)?;
        let out2 = obj.phi2(&step.candidate)?;
        let cand_value = out1.value - out2.value;
        match descent_test(&state, step.model_value, cand_value) {
            StepKind::Serious => {
                serious += 1;
                state.planes.clear();
                state.planes.push(plane_at(&step.candidate, &out1)?);
                state.center = step.candidate;
                state.center_value = cand_value;
                state.center_phi1 = out1.value;
                phi2_grad = out2.subgradient;
                state.prox = state.prox * config.prox_up;
                state.clamp_prox();
                on_serious(SeriousStep {
                    center: &state.center,
                    value: state.center_value,
                });
            }
            StepKind::Null => {
                null += 1;
                state.planes.push(plane_at(&step.candidate, &out1)?);
                state.prox = state.prox * config.prox_down;
                state.clamp_prox();
                if state.planes.len() > config.max_planes {
                    restarts += 1;
                    state.prox = state.prox.min(config.prox_restart);
                    state.clamp_prox();
                    obj.restart_hook(&mut state.center)?;
                    phi2_grad = reseed(obj, &mut state)?;
                }
            }
        }
    }
    Ok(BundleOutcome {
        point: state.center,
        value: state.center_value,
        status: BundleStatus::IterationLimit,
        iterations: config.max_iters,
        serious_steps: serious,
        null_steps: null,
        restarts,
        final_prox: state.prox,
    })
}

/// Evaluates the center and resets the bundle to its single cut.
fn reseed<T: Real, O: DcObjective<T> + ?Sized>(obj: &O, state: &mut BundleState<T>) -> Result<Vec<T>> {
    let out1 = obj.phi1(&state.center)?;
    let out2 = obj.phi2(&state.center)?;
    state.center_value = out1.value - out2.value;
    state.center_phi1 = out1.value;
    state.planes.clear();
    state.planes.push(plane_at(&state.center, &out1)?);
    Ok(out2.subgradient)
}

/// Recovers a step from the best interior point iterate `(w, r)`.
fn fallback_step<T: Real>(state: &BundleState<T>, phi2_grad: &[T], best: &[f64], lower: &[T], upper: &[T]) -> MasterStep<T> {
    let d = state.center.len();
    let candidate: Vec<T> = (0..d)
        .map(|i| (state.center[i] + T::lit(best[i])).max(lower[i]).min(upper[i]))
        .collect();
    let w: Vec<T> = candidate.iter().zip(&state.center).map(|(&a, &b)| a - b).collect();
    let model = state
        .planes
        .iter()
        .map(|pl| pl.eval(&candidate))
        .fold(T::neg_infinity(), T::max)
        - state.center_phi1
        - dot(phi2_grad, &w);
    MasterStep {
        candidate,
        model_value: state.center_value + model,
        kkt_residual: T::lit(best.len() as f64).recip(),
    }
}
