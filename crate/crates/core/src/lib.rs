//! Solver for chance-constrained convex programs over scenario data,
//!
//! ```text
//! min f(x)   s.t.   P[g(x, xi) <= 0] >= p,   x in X (a box),
//! ```
//!
//! where `xi` is uniform over `n` scenarios. The chance constraint is
//! rewritten through the quantile/superquantile link as a bilevel program,
//! then doubly penalized into a difference-of-convex objective that a
//! proximal bundle method minimizes.

pub mod benchmarks;
pub mod bundle;
pub mod chi2;
pub mod empirical;
pub mod error;
pub mod penalty;
pub mod problem;
pub mod qp;
pub mod scalar;
pub mod simplex;
pub mod solver;
pub mod verify;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SolverConfigF64 = solver::SolverConfig<f64>;
pub type SolverConfigF32 = solver::SolverConfig<f32>;
pub type SolveReportF64 = solver::SolveReport<f64>;
pub type SolveReportF32 = solver::SolveReport<f32>;
pub type ChanceProblemF64 = problem::ChanceProblem<f64>;
pub type ChanceProblemF32 = problem::ChanceProblem<f32>;
pub type ScenarioSetF64 = problem::ScenarioSet<f64>;
pub type ScenarioSetF32 = problem::ScenarioSet<f32>;
pub type SampleF64 = empirical::Sample<f64>;
pub type SampleF32 = empirical::Sample<f32>;
