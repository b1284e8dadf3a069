//! `run` subcommand: solve, write CSV outputs, summarize.

use std::fmt::Write as _;
use std::fs;

use chance_core::benchmarks::{level_sets, level_sets_csv, GridWindow};
use chance_core::problem::empirical_probability;
use chance_core::solver::{solve, SolveReport};

use crate::config::RunConfig;
use crate::problems::{build, Instance};
use crate::CliError;

pub struct RunOutcome {
    pub report: SolveReport<f64>,
    pub summary: String,
}

impl RunOutcome {
    /// 0 when the final iterate is feasible, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.report.feasible {
            0
        } else {
            2
        }
    }
}

pub fn execute(config: &RunConfig) -> Result<RunOutcome, CliError> {
    let Instance { problem, known_opt } = build(config)?;
    let report = solve(&problem, &config.solver)?;

    fs::create_dir_all(&config.out)?;
    fs::write(config.out.join("config.txt"), config.to_text())?;
    fs::write(config.out.join("iterates.csv"), report.log_csv())?;
    let d = problem.dim();
    if d <= 2 {
        let (lower, upper) = window(config, &report.solution);
        let grid = GridWindow {
            lower,
            upper,
            resolution: config.levelsets_resolution,
        };
        fs::write(config.out.join("levelsets.csv"), level_sets_csv(&level_sets(&problem, &grid)?))?;
    }

    let strict = empirical_probability(&problem.constraint_values(&report.solution)?);
    let mut summary = format!(
        "status={} problem={} n={} f={} prob={} prob_strict={} h={:e} eta={:e} outer={} serious={} null={} time_s={:.3}",
        if report.feasible { "feasible" } else { "infeasible" },
        config.problem,
        problem.num_scenarios(),
        report.objective,
        report.empirical_prob,
        strict,
        report.h,
        report.eta,
        report.outer_iterations,
        report.serious_steps,
        report.null_steps,
        report.elapsed.as_secs_f64(),
    );
    if let Some(opt) = known_opt {
        let _ = write!(summary, " f_star={opt} subopt={:e}", (report.objective - opt) / opt.abs());
    }
    Ok(RunOutcome { report, summary })
}

/// Level-set window from the config, or the solution `± 2` clipped to the
/// box.
fn window(config: &RunConfig, solution: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let lower = config
        .levelsets_lower
        .clone()
        .unwrap_or_else(|| solution.iter().map(|v| v - 2.0).collect());
    let upper = config
        .levelsets_upper
        .clone()
        .unwrap_or_else(|| solution.iter().map(|v| v + 2.0).collect());
    let lower = match &config.lower {
        Some(lo) => lower.iter().zip(lo).map(|(a, b)| a.max(*b)).collect(),
        None => lower,
    };
    let upper = match &config.upper {
        Some(hi) => upper.iter().zip(hi).map(|(a, b)| a.min(*b)).collect(),
        None => upper,
    };
    (lower, upper)
}

/// Outer iterations and warnings for `--verbose`.
pub fn details(report: &SolveReport<f64>) -> String {
    let mut out = String::new();
    for (k, r) in report.outer.iter().enumerate() {
        let _ = writeln!(
            out,
            "outer {}: mu={} lambda={} f={} eta={:e} prob={} bundle={:?}",
            k + 1,
            r.mu,
            r.lambda,
            r.f,
            r.eta,
            r.prob,
            r.status
        );
    }
    for w in &report.warnings {
        let _ = writeln!(out, "warning: {w}");
    }
    out
}
