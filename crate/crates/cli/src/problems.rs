//! Problem instances selected by a [`RunConfig`].

use chance_core::benchmarks::{norm_problem, toy2d_with_w};
use chance_core::problem::{load_scenarios, BoxConstraints, ChanceProblem, FnOracles};

use crate::config::{ProblemSpec, RunConfig, Template, DEFAULT_SCENARIOS};
use crate::CliError;

pub struct Instance {
    pub problem: ChanceProblem<f64>,
    pub known_opt: Option<f64>,
}

pub fn build(config: &RunConfig) -> Result<Instance, CliError> {
    let seed = config.solver.seed;
    let n = config.n.unwrap_or(DEFAULT_SCENARIOS);
    if !matches!(config.problem, ProblemSpec::File { .. })
        && (config.cost.is_some() || config.lower.is_some() || config.upper.is_some())
    {
        return Err(CliError::Usage(
            "cost, lower and upper apply to scenario-file problems only".into(),
        ));
    }
    match &config.problem {
        ProblemSpec::Toy2d => Ok(Instance {
            problem: toy2d_with_w(seed, n, config.toy_w).problem,
            known_opt: None,
        }),
        ProblemSpec::Norm(d) => {
            let inst = norm_problem(*d, seed, n)?;
            Ok(Instance {
                problem: inst.problem,
                known_opt: inst.known_opt,
            })
        }
        ProblemSpec::File { template, path } => {
            let mut scenarios = load_scenarios(path, config.header)?;
            if let Some(k) = config.n {
                scenarios = scenarios.truncated(k)?;
            }
            let d = scenarios.dim().checked_sub(1).filter(|&d| d >= 1).ok_or_else(|| {
                CliError::Usage("scenario rows need at least two columns".into())
            })?;
            let vector = |name: &str, v: &Option<Vec<f64>>, default: f64| match v {
                Some(v) if v.len() != d => Err(CliError::Usage(format!(
                    "{name} has {} entries, the problem has dimension {d}",
                    v.len()
                ))),
                Some(v) => Ok(v.clone()),
                None => Ok(vec![default; d]),
            };
            let cost = vector("cost", &config.cost, -1.0)?;
            let lower_default = match template {
                Template::Linear => 0.0,
                Template::Quadratic => f64::NEG_INFINITY,
            };
            let bounds = BoxConstraints::new(
                vector("lower", &config.lower, lower_default)?,
                vector("upper", &config.upper, f64::INFINITY)?,
            )?;
            let problem = ChanceProblem::new(template_oracles(*template, cost), bounds, scenarios)?;
            Ok(Instance {
                problem,
                known_opt: None,
            })
        }
    }
}

/// `f(x) = c^T x` with the template's `g`.
fn template_oracles(template: Template, cost: Vec<f64>) -> FnOracles<f64> {
    let d = cost.len();
    let c = cost.clone();
    let f = move |x: &[f64]| c.iter().zip(x).map(|(a, b)| a * b).sum::<f64>();
    let grad_f = move |_: &[f64], out: &mut [f64]| out.copy_from_slice(&cost);
    match template {
        Template::Linear => FnOracles::new(
            d,
            f,
            grad_f,
            move |x: &[f64], xi: &[f64]| xi[..d].iter().zip(x).map(|(a, b)| a * b).sum::<f64>() - xi[d],
            move |_: &[f64], xi: &[f64], out: &mut [f64]| out.copy_from_slice(&xi[..d]),
        ),
        Template::Quadratic => FnOracles::new(
            d,
            f,
            grad_f,
            move |x: &[f64], xi: &[f64]| x.iter().zip(&xi[..d]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() - xi[d],
            move |x: &[f64], xi: &[f64], out: &mut [f64]| {
                for ((o, a), b) in out.iter_mut().zip(x).zip(&xi[..d]) {
                    *o = 2.0 * (a - b);
                }
            },
        ),
    }
}
