//! Flat `key = value` run configuration.
//!
//! Defaults come from the selected problem's recommended settings; file
//! entries and `--set` overrides are applied on top in order. Unknown keys
//! are rejected by name.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chance_core::benchmarks::{norm_config, toy2d_config, toy2d_default_w};
use chance_core::solver::SolverConfig;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, found {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("invalid value {value:?} for `{key}`: {reason}")]
    Value {
        key: String,
        value: String,
        reason: String,
    },
}

type Result<T> = std::result::Result<T, ConfigError>;

/// Oracle template applied to rows of a scenario file.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Template {
    /// Row `(a_1..a_d, b)`: `g(x, xi) = a^T x - b`.
    Linear,
    /// Row `(c_1..c_d, r)`: `g(x, xi) = |x - c|^2 - r`.
    Quadratic,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ProblemSpec {
    Toy2d,
    Norm(usize),
    File { template: Template, path: PathBuf },
}

impl FromStr for ProblemSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        if s == "toy2d" {
            return Ok(Self::Toy2d);
        }
        let (kind, rest) = s
            .split_once(':')
            .ok_or_else(|| "expected toy2d, norm:<d>, linear:<path> or quadratic:<path>".to_string())?;
        match kind {
            "norm" => match rest.parse::<usize>() {
                Ok(d) if d >= 1 => Ok(Self::Norm(d)),
                _ => Err("norm dimension must be a positive integer".into()),
            },
            "linear" | "quadratic" if !rest.is_empty() => Ok(Self::File {
                template: if kind == "linear" {
                    Template::Linear
                } else {
                    Template::Quadratic
                },
                path: PathBuf::from(rest),
            }),
            _ => Err("expected toy2d, norm:<d>, linear:<path> or quadratic:<path>".into()),
        }
    }
}

impl std::fmt::Display for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Toy2d => f.write_str("toy2d"),
            Self::Norm(d) => write!(f, "norm:{d}"),
            Self::File { template, path } => {
                let kind = match template {
                    Template::Linear => "linear",
                    Template::Quadratic => "quadratic",
                };
                write!(f, "{kind}:{}", path.display())
            }
        }
    }
}

/// Scenario count generated for benchmark problems when `n` is not set.
pub const DEFAULT_SCENARIOS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    /// Scenario count; for files, keeps the first `n` rows.
    pub n: Option<usize>,
    pub solver: SolverConfig<f64>,
    pub toy_w: [f64; 2],
    /// Scenario file has a header row.
    pub header: bool,
    /// Objective `c^T x` of file problems; `-1` in every coordinate if unset.
    pub cost: Option<Vec<f64>>,
    pub lower: Option<Vec<f64>>,
    pub upper: Option<Vec<f64>>,
    pub levelsets_lower: Option<Vec<f64>>,
    pub levelsets_upper: Option<Vec<f64>>,
    pub levelsets_resolution: usize,
    pub out: PathBuf,
    pub verbose: bool,
}

impl RunConfig {
    /// Recommended settings for `problem`.
    pub fn defaults(problem: ProblemSpec, seed: u64) -> Self {
        let (solver, window) = match &problem {
            ProblemSpec::Toy2d => (toy2d_config(seed), Some((vec![-1.0; 2], vec![3.0; 2]))),
            ProblemSpec::Norm(d) => (norm_config(*d, seed), Some((vec![0.0; *d], vec![5.0; *d]))),
            ProblemSpec::File { .. } => (SolverConfig { seed, ..SolverConfig::default() }, None),
        };
        let (levelsets_lower, levelsets_upper) = match window {
            Some((lo, hi)) => (Some(lo), Some(hi)),
            None => (None, None),
        };
        Self {
            problem,
            n: None,
            solver,
            toy_w: toy2d_default_w(),
            header: false,
            cost: None,
            lower: None,
            upper: None,
            levelsets_lower,
            levelsets_upper,
            levelsets_resolution: 100,
            out: PathBuf::from("out"),
            verbose: false,
        }
    }

    /// Builds a config from `key = value` entries; `problem` and `seed` are
    /// resolved first so the remaining keys override the right defaults.
    pub fn from_entries(entries: &[Entry]) -> Result<Self> {
        let last = |key: &str| entries.iter().rev().find(|e| e.key == key);
        let problem = match last("problem") {
            Some(e) => parse_value::<ProblemSpec>(&e.key, &e.value)?,
            None => ProblemSpec::Toy2d,
        };
        let seed = match last("seed") {
            Some(e) => parse_value::<u64>(&e.key, &e.value)?,
            None => 0,
        };
        let mut config = Self::defaults(problem, seed);
        for e in entries {
            config.set(&e.key, &e.value)?;
        }
        Ok(config)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_entries(&parse_entries(text)?)
    }

    pub fn load(path: &Path, overrides: &[Entry]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut entries = parse_entries(&text)?;
        entries.extend_from_slice(overrides);
        Self::from_entries(&entries)
    }

    /// Applies one entry.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = &mut self.solver;
        let b = &mut s.bundle;
        match key {
            "problem" => self.problem = parse_value(key, value)?,
            "n" => self.n = Some(parse_value(key, value)?),
            "seed" => s.seed = parse_value(key, value)?,
            "p" => s.p = parse_value(key, value)?,
            "pen1" => s.mu0 = parse_value(key, value)?,
            "pen2" => s.lambda0 = parse_value(key, value)?,
            "pen1_factor" => s.mu_factor = parse_value(key, value)?,
            "pen2_factor" => s.lambda_factor = parse_value(key, value)?,
            "enforce_theory_ratio" => s.enforce_theory_ratio = parse_value(key, value)?,
            "rho" => s.rho = parse_value(key, value)?,
            "smoothed" => s.smoothed = parse_value(key, value)?,
            "outer_max" => s.outer_max = parse_value(key, value)?,
            "feasibility_tol" => s.feasibility_tol = parse_value(key, value)?,
            "constraint_tol" => s.constraint_tol = parse_value(key, value)?,
            "start" => s.start = parse_list(key, value)?,
            "log_time" => s.log_time = parse_value(key, value)?,
            "bund_mu_start" => b.prox_start = parse_value(key, value)?,
            "bund_mu_min" => b.prox_min = parse_value(key, value)?,
            "bund_mu_max" => b.prox_max = parse_value(key, value)?,
            "bund_mu_inc" => b.prox_up = parse_value(key, value)?,
            "bund_mu_dec" => b.prox_down = parse_value(key, value)?,
            "bund_mu_restart" => b.prox_restart = parse_value(key, value)?,
            "bund_kappa" => b.kappa = parse_value(key, value)?,
            "bund_max_size_bundle_set" => b.max_planes = parse_value(key, value)?,
            "bund_stop_tol" => b.stop_tol = parse_value(key, value)?,
            "bund_max_iters" => b.max_iters = parse_value(key, value)?,
            "toy_w" => {
                let w = parse_list(key, value)?;
                self.toy_w = w.try_into().map_err(|_| value_error(key, value, "expected two numbers"))?;
            }
            "header" => self.header = parse_value(key, value)?,
            "cost" => self.cost = Some(parse_list(key, value)?),
            "lower" => self.lower = Some(parse_list(key, value)?),
            "upper" => self.upper = Some(parse_list(key, value)?),
            "levelsets_lower" => self.levelsets_lower = Some(parse_list(key, value)?),
            "levelsets_upper" => self.levelsets_upper = Some(parse_list(key, value)?),
            "levelsets_resolution" => self.levelsets_resolution = parse_value(key, value)?,
            "out" => self.out = PathBuf::from(value),
            "verbose" => self.verbose = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Every setting as `key = value` lines; [`RunConfig::parse`] inverts it.
    pub fn to_text(&self) -> String {
        let s = &self.solver;
        let b = &s.bundle;
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(out, "{k} = {v}");
        };
        put("problem", self.problem.to_string());
        if let Some(n) = self.n {
            put("n", n.to_string());
        }
        put("seed", s.seed.to_string());
        put("p", s.p.to_string());
        put("pen1", s.mu0.to_string());
        put("pen2", s.lambda0.to_string());
        put("pen1_factor", s.mu_factor.to_string());
        put("pen2_factor", s.lambda_factor.to_string());
        put("enforce_theory_ratio", s.enforce_theory_ratio.to_string());
        put("rho", s.rho.to_string());
        put("smoothed", s.smoothed.to_string());
        put("outer_max", s.outer_max.to_string());
        put("feasibility_tol", s.feasibility_tol.to_string());
        put("constraint_tol", s.constraint_tol.to_string());
        put("start", join(&s.start));
        put("log_time", s.log_time.to_string());
        put("bund_mu_start", b.prox_start.to_string());
        put("bund_mu_min", b.prox_min.to_string());
        put("bund_mu_max", b.prox_max.to_string());
        put("bund_mu_inc", b.prox_up.to_string());
        put("bund_mu_dec", b.prox_down.to_string());
        put("bund_mu_restart", b.prox_restart.to_string());
        put("bund_kappa", b.kappa.to_string());
        put("bund_max_size_bundle_set", b.max_planes.to_string());
        put("bund_stop_tol", b.stop_tol.to_string());
        put("bund_max_iters", b.max_iters.to_string());
        put("toy_w", join(&self.toy_w));
        put("header", self.header.to_string());
        for (k, v) in [
            ("cost", &self.cost),
            ("lower", &self.lower),
            ("upper", &self.upper),
            ("levelsets_lower", &self.levelsets_lower),
            ("levelsets_upper", &self.levelsets_upper),
        ] {
            if let Some(v) = v {
                put(k, join(v));
            }
        }
        put("levelsets_resolution", self.levelsets_resolution.to_string());
        put("out", self.out.display().to_string());
        put("verbose", self.verbose.to_string());
        out
    }
}

/// One `key = value` line.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Entry {
    pub key: String,
    pub value: String,
}

impl FromStr for Entry {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self> {
        parse_line(s, 0)?.ok_or_else(|| ConfigError::Syntax {
            line: 0,
            text: s.to_string(),
        })
    }
}

fn parse_line(raw: &str, line: usize) -> Result<Option<Entry>> {
    let text = raw.split('#').next().unwrap_or("").trim();
    if text.is_empty() {
        return Ok(None);
    }
    match text.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok(Some(Entry {
            key: k.trim().to_string(),
            value: v.trim().to_string(),
        })),
        _ => Err(ConfigError::Syntax {
            line,
            text: raw.to_string(),
        }),
    }
}

/// Non-empty, non-comment lines as entries. `#` starts a comment.
pub fn parse_entries(text: &str) -> Result<Vec<Entry>> {
    let mut entries = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        if let Some(e) = parse_line(raw, i + 1)? {
            entries.push(e);
        }
    }
    Ok(entries)
}

fn value_error(key: &str, value: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Value {
        key: key.to_string(),
        value: value.to_string(),
        reason: reason.into(),
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| value_error(key, value, e.to_string()))
}

/// Comma separated numbers; empty means an empty list.
fn parse_list(key: &str, value: &str) -> Result<Vec<f64>> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse_value(key, v.trim())).collect()
}

fn join(v: &[f64]) -> String {
    v.iter().map(f64::to_string).collect::<Vec<_>>().join(",")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_defaults() {
        let toy = RunConfig::defaults(ProblemSpec::Toy2d, 0);
        let b = &toy.solver.bundle;
        assert_eq!(toy.solver.start, vec![0.5, 1.5, 0.01]);
        assert_eq!((toy.solver.mu0, toy.solver.lambda0), (400.0, 600.0));
        assert_eq!((b.prox_start, b.prox_min, b.prox_max), (38.0, 1e-3, 1e3));
        assert_eq!((b.prox_up, b.prox_down, b.max_planes, b.stop_tol), (1.05, 0.95, 20, 1e-7));

        let norm = RunConfig::defaults(ProblemSpec::Norm(4), 0);
        let b = &norm.solver.bundle;
        assert_eq!(norm.solver.start, vec![0.1; 5]);
        assert_eq!(norm.solver.mu0, 10.0);
        assert_eq!((b.prox_start, b.prox_min, b.prox_max), (60.0, 1e-4, 1e5));
        assert_eq!((b.prox_up, b.prox_down, b.kappa, b.max_planes), (1.01, 0.99, 1e-4, 300));
        assert_eq!((norm.solver.mu_factor, norm.solver.lambda_factor), (1.0, 1.0));
    }

    #[test]
    fn round_trip() {
        let text = "problem = norm:3\nseed = 7\npen2 = 1.6\nbund_mu_start = 0.1\nstart = 0.2, 0.2, 0.2, 0\nverbose = true\n";
        let a = RunConfig::parse(text).unwrap();
        assert_eq!(a.solver.lambda0, 1.6);
        assert_eq!(a.solver.seed, 7);
        let b = RunConfig::parse(&a.to_text()).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.to_text(), b.to_text());

        let mut file = RunConfig::defaults(
            ProblemSpec::File {
                template: Template::Quadratic,
                path: "data/s.csv".into(),
            },
            1,
        );
        file.cost = Some(vec![1.0, -0.1 + 0.2]);
        file.n = Some(17);
        assert_eq!(RunConfig::parse(&file.to_text()).unwrap(), file);
    }

    #[test]
    fn later_entries_win_and_comments_are_skipped() {
        let c = RunConfig::parse("# comment\np = 0.5\n\np = 0.7 # trailing\n").unwrap();
        assert_eq!(c.solver.p, 0.7);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = RunConfig::parse("p = 0.5\nbund_size = 3\n").unwrap_err();
        assert!(matches!(&err, ConfigError::UnknownKey(k) if k == "bund_size"));
        assert!(err.to_string().contains("bund_size"));
    }

    #[test]
    fn bad_values_and_syntax() {
        assert!(matches!(RunConfig::parse("p = high"), Err(ConfigError::Value { .. })));
        assert!(matches!(RunConfig::parse("just words"), Err(ConfigError::Syntax { line: 1, .. })));
        assert!(RunConfig::parse("problem = norm:0").is_err());
        assert!(RunConfig::parse("toy_w = 1").is_err());
    }

    #[test]
    fn problem_selectors() {
        assert_eq!("norm:10".parse::<ProblemSpec>().unwrap(), ProblemSpec::Norm(10));
        assert_eq!(
            "linear:a/b.csv".parse::<ProblemSpec>().unwrap(),
            ProblemSpec::File {
                template: Template::Linear,
                path: "a/b.csv".into()
            }
        );
        assert!("cube".parse::<ProblemSpec>().is_err());
        assert!("linear:".parse::<ProblemSpec>().is_err());
    }
}
