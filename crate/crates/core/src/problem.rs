//! Problem data: first-order oracles for `f` and `g(., xi)`, the box `X`, and
//! the equiprobable scenario matrix.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Scenario counts above this fan out over the rayon pool.
const PARALLEL_THRESHOLD: usize = 4096;

/// `n × m` matrix of realizations, row `i` = `xi_i`, each with mass `1/n`.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSet<T> {
    data: Vec<T>,
    n: usize,
    m: usize,
}

impl<T: Real> ScenarioSet<T> {
    /// Builds from row-major `data`.
    pub fn new(data: Vec<T>, n: usize, m: usize) -> Result<Self> {
        if n == 0 || m == 0 {
            return Err(Error::InvalidParameter(format!(
                "scenario set must be non-empty, got {n}x{m}"
            )));
        }
        if data.len() != n * m {
            return Err(Error::Dimension {
                expected: n * m,
                got: data.len(),
            });
        }
        if let Some((index, v)) = data.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(Error::NonFinite {
                index,
                value: v.as_f64(),
            });
        }
        Ok(Self { data, n, m })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let m = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != m) {
            return Err(Error::Dimension {
                expected: m,
                got: bad.len(),
            });
        }
        Self::new(rows.concat(), rows.len(), m)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.m..(i + 1) * self.m]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[T]> {
        self.data.chunks_exact(self.m)
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    /// First `k` scenarios (used to subsample large sets).
    pub fn truncated(&self, k: usize) -> Result<Self> {
        let k = k.min(self.n);
        Self::new(self.data[..k * self.m].to_vec(), k, self.m)
    }

    /// Comma separated text, one scenario per line, shortest round-trip
    /// decimal formatting.
    pub fn to_csv(&self, header: bool) -> String {
        let mut out = String::new();
        if header {
            let names: Vec<String> = (1..=self.m).map(|j| format!("xi{j}")).collect();
            out.push_str(&names.join(","));
            out.push('\n');
        }
        for row in self.rows() {
            for (j, v) in row.iter().enumerate() {
                if j > 0 {
                    out.push(',');
                }
                write!(out, "{v}").expect("string write");
            }
            out.push('\n');
        }
        out
    }

    /// Parses the text format written by [`ScenarioSet::to_csv`].
    pub fn parse_csv(text: &str, header: bool) -> Result<Self> {
        let mut rows: Vec<Vec<T>> = Vec::new();
        let mut header_pending = header;
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() {
                continue;
            }
            if header_pending {
                header_pending = false;
                continue;
            }
            let row = line
                .split(',')
                .map(|cell| {
                    let cell = cell.trim();
                    cell.parse::<T>().map_err(|_| Error::Parse {
                        line: line_no,
                        message: format!("non-numeric cell {cell:?}"),
                    })
                })
                .collect::<Result<Vec<T>>>()?;
            if let Some(first) = rows.first() {
                if first.len() != row.len() {
                    return Err(Error::Parse {
                        line: line_no,
                        message: format!("expected {} columns, found {}", first.len(), row.len()),
                    });
                }
            }
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Parse {
                    line: line_no,
                    message: format!("non-finite cell {v}"),
                });
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(Error::Parse {
                line: 1,
                message: "no scenario rows".into(),
            });
        }
        Self::from_rows(&rows)
    }
}

/// Reads a scenario file; see [`ScenarioSet::parse_csv`].
pub fn load_scenarios<T: Real>(path: impl AsRef<Path>, header: bool) -> Result<ScenarioSet<T>> {
    let text = fs::read_to_string(path)?;
    ScenarioSet::parse_csv(&text, header)
}

pub fn save_scenarios<T: Real>(
    path: impl AsRef<Path>,
    set: &ScenarioSet<T>,
    header: bool,
) -> Result<()> {
    fs::write(path, set.to_csv(header))?;
    Ok(())
}

/// Componentwise bounds `lower <= x <= upper`; infinite entries allowed.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxConstraints<T> {
    pub lower: Vec<T>,
    pub upper: Vec<T>,
}

impl<T: Real> BoxConstraints<T> {
    pub fn new(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension {
                expected: lower.len(),
                got: upper.len(),
            });
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(Error::InvalidParameter("box lower bound exceeds upper bound".into()));
        }
        Ok(Self { lower, upper })
    }

    pub fn unbounded(d: usize) -> Self {
        Self {
            lower: vec![T::neg_infinity(); d],
            upper: vec![T::infinity(); d],
        }
    }

    pub fn nonnegative(d: usize) -> Self {
        Self {
            lower: vec![T::zero(); d],
            upper: vec![T::infinity(); d],
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, x: &[T]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &u))| l <= v && v <= u)
    }

    pub fn project(&self, x: &mut [T]) {
        for (v, (&l, &u)) in x.iter_mut().zip(self.lower.iter().zip(&self.upper)) {
            *v = v.max(l).min(u);
        }
    }
}

/// First-order information for `f` and `g`. Implementations must be
/// convex in `x` and return a subgradient where nonsmooth.
pub trait Oracles<T>: Send + Sync {
    fn dim(&self) -> usize;
    fn objective(&self, x: &[T]) -> T;
    fn objective_grad(&self, x: &[T], out: &mut [T]);
    fn constraint(&self, x: &[T], xi: &[T]) -> T;
    fn constraint_grad(&self, x: &[T], xi: &[T], out: &mut [T]);
}

type ValueFn<T> = Box<dyn Fn(&[T]) -> T + Send + Sync>;
type GradFn<T> = Box<dyn Fn(&[T], &mut [T]) + Send + Sync>;
type ScenarioValueFn<T> = Box<dyn Fn(&[T], &[T]) -> T + Send + Sync>;
type ScenarioGradFn<T> = Box<dyn Fn(&[T], &[T], &mut [T]) + Send + Sync>;

/// [`Oracles`] assembled from closures.
pub struct FnOracles<T> {
    pub dim: usize,
    pub f: ValueFn<T>,
    pub grad_f: GradFn<T>,
    pub g: ScenarioValueFn<T>,
    pub grad_g: ScenarioGradFn<T>,
}

impl<T> FnOracles<T> {
    pub fn new(
        dim: usize,
        f: impl Fn(&[T]) -> T + Send + Sync + 'static,
        grad_f: impl Fn(&[T], &mut [T]) + Send + Sync + 'static,
        g: impl Fn(&[T], &[T]) -> T + Send + Sync + 'static,
        grad_g: impl Fn(&[T], &[T], &mut [T]) + Send + Sync + 'static,
    ) -> Self {
        Self {
            dim,
            f: Box::new(f),
            grad_f: Box::new(grad_f),
            g: Box::new(g),
            grad_g: Box::new(grad_g),
        }
    }
}

impl<T: Real> Oracles<T> for FnOracles<T> {
    fn dim(&self) -> usize {
        self.dim
    }
    fn objective(&self, x: &[T]) -> T {
        (self.f)(x)
    }
    fn objective_grad(&self, x: &[T], out: &mut [T]) {
        (self.grad_f)(x, out)
    }
    fn constraint(&self, x: &[T], xi: &[T]) -> T {
        (self.g)(x, xi)
    }
    fn constraint_grad(&self, x: &[T], xi: &[T], out: &mut [T]) {
        (self.grad_g)(x, xi, out)
    }
}

/// `min f(x)  s.t.  P[g(x, xi) <= 0] >= p,  x in X` over an empirical `xi`.
pub struct ChanceProblem<T> {
    pub oracles: Box<dyn Oracles<T>>,
    pub bounds: BoxConstraints<T>,
    pub scenarios: ScenarioSet<T>,
}

impl<T: Real> ChanceProblem<T> {
    pub fn new(
        oracles: impl Oracles<T> + 'static,
        bounds: BoxConstraints<T>,
        scenarios: ScenarioSet<T>,
    ) -> Result<Self> {
        if bounds.dim() != oracles.dim() {
            return Err(Error::Dimension {
                expected: oracles.dim(),
                got: bounds.dim(),
            });
        }
        Ok(Self {
            oracles: Box::new(oracles),
            bounds,
            scenarios,
        })
    }

    /// Decision dimension `d`.
    pub fn dim(&self) -> usize {
        self.oracles.dim()
    }

    pub fn num_scenarios(&self) -> usize {
        self.scenarios.len()
    }

    pub fn objective(&self, x: &[T]) -> Result<T> {
        let v = self.oracles.objective(x);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::ObjectiveEvaluation(v.as_f64()))
        }
    }

    pub fn objective_grad(&self, x: &[T]) -> Vec<T> {
        let mut out = vec![T::zero(); self.dim()];
        self.oracles.objective_grad(x, &mut out);
        out
    }

    /// `[g(x, xi_1), ..., g(x, xi_n)]` in scenario order.
    pub fn constraint_values(&self, x: &[T]) -> Result<Vec<T>> {
        let eval = |(i, xi): (usize, &[T])| {
            let v = self.oracles.constraint(x, xi);
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Evaluation {
                    scenario: i,
                    value: v.as_f64(),
                })
            }
        };
        if self.scenarios.len() >= PARALLEL_THRESHOLD {
            self.scenarios
                .as_slice()
                .par_chunks_exact(self.scenarios.dim())
                .enumerate()
                .map(eval)
                .collect()
        } else {
            self.scenarios.rows().enumerate().map(eval).collect()
        }
    }

    /// `Σ_i w_i ∇g(x, xi_i)` over the listed `(scenario, weight)` pairs.
    pub fn weighted_constraint_grad(&self, x: &[T], weights: &[(usize, T)]) -> Vec<T> {
        let d = self.dim();
        let mut acc = vec![T::zero(); d];
        let mut buf = vec![T::zero(); d];
        for &(i, w) in weights {
            if w == T::zero() {
                continue;
            }
            buf.iter_mut().for_each(|b| *b = T::zero());
            self.oracles.constraint_grad(x, self.scenarios.row(i), &mut buf);
            crate::scalar::axpy(w, &buf, &mut acc);
        }
        acc
    }

    pub fn empirical_probability_at(&self, x: &[T]) -> Result<T> {
        Ok(empirical_probability(&self.constraint_values(x)?))
    }
}

/// `#{i : v_i <= 0} / n`; zero for an empty slice.
pub fn empirical_probability<T: Real>(vals: &[T]) -> T {
    satisfied_fraction(vals, T::zero())
}

/// `#{i : v_i <= tol} / n`.
pub fn satisfied_fraction<T: Real>(vals: &[T], tol: T) -> T {
    if vals.is_empty() {
        return T::zero();
    }
    let count = vals.iter().filter(|&&v| v <= tol).count();
    T::from_count(count) / T::from_count(vals.len())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::empirical::Sample;
    use proptest::prelude::*;

    fn linear_problem(rows: &[Vec<f64>]) -> ChanceProblem<f64> {
        let d = rows[0].len();
        let oracles = FnOracles::new(
            d,
            |x: &[f64]| x.iter().map(|v| v * v).sum(),
            |x: &[f64], out: &mut [f64]| out.iter_mut().zip(x).for_each(|(o, v)| *o = 2.0 * v),
            |x: &[f64], z: &[f64]| x.iter().zip(z).map(|(a, b)| a * b).sum(),
            |_x: &[f64], z: &[f64], out: &mut [f64]| out.copy_from_slice(z),
        );
        ChanceProblem::new(
            oracles,
            BoxConstraints::unbounded(d),
            ScenarioSet::from_rows(rows).unwrap(),
        )
        .unwrap()
    }

    #[test]
    fn constraint_values_examples() {
        let prob = linear_problem(&[vec![1., 2.], vec![3., 4.]]);
        assert_eq!(prob.constraint_values(&[1., 0.]).unwrap(), vec![1., 3.]);
        assert_eq!(prob.constraint_values(&[0., 0.]).unwrap(), vec![0., 0.]);
    }

    #[test]
    fn constraint_values_reports_scenario_index() {
        let oracles = FnOracles::new(
            1,
            |_: &[f64]| 0.0,
            |_: &[f64], _: &mut [f64]| {},
            |_: &[f64], z: &[f64]| if z[0] > 1.5 { f64::NAN } else { z[0] },
            |_: &[f64], _: &[f64], _: &mut [f64]| {},
        );
        let set = ScenarioSet::new(vec![0.0, 1.0, 2.0, 3.0], 4, 1).unwrap();
        let prob = ChanceProblem::new(oracles, BoxConstraints::unbounded(1), set).unwrap();
        match prob.constraint_values(&[0.0]) {
            Err(Error::Evaluation { scenario, .. }) => assert_eq!(scenario, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn empirical_probability_examples() {
        assert_eq!(empirical_probability(&[-1., -1., 1., 1.]), 0.5);
        assert_eq!(empirical_probability(&[-3., -1e-9]), 1.0);
        assert_eq!(empirical_probability(&[0., 0.0001]), 0.5);
    }

    #[test]
    fn parse_examples() {
        let set: ScenarioSet<f64> = ScenarioSet::parse_csv("1,2\n3,4", false).unwrap();
        assert_eq!((set.len(), set.dim()), (2, 2));
        assert_eq!(set.row(1), &[3., 4.]);

        let set: ScenarioSet<f64> = ScenarioSet::parse_csv("a,b\n1,2\n3,4\n", true).unwrap();
        assert_eq!(set.len(), 2);

        match ScenarioSet::<f64>::parse_csv("1,2\n3", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        match ScenarioSet::<f64>::parse_csv("1,2\n3,x\n", false) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            ScenarioSet::<f64>::parse_csv("", false),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        let set = ScenarioSet::new(vec![0.1, -2.5e-17, 3.0, 1.0 / 3.0], 2, 2).unwrap();
        save_scenarios(&path, &set, true).unwrap();
        let back: ScenarioSet<f64> = load_scenarios(&path, true).unwrap();
        assert_eq!(back, set);
        assert!(load_scenarios::<f64>(dir.path().join("missing.csv"), false).is_err());
    }

    #[test]
    fn box_projection() {
        let b = BoxConstraints::new(vec![0.0, f64::NEG_INFINITY], vec![1.0, 2.0]).unwrap();
        let mut x = [-1.0, 5.0];
        b.project(&mut x);
        assert_eq!(x, [0.0, 2.0]);
        assert!(b.contains(&x));
        assert!(BoxConstraints::new(vec![1.0], vec![0.0]).is_err());
    }

    proptest! {
        #[test]
        fn csv_round_trip_is_value_exact(data in prop::collection::vec(-1e6..1e6f64, 1..40)) {
            let m = 1 + data.len() % 3;
            let n = data.len() / m;
            prop_assume!(n >= 1);
            let set = ScenarioSet::new(data[..n * m].to_vec(), n, m).unwrap();
            let text = set.to_csv(false);
            let back = ScenarioSet::<f64>::parse_csv(&text, false).unwrap();
            prop_assert_eq!(back.to_csv(false), text);
            prop_assert_eq!(back, set);
        }

        #[test]
        fn probability_matches_ecdf_at_zero(rows in prop::collection::vec(prop::collection::vec(-3.0..3.0f64, 2), 1..20), x in prop::collection::vec(-2.0..2.0f64, 2)) {
            let prob = linear_problem(&rows);
            let vals = prob.constraint_values(&x).unwrap();
            let sample = Sample::new(vals.clone()).unwrap();
            prop_assert_eq!(empirical_probability(&vals), sample.ecdf(0.0));
        }
    }
}
