//! Distribution functions of an equally weighted finite sample.
//!
//! Every value carries mass `1/n`. The quantile is the generalized inverse
//! `Q(p) = inf { t : F(t) >= p }` of the right-continuous ECDF, and the
//! superquantile is the tail average `(1/(1-p)) * ∫_p^1 Q(p') dp'`, which on
//! empirical data reduces to a sorted tail sum with one fractional weight.

use crate::error::{Error, Result};
use crate::scalar::{compensated_sum, Real};

/// Absolute tolerance used to decide that `p` sits on the grid `{i/n}` and
/// that two sample values form one atom.
pub const GRID_TOL: f64 = 1e-12;

/// A finite sample, stored sorted ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample<T> {
    sorted: Vec<T>,
}

/// Closed interval `[lo, hi]`; `lo` may be `-inf`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval<T> {
    pub lo: T,
    pub hi: T,
}

impl<T: Real> Interval<T> {
    pub fn contains(&self, t: T) -> bool {
        self.lo <= t && t <= self.hi
    }

    /// Euclidean distance from `t` to the interval.
    pub fn distance(&self, t: T) -> T {
        if t < self.lo {
            self.lo - t
        } else if t > self.hi {
            t - self.hi
        } else {
            T::zero()
        }
    }
}

pub(crate) fn check_probability<T: Real>(p: T) -> Result<()> {
    if p.is_nan() || p < T::zero() || p >= T::one() {
        return Err(Error::InvalidProbability(p.as_f64()));
    }
    Ok(())
}

/// Returns `Some(i)` when `p` equals `i/n` for some `i` in `0..n` (within
/// [`GRID_TOL`]), i.e. when `p` is an attainable jump level of the ECDF.
pub fn grid_index<T: Real>(n: usize, p: T) -> Option<usize> {
    let scaled = p * T::from_count(n);
    let nearest = scaled.round();
    let i = nearest.to_usize()?;
    if i < n && (p - nearest / T::from_count(n)).abs() <= T::lit(GRID_TOL) {
        Some(i)
    } else {
        None
    }
}

/// 1-based rank `k = max(1, ceil(p n))` of the order statistic that realizes
/// the `p`-quantile, with `p n` snapped to an integer when `p` is on the grid.
pub fn quantile_rank<T: Real>(n: usize, p: T) -> usize {
    let k = match grid_index(n, p) {
        Some(i) => i,
        None => (p * T::from_count(n)).ceil().to_usize().unwrap_or(n),
    };
    k.clamp(1, n)
}

impl<T: Real> Sample<T> {
    /// Copies and sorts `values`. Rejects empty or non-finite input.
    pub fn new(mut values: Vec<T>) -> Result<Self> {
        validate(&values)?;
        values.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
        Ok(Self { sorted: values })
    }

    /// Wraps values the caller has already sorted ascending, skipping the
    /// sort in hot loops.
    pub fn from_sorted(values: Vec<T>) -> Result<Self> {
        validate(&values)?;
        debug_assert!(values.windows(2).all(|w| w[0] <= w[1]), "values not sorted");
        Ok(Self { sorted: values })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_values(&self) -> &[T] {
        &self.sorted
    }

    /// `#{i : v_i <= t} / n`.
    pub fn ecdf(&self, t: T) -> T {
        let count = self.sorted.partition_point(|&v| v <= t);
        T::from_count(count) / T::from_count(self.len())
    }

    /// `inf { t : F(t) >= p }`; the minimum at `p = 0`.
    pub fn quantile(&self, p: T) -> Result<T> {
        check_probability(p)?;
        Ok(self.sorted[quantile_rank(self.len(), p) - 1])
    }

    /// Exact tail average `(1/(1-p)) ∫_p^1 Q(p') dp'`.
    pub fn superquantile(&self, p: T) -> Result<T> {
        check_probability(p)?;
        let n = self.len();
        let nf = T::from_count(n);
        let k = quantile_rank(n, p);
        // Q is constant on ((j-1)/n, j/n]; the rank-k piece is cut at p.
        let head = (T::from_count(k) / nf - p).max(T::zero()) * self.sorted[k - 1];
        let tail = compensated_sum(self.sorted[k..].iter().map(|&v| v / nf));
        Ok((head + tail) / (T::one() - p))
    }

    /// `eta + (1/(1-p)) * mean(max(v_i - eta, 0))`; its minimum over `eta`
    /// is the superquantile and the quantile is a minimizer.
    pub fn rockafellar_objective(&self, p: T, eta: T) -> Result<T> {
        check_probability(p)?;
        Ok(rockafellar_value(&self.sorted, p, eta))
    }

    /// Full solution set of `min_eta rockafellar_objective(p, eta)`.
    ///
    /// The set is `{ s : F(s-) <= p <= F(s) }`: a single point unless `p`
    /// is an ECDF level, in which case it stretches to the next sample value.
    /// At `p = 0` it is the half-line `(-inf, min]`.
    pub fn argmin_interval(&self, p: T) -> Result<Interval<T>> {
        check_probability(p)?;
        let n = self.len();
        let tol = T::lit(GRID_TOL);
        Ok(match grid_index(n, p) {
            Some(0) => Interval {
                lo: T::neg_infinity(),
                hi: self.sorted[0],
            },
            Some(k) => {
                let lo = self.sorted[k - 1];
                let hi = match self.sorted.get(k) {
                    Some(&next) if next > lo + tol => next,
                    _ => lo,
                };
                Interval { lo, hi }
            }
            None => {
                let q = self.sorted[quantile_rank(n, p) - 1];
                Interval { lo: q, hi: q }
            }
        })
    }
}

pub(crate) fn rockafellar_value<T: Real>(values: &[T], p: T, eta: T) -> T {
    let nf = T::from_count(values.len());
    let excess = compensated_sum(values.iter().map(|&v| (v - eta).max(T::zero())));
    eta + excess / (nf * (T::one() - p))
}

fn validate<T: Real>(values: &[T]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::EmptySample);
    }
    if let Some((index, v)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(Error::NonFinite {
            index,
            value: v.as_f64(),
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn s(v: &[f64]) -> Sample<f64> {
        Sample::new(v.to_vec()).unwrap()
    }

    /// Grid minimization of the Rockafellar objective; independent of the
    /// sorted-tail formula. Breakpoints are included so the exact minimum is
    /// on the grid.
    fn grid_minimum(values: &[f64], p: f64) -> (f64, Vec<f64>) {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min) - 1.0;
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 1.0;
        let mut grid: Vec<f64> = (0..=4000).map(|i| lo + (hi - lo) * i as f64 / 4000.0).collect();
        grid.extend_from_slice(values);
        let obj = |eta: f64| {
            eta + values.iter().map(|v| (v - eta).max(0.0)).sum::<f64>()
                / (values.len() as f64 * (1.0 - p))
        };
        let best = grid.iter().map(|&e| obj(e)).fold(f64::INFINITY, f64::min);
        let minimizers = grid
            .into_iter()
            .filter(|&e| obj(e) <= best + 1e-10)
            .collect();
        (best, minimizers)
    }

    #[test]
    fn ecdf_examples() {
        assert_eq!(s(&[1., 2., 3., 4.]).ecdf(2.0), 0.5);
        assert_eq!(s(&[1., 2., 3., 4.]).ecdf(0.0), 0.0);
        assert_eq!(s(&[1., 1., 1.]).ecdf(1.0), 1.0);
    }

    #[test]
    fn quantile_examples() {
        let x = s(&[4., 2., 3., 1.]);
        assert_eq!(x.quantile(0.5).unwrap(), 2.0);
        assert_eq!(x.quantile(0.74).unwrap(), 3.0);
        assert_eq!(x.quantile(0.0).unwrap(), 1.0);
        assert!(matches!(x.quantile(1.0), Err(Error::InvalidProbability(_))));
        assert!(x.quantile(-0.1).is_err());
    }

    #[test]
    fn quantile_snaps_grid_levels() {
        let x = s(&(1..=10).map(f64::from).collect::<Vec<_>>());
        assert_eq!(x.quantile(0.3).unwrap(), 3.0);
        assert_eq!(x.quantile(0.7).unwrap(), 7.0);
        assert_eq!(x.quantile(0.30001).unwrap(), 4.0);
    }

    #[test]
    fn superquantile_examples() {
        let x = s(&[1., 2., 3., 4.]);
        assert_abs_diff_eq!(x.superquantile(0.75).unwrap(), 4.0, epsilon = 1e-12);
        assert_abs_diff_eq!(x.superquantile(0.0).unwrap(), 2.5, epsilon = 1e-12);
        let (grid_min, _) = grid_minimum(&[1., 2., 3., 4.], 0.5);
        assert_abs_diff_eq!(grid_min, 3.5, epsilon = 1e-12);
        assert_abs_diff_eq!(x.superquantile(0.5).unwrap(), grid_min, epsilon = 1e-9);
    }

    #[test]
    fn rockafellar_examples() {
        let two = s(&[0., 10.]);
        assert_eq!(two.rockafellar_objective(0.5, 0.0).unwrap(), 10.0);
        assert_eq!(two.rockafellar_objective(0.5, 10.0).unwrap(), 10.0);
        let four = s(&[1., 2., 3., 4.]);
        assert_abs_diff_eq!(four.rockafellar_objective(0.5, 2.5).unwrap(), 3.5, epsilon = 1e-12);
    }

    #[test]
    fn argmin_interval_examples() {
        let four = s(&[1., 2., 3., 4.]);
        assert_eq!(four.argmin_interval(0.5).unwrap(), Interval { lo: 2.0, hi: 3.0 });
        assert_eq!(four.argmin_interval(0.6).unwrap(), Interval { lo: 3.0, hi: 3.0 });
        assert_eq!(s(&[5., 5., 5.]).argmin_interval(0.5).unwrap(), Interval { lo: 5.0, hi: 5.0 });
        assert_eq!(s(&[5., 5., 5.]).argmin_interval(1.0 / 3.0).unwrap(), Interval { lo: 5.0, hi: 5.0 });
        // atom at the quantile closes the flat piece
        assert_eq!(s(&[1., 1., 2., 3.]).argmin_interval(0.25).unwrap(), Interval { lo: 1.0, hi: 1.0 });

        for (p, iv) in [(0.5, four.argmin_interval(0.5).unwrap()), (0.6, four.argmin_interval(0.6).unwrap())] {
            let (_, minimizers) = grid_minimum(&[1., 2., 3., 4.], p);
            assert!(minimizers.iter().all(|&m| m >= iv.lo - 1e-9 && m <= iv.hi + 1e-9));
        }
    }

    #[test]
    fn argmin_interval_at_zero_is_half_line() {
        let four = s(&[1., 2., 3., 4.]);
        let iv = four.argmin_interval(0.0).unwrap();
        assert_eq!(iv.hi, 1.0);
        assert!(iv.lo.is_infinite() && iv.lo < 0.0);
        for eta in [-50.0, 0.0, 1.0] {
            assert_abs_diff_eq!(four.rockafellar_objective(0.0, eta).unwrap(), 2.5, epsilon = 1e-12);
        }
        assert!(four.rockafellar_objective(0.0, 1.5).unwrap() > 2.5);
    }

    #[test]
    fn rejects_empty_and_non_finite() {
        assert!(matches!(Sample::<f64>::new(vec![]), Err(Error::EmptySample)));
        assert!(matches!(
            Sample::new(vec![1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1, .. })
        ));
    }

    #[test]
    fn single_precision_matches() {
        let x = Sample::new(vec![4.0f32, 2.0, 3.0, 1.0]).unwrap();
        assert_eq!(x.quantile(0.5).unwrap(), 2.0);
        assert!((x.superquantile(0.5).unwrap() - 3.5).abs() < 1e-6);
    }

    fn sample_and_p() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (prop::collection::vec(-50.0..50.0f64, 1..30), 0.0..0.999f64)
    }

    proptest! {
        #[test]
        fn lemma1_grid_minimum_is_superquantile((values, p) in sample_and_p()) {
            let x = Sample::new(values.clone()).unwrap();
            let (best, minimizers) = grid_minimum(&values, p);
            prop_assert!((best - x.superquantile(p).unwrap()).abs() <= 1e-8 * (1.0 + best.abs()));
            let q = x.quantile(p).unwrap();
            prop_assert!(x.rockafellar_objective(p, q).unwrap() <= best + 1e-8 * (1.0 + best.abs()));
            let iv = x.argmin_interval(p).unwrap();
            for m in minimizers {
                prop_assert!(iv.distance(m) <= 1e-4, "grid minimizer {} outside {:?}", m, iv);
            }
        }

        #[test]
        fn ecdf_at_quantile_reaches_level((values, p) in sample_and_p()) {
            let x = Sample::new(values).unwrap();
            prop_assert!(x.ecdf(x.quantile(p).unwrap()) >= p - 1e-12);
        }

        #[test]
        fn superquantile_dominates_quantile((values, p) in sample_and_p()) {
            let x = Sample::new(values).unwrap();
            let q = x.quantile(p).unwrap();
            let sq = x.superquantile(p).unwrap();
            prop_assert!(sq >= q - 1e-12);
            let tail_constant = x.sorted_values()[quantile_rank(x.len(), p) - 1..].iter().all(|&v| v == q);
            prop_assert_eq!((sq - q).abs() <= 1e-9, tail_constant);
        }

        #[test]
        fn monotone_in_level(values in prop::collection::vec(-50.0..50.0f64, 1..30), a in 0.0..0.999f64, b in 0.0..0.999f64) {
            let x = Sample::new(values).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(x.quantile(lo).unwrap() <= x.quantile(hi).unwrap());
            prop_assert!(x.superquantile(lo).unwrap() <= x.superquantile(hi).unwrap() + 1e-9);
        }
    }
}
