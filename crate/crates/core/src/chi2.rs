//! Chi-squared distribution function and its inverse.

use statrs::function::gamma::checked_gamma_lr;

use crate::error::{Error, Result};

const ABS_TOL: f64 = 1e-12;
const MAX_BISECTIONS: usize = 400;

/// `P[chi2_d <= t]` through the regularized lower incomplete gamma function.
pub fn chi2_cdf(d: usize, t: f64) -> Result<f64> {
    if d == 0 {
        return Err(Error::InvalidParameter("chi-squared needs d >= 1".into()));
    }
    if t <= 0.0 {
        return Ok(0.0);
    }
    if t.is_infinite() {
        return Ok(1.0);
    }
    let a = d as f64 / 2.0;
    let x = t / 2.0;
    match checked_gamma_lr(a, x) {
        Ok(v) if v.is_finite() => Ok(v.clamp(0.0, 1.0)),
        _ => Err(Error::Gamma { a, x }),
    }
}

/// Inverse of [`chi2_cdf`] for `0 < q < 1`, by bisection on a bracket grown
/// from the mean. The bracket width shrinks below `1e-12` absolute (or a
/// few ulps for large quantiles).
pub fn chi2_inv(d: usize, q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidProbability(q));
    }
    let mut lo = 0.0;
    let mut hi = (d as f64).max(1.0);
    let mut grow = 0;
    while chi2_cdf(d, hi)? < q {
        lo = hi;
        hi *= 2.0;
        grow += 1;
        if grow > 200 {
            return Err(Error::Gamma { a: d as f64 / 2.0, x: hi / 2.0 });
        }
    }
    for _ in 0..MAX_BISECTIONS {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= ABS_TOL.max(4.0 * f64::EPSILON * hi) || mid <= lo || mid >= hi {
            return Ok(mid);
        }
        if chi2_cdf(d, mid)? < q {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Err(Error::Gamma {
        a: d as f64 / 2.0,
        x: 0.25 * (lo + hi),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn two_degrees_match_closed_form() {
        for &q in &[1e-6, 0.01, 0.3, 0.5, 0.97793, 0.999] {
            let closed = -2.0 * (1.0f64 - q).ln();
            assert_abs_diff_eq!(chi2_inv(2, q).unwrap(), closed, epsilon = 1e-9);
        }
        for &t in &[0.1, 1.0, 7.5] {
            assert_abs_diff_eq!(chi2_cdf(2, t).unwrap(), 1.0 - (-t / 2.0f64).exp(), epsilon = 1e-13);
        }
    }

    #[test]
    fn round_trip() {
        for d in [1, 2, 3, 10, 50, 200, 2000] {
            for q in [0.1, 0.5, 0.9] {
                let t = chi2_inv(d, q).unwrap();
                assert_abs_diff_eq!(chi2_cdf(d, t).unwrap(), q, epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn one_degree_matches_normal_quantile() {
        // P[Z^2 <= 1.959963984540054^2] = 0.95
        let z: f64 = 1.959963984540054;
        assert_abs_diff_eq!(chi2_inv(1, 0.95).unwrap(), z * z, epsilon = 1e-9);
    }

    #[test]
    fn invalid_inputs() {
        assert!(chi2_inv(2, 0.0).is_err());
        assert!(chi2_inv(2, 1.0).is_err());
        assert!(chi2_cdf(0, 1.0).is_err());
        assert_eq!(chi2_cdf(3, -1.0).unwrap(), 0.0);
    }
}
