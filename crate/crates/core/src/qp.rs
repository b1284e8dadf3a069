//! Dense primal-dual interior point solver for the bundle master problem
//!
//! ```text
//! min_{w, r}  r + (prox/2) |w|^2
//! s.t.        <t_j, w> - r <= e_j       (one row per cutting plane)
//!             lo_i <= w_i <= hi_i       (finite entries only)
//! ```
//!
//! `w` is the displacement from the stability center, `t_j` the plane slope
//! corrected by the concave linearization, and `e_j >= 0` the linearization
//! error of plane `j` at the center. The normal equations are
//! `(d+2)`-dimensional, so each Mehrotra iteration costs `O(m d^2)`.

use crate::error::{Error, Result};
use crate::scalar::Real;

const MAX_ITERS: usize = 200;

/// Solved master problem.
#[derive(Debug, Clone)]
pub struct MasterSolution<T> {
    /// Displacement from the center, inside the box.
    pub step: Vec<T>,
    /// `max_j <t_j, step> - e_j`.
    pub model: T,
    /// Simplex weights of the planes at the optimum.
    pub plane_weights: Vec<T>,
    pub kkt_residual: T,
    pub iterations: usize,
}

/// Problem data; `slopes` are `m` vectors of length `dim`.
pub struct MasterQp<'a, T> {
    pub slopes: &'a [Vec<T>],
    pub errors: &'a [T],
    pub prox: T,
    pub lower: &'a [T],
    pub upper: &'a [T],
}

struct Iterate<T> {
    residual: T,
    w: Vec<T>,
    r: T,
    z: Vec<T>,
}

#[derive(Clone, Copy)]
enum Row {
    Plane(usize),
    Upper(usize),
    Lower(usize),
}

impl<T: Real> MasterQp<'_, T> {
    fn dim(&self) -> usize {
        self.lower.len()
    }

    fn rows(&self) -> Vec<Row> {
        let mut rows: Vec<Row> = (0..self.slopes.len()).map(Row::Plane).collect();
        for i in 0..self.dim() {
            if self.upper[i].is_finite() {
                rows.push(Row::Upper(i));
            }
            if self.lower[i].is_finite() {
                rows.push(Row::Lower(i));
            }
        }
        rows
    }

    fn rhs(&self, row: Row) -> T {
        match row {
            Row::Plane(j) => self.errors[j],
            Row::Upper(i) => self.upper[i],
            Row::Lower(i) => -self.lower[i],
        }
    }

    /// `a_row · (w, r)`.
    fn apply(&self, row: Row, w: &[T], r: T) -> T {
        match row {
            Row::Plane(j) => crate::scalar::dot(&self.slopes[j], w) - r,
            Row::Upper(i) => w[i],
            Row::Lower(i) => -w[i],
        }
    }

    /// `acc += scale * a_row^T`.
    fn apply_transpose(&self, row: Row, scale: T, acc_w: &mut [T], acc_r: &mut T) {
        match row {
            Row::Plane(j) => {
                crate::scalar::axpy(scale, &self.slopes[j], acc_w);
                *acc_r = *acc_r - scale;
            }
            Row::Upper(i) => acc_w[i] = acc_w[i] + scale,
            Row::Lower(i) => acc_w[i] = acc_w[i] - scale,
        }
    }

    fn model_at(&self, w: &[T]) -> T {
        self.slopes
            .iter()
            .zip(self.errors)
            .map(|(t, &e)| crate::scalar::dot(t, w) - e)
            .fold(T::neg_infinity(), T::max)
    }

    pub fn solve(&self) -> Result<MasterSolution<T>> {
        let d = self.dim();
        let fixed: Vec<usize> = (0..d).filter(|&i| self.lower[i] >= self.upper[i]).collect();
        if !fixed.is_empty() {
            return self.solve_with_fixed(&fixed);
        }
        if self.slopes.len() == 1 {
            return Ok(self.single_plane());
        }
        let mut sol = if self.prox == T::one() {
            self.solve_interior()?
        } else {
            self.solve_unit_prox()?
        };
        // interior iterates stop a hair short of active bounds
        let snap = T::lit(1e-8);
        let mut value = self.objective_at(&sol.step);
        for i in 0..d {
            let (lo, hi) = (self.lower[i], self.upper[i]);
            let v = sol.step[i];
            let target = if lo.is_finite() && (v - lo).abs() <= snap * (T::one() + lo.abs()) {
                lo
            } else if hi.is_finite() && (hi - v).abs() <= snap * (T::one() + hi.abs()) {
                hi
            } else {
                continue;
            };
            sol.step[i] = target;
            let snapped = self.objective_at(&sol.step);
            if snapped <= value {
                value = snapped;
            } else {
                sol.step[i] = v;
            }
        }
        sol.model = self.model_at(&sol.step);
        Ok(sol)
    }

    /// `Q + A^T diag(ratio) A`, dense and symmetric.
    fn normal_matrix(&self, rows: &[Row], ratio: &[T]) -> Vec<T> {
        let d = self.dim();
        let nv = d + 1;
        let mut mat = vec![T::zero(); nv * nv];
        for i in 0..d {
            mat[i * nv + i] = self.prox;
        }
        for (k, &row) in rows.iter().enumerate() {
            match row {
                Row::Plane(j) => {
                    let t = &self.slopes[j];
                    for a in 0..d {
                        let ta = ratio[k] * t[a];
                        for b in 0..=a {
                            mat[a * nv + b] = mat[a * nv + b] + ta * t[b];
                        }
                        mat[d * nv + a] = mat[d * nv + a] - ta;
                    }
                    mat[d * nv + d] = mat[d * nv + d] + ratio[k];
                }
                Row::Upper(i) | Row::Lower(i) => {
                    mat[i * nv + i] = mat[i * nv + i] + ratio[k];
                }
            }
        }
        for a in 0..nv {
            for b in 0..a {
                mat[b * nv + a] = mat[a * nv + b];
            }
        }
        mat
    }

    /// Least-squares start: minimizes the objective plus `|Ax - b|^2 / 2`,
    /// then shifts slacks and multipliers into the positive orthant.
    fn least_squares_start(&self, rows: &[Row]) -> Result<(Vec<T>, T, Vec<T>, Vec<T>)> {
        let d = self.dim();
        let nv = d + 1;
        let mat = self.normal_matrix(rows, &vec![T::one(); rows.len()]);
        let chol = cholesky(&mat, nv)?;
        let mut rhs_w = vec![T::zero(); d];
        let mut rhs_r = -T::one();
        for &row in rows {
            self.apply_transpose(row, self.rhs(row), &mut rhs_w, &mut rhs_r);
        }
        rhs_w.push(rhs_r);
        let y = cholesky_solve(&chol, nv, &rhs_w);
        let (w, r) = (y[..d].to_vec(), y[d]);
        let slack: Vec<T> = rows.iter().map(|&row| self.rhs(row) - self.apply(row, &w, r)).collect();
        let lowest = slack.iter().fold(T::infinity(), |a, &b| a.min(b));
        let highest = slack.iter().fold(T::neg_infinity(), |a, &b| a.max(b));
        let s_shift = if lowest > T::zero() { T::zero() } else { T::one() - lowest };
        let z_shift = if -highest > T::zero() { T::zero() } else { T::one() + highest };
        let s = slack.iter().map(|&v| v + s_shift).collect();
        let z = slack.iter().map(|&v| -v + z_shift).collect();
        Ok((w, r, s, z))
    }

    /// Retries from the least-squares start and keeps the better failure.
    fn solve_interior(&self) -> Result<MasterSolution<T>> {
        match self.interior_point(false) {
            Err(first @ Error::Qp { .. }) => match self.interior_point(true) {
                Err(second @ Error::Qp { .. }) => Err(better_failure(first, second)),
                other => other,
            },
            other => other,
        }
    }

    fn interior_point(&self, least_squares: bool) -> Result<MasterSolution<T>> {
        let d = self.dim();
        let m_planes = self.slopes.len();
        assert!(m_planes >= 1, "master problem needs at least one plane");
        assert!(self.prox > T::zero());
        let rows = self.rows();
        let m = rows.len();
        let nv = d + 1;
        let two = T::lit(2.0);
        let tol = T::lit(1e-11).max(T::epsilon().sqrt() * T::lit(1e-3));
        let accept = T::lit(1e-8).max(tol);

        let (mut w, mut r, mut s, mut z) = if least_squares {
            self.least_squares_start(&rows)?
        } else {
            let mut w = vec![T::zero(); d];
            for i in 0..d {
                w[i] = w[i].max(self.lower[i]).min(self.upper[i]);
            }
            let r = self.model_at(&w) + T::one();
            let s: Vec<T> = rows
                .iter()
                .map(|&row| (self.rhs(row) - self.apply(row, &w, r)).max(T::one()))
                .collect();
            // centered start: equal products s_k z_k, plane multipliers summing to 1
            let inv_sum: T = s[..m_planes].iter().map(|&v| v.recip()).sum();
            let z: Vec<T> = s.iter().map(|&v| (v * inv_sum).recip()).collect();
            (w, r, s, z)
        };

        let scale_b = T::one()
            + rows
                .iter()
                .map(|&row| self.rhs(row).abs())
                .fold(T::zero(), T::max);
        let scale_t = T::one()
            + self
                .slopes
                .iter()
                .flat_map(|t| t.iter().map(|v| v.abs()))
                .fold(T::zero(), T::max);

        let mut best: Option<Iterate<T>> = None;
        let mut stalled = 0usize;
        let mut iterations = 0;
        loop {
            // residuals
            let mut rd_w: Vec<T> = w.iter().map(|&v| self.prox * v).collect();
            let mut rd_r = T::one();
            for (k, &row) in rows.iter().enumerate() {
                self.apply_transpose(row, z[k], &mut rd_w, &mut rd_r);
            }
            let rp: Vec<T> = rows
                .iter()
                .enumerate()
                .map(|(k, &row)| self.apply(row, &w, r) + s[k] - self.rhs(row))
                .collect();
            let mu = s.iter().zip(&z).map(|(&a, &b)| a * b).sum::<T>() / T::from_count(m);

            let dual_inf = rd_w.iter().fold(rd_r.abs(), |acc, v| acc.max(v.abs()))
                / (scale_t + self.prox * norm_inf(&w));
            let primal_inf = norm_inf(&rp) / (scale_b + scale_t * norm_inf(&w) + r.abs());
            let objective = r + self.prox / two * crate::scalar::dot(&w, &w);
            let gap = mu / (T::one() + objective.abs());
            let residual = dual_inf.max(primal_inf).max(gap);
            match &best {
                Some(b) if residual >= b.residual * T::lit(0.5) => stalled += 1,
                _ => stalled = 0,
            }
            if best.as_ref().map_or(true, |b| residual < b.residual) {
                best = Some(Iterate {
                    residual,
                    w: w.clone(),
                    r,
                    z: z.clone(),
                });
            }
            if residual <= tol {
                break;
            }
            // Degenerate vertices stall the dual residual near sqrt(eps) once
            // the normal matrix becomes ill-conditioned.
            let best_res = best.as_ref().map_or(T::infinity(), |b| b.residual);
            if best_res <= accept && (stalled >= 8 || gap <= tol * tol) {
                break;
            }
            if iterations >= MAX_ITERS || gap <= tol.powi(3) {
                let b = best.expect("at least one iterate");
                let mut point: Vec<f64> = b.w.iter().map(|v| v.as_f64()).collect();
                point.push(b.r.as_f64());
                return Err(Error::Qp {
                    iterations,
                    residual: b.residual.as_f64(),
                    best: point,
                });
            }
            iterations += 1;

            let ratio: Vec<T> = z.iter().zip(&s).map(|(&a, &b)| a / b).collect();
            let mat = self.normal_matrix(&rows, &ratio);
            let chol = cholesky(&mat, nv)?;

            let solve_dir = |rc: &[T]| -> (Vec<T>, Vec<T>, Vec<T>) {
                // rhs = -r_d + A^T S^{-1} (r_c - Z r_p)
                let mut rhs_w: Vec<T> = rd_w.iter().map(|&v| -v).collect();
                let mut rhs_r = -rd_r;
                for (k, &row) in rows.iter().enumerate() {
                    let coef = (rc[k] - z[k] * rp[k]) / s[k];
                    self.apply_transpose(row, coef, &mut rhs_w, &mut rhs_r);
                }
                let mut rhs = rhs_w;
                rhs.push(rhs_r);
                let dy = cholesky_solve(&chol, nv, &rhs);
                let (dw, dr) = (&dy[..d], dy[d]);
                let mut dz = vec![T::zero(); m];
                let mut ds = vec![T::zero(); m];
                for (k, &row) in rows.iter().enumerate() {
                    let a_dy = self.apply(row, dw, dr);
                    dz[k] = (-rc[k] + z[k] * rp[k] + z[k] * a_dy) / s[k];
                    ds[k] = -rp[k] - a_dy;
                }
                (dy, dz, ds)
            };

            // predictor
            let rc_aff: Vec<T> = s.iter().zip(&z).map(|(&a, &b)| a * b).collect();
            let (_, dz_aff, ds_aff) = solve_dir(&rc_aff);
            let alpha_aff = step_to_boundary(&s, &ds_aff).min(step_to_boundary(&z, &dz_aff));
            let mu_aff = s
                .iter()
                .zip(&ds_aff)
                .zip(z.iter().zip(&dz_aff))
                .map(|((&si, &dsi), (&zi, &dzi))| (si + alpha_aff * dsi) * (zi + alpha_aff * dzi))
                .sum::<T>()
                / T::from_count(m);
            let sigma = (mu_aff / mu).powi(3).min(T::one());

            // corrector
            let rc: Vec<T> = (0..m)
                .map(|k| s[k] * z[k] + ds_aff[k] * dz_aff[k] - sigma * mu)
                .collect();
            let (mut dy, mut dz, mut ds) = solve_dir(&rc);
            let mut alpha = safeguarded_step(&s, &ds, &z, &dz);
            if alpha < T::lit(0.1) {
                // the corrector lost centrality; fall back to a centering step
                let rc: Vec<T> = (0..m).map(|k| s[k] * z[k] - T::lit(0.5) * mu).collect();
                let (cy, cz, cs) = solve_dir(&rc);
                let beta = safeguarded_step(&s, &cs, &z, &cz);
                if beta > alpha {
                    (dy, dz, ds, alpha) = (cy, cz, cs, beta);
                }
            }
            for i in 0..d {
                w[i] = w[i] + alpha * dy[i];
            }
            r = r + alpha * dy[d];
            for k in 0..m {
                s[k] = (s[k] + alpha * ds[k]).max(T::min_positive_value());
                z[k] = (z[k] + alpha * dz[k]).max(T::min_positive_value());
            }
        }

        let Iterate { residual, mut w, z, .. } = best.expect("at least one iterate");
        for i in 0..d {
            w[i] = w[i].max(self.lower[i]).min(self.upper[i]);
        }
        let total: T = z[..m_planes].iter().copied().sum();
        let plane_weights = z[..m_planes].iter().map(|&v| v / total).collect();
        Ok(MasterSolution {
            model: self.model_at(&w),
            step: w,
            plane_weights,
            kkt_residual: residual,
            iterations,
        })
    }

    /// One plane separates by coordinate: `w_i = clamp(-t_i / prox)`.
    fn single_plane(&self) -> MasterSolution<T> {
        let step: Vec<T> = self.slopes[0]
            .iter()
            .zip(self.lower.iter().zip(self.upper))
            .map(|(&t, (&lo, &hi))| (-t / self.prox).max(lo).min(hi))
            .collect();
        MasterSolution {
            model: self.model_at(&step),
            step,
            plane_weights: vec![T::one()],
            kkt_residual: T::zero(),
            iterations: 0,
        }
    }

    /// Rescales `w = v / sqrt(prox)` so the quadratic term becomes `|v|^2 / 2`.
    fn solve_unit_prox(&self) -> Result<MasterSolution<T>> {
        let root = self.prox.sqrt();
        let slopes: Vec<Vec<T>> = self
            .slopes
            .iter()
            .map(|t| t.iter().map(|&v| v / root).collect())
            .collect();
        let lower: Vec<T> = self.lower.iter().map(|&v| v * root).collect();
        let upper: Vec<T> = self.upper.iter().map(|&v| v * root).collect();
        let unit = MasterQp {
            slopes: &slopes,
            errors: self.errors,
            prox: T::one(),
            lower: &lower,
            upper: &upper,
        };
        let mut sol = unit.solve_interior().map_err(|e| match e {
            Error::Qp { iterations, residual, mut best } => {
                let d = self.dim();
                for v in best.iter_mut().take(d) {
                    *v /= root.as_f64();
                }
                Error::Qp { iterations, residual, best }
            }
            other => other,
        })?;
        for (v, (&lo, &hi)) in sol.step.iter_mut().zip(self.lower.iter().zip(self.upper)) {
            *v = (*v / root).max(lo).min(hi);
        }
        sol.model = self.model_at(&sol.step);
        Ok(sol)
    }

    /// Coordinates with `lower == upper` have no interior; they are moved
    /// into the linearization errors and the rest is solved as usual.
    fn solve_with_fixed(&self, fixed: &[usize]) -> Result<MasterSolution<T>> {
        let mut slopes = self.slopes.to_vec();
        let mut errors = self.errors.to_vec();
        let mut lower = self.lower.to_vec();
        let mut upper = self.upper.to_vec();
        for &i in fixed {
            for (t, e) in slopes.iter_mut().zip(errors.iter_mut()) {
                *e = *e - t[i] * self.lower[i];
                t[i] = T::zero();
            }
            lower[i] = T::neg_infinity();
            upper[i] = T::infinity();
        }
        let reduced = MasterQp {
            slopes: &slopes,
            errors: &errors,
            prox: self.prox,
            lower: &lower,
            upper: &upper,
        };
        let mut sol = reduced.solve()?;
        for &i in fixed {
            sol.step[i] = self.lower[i];
        }
        sol.model = self.model_at(&sol.step);
        Ok(sol)
    }

    /// Objective `model(w) + (prox/2)|w|^2` at an arbitrary displacement.
    pub fn objective_at(&self, w: &[T]) -> T {
        self.model_at(w) + self.prox / T::lit(2.0) * crate::scalar::dot(w, w)
    }
}

fn better_failure(a: Error, b: Error) -> Error {
    let residual = |e: &Error| match e {
        Error::Qp { residual, .. } => *residual,
        _ => f64::INFINITY,
    };
    if residual(&b) < residual(&a) {
        b
    } else {
        a
    }
}

fn norm_inf<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |acc, x| acc.max(x.abs()))
}

/// Fraction-to-boundary step, shortened until every product `s_k z_k`
/// stays above a fixed fraction of their mean.
fn safeguarded_step<T: Real>(s: &[T], ds: &[T], z: &[T], dz: &[T]) -> T {
    let mut alpha = (T::lit(0.995) * step_to_boundary(s, ds).min(step_to_boundary(z, dz))).min(T::one());
    for _ in 0..40 {
        if in_neighborhood(s, ds, z, dz, alpha) {
            break;
        }
        alpha = alpha * T::lit(0.8);
    }
    alpha
}

fn in_neighborhood<T: Real>(s: &[T], ds: &[T], z: &[T], dz: &[T], alpha: T) -> bool {
    let prods: Vec<T> = (0..s.len())
        .map(|k| (s[k] + alpha * ds[k]) * (z[k] + alpha * dz[k]))
        .collect();
    let mean = prods.iter().copied().sum::<T>() / T::from_count(prods.len());
    prods.iter().all(|&v| v >= T::lit(1e-3) * mean)
}

fn step_to_boundary<T: Real>(v: &[T], dv: &[T]) -> T {
    v.iter()
        .zip(dv)
        .filter(|(_, &d)| d < T::zero())
        .map(|(&x, &d)| -x / d)
        .fold(T::one(), T::min)
}

/// Lower Cholesky factor of a symmetric positive definite matrix, with a
/// small diagonal shift retried when a pivot collapses.
fn cholesky<T: Real>(mat: &[T], n: usize) -> Result<Vec<T>> {
    let trace = (0..n).map(|i| mat[i * n + i].abs()).fold(T::zero(), T::max);
    let mut shift = T::zero();
    for _ in 0..8 {
        if let Some(l) = try_cholesky(mat, n, shift) {
            return Ok(l);
        }
        shift = if shift == T::zero() {
            trace * T::epsilon() * T::lit(16.0)
        } else {
            shift * T::lit(100.0)
        };
    }
    Err(Error::InvalidParameter("master normal matrix is not positive definite".into()))
}

fn try_cholesky<T: Real>(mat: &[T], n: usize, shift: T) -> Option<Vec<T>> {
    let mut l = vec![T::zero(); n * n];
    for i in 0..n {
        for j in 0..=i {
            let mut sum = mat[i * n + j];
            if i == j {
                sum = sum + shift;
            }
            for k in 0..j {
                sum = sum - l[i * n + k] * l[j * n + k];
            }
            if i == j {
                if !(sum > T::zero()) {
                    return None;
                }
                l[i * n + i] = sum.sqrt();
            } else {
                l[i * n + j] = sum / l[j * n + j];
            }
        }
    }
    Some(l)
}

fn cholesky_solve<T: Real>(l: &[T], n: usize, b: &[T]) -> Vec<T> {
    let mut y = b.to_vec();
    for i in 0..n {
        let mut sum = y[i];
        for k in 0..i {
            sum = sum - l[i * n + k] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    for i in (0..n).rev() {
        let mut sum = y[i];
        for k in i + 1..n {
            sum = sum - l[k * n + i] * y[k];
        }
        y[i] = sum / l[i * n + i];
    }
    y
}
