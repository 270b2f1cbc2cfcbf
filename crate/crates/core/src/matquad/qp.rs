//! Convex quadratic programs
//!
//! ```text
//! minimize    ½ zᵀ H z + fᵀ z
//! subject to  A_eq z = b_eq
//!             lb ≤ A_in z ≤ ub
//! ```
//!
//! The solver eliminates the equality constraints through an orthonormal
//! nullspace basis, whitens the reduced Hessian with its eigendecomposition
//! and runs a Goldfarb-Idnani dual active-set method on the resulting
//! identity-Hessian problem. Reduced-Hessian directions with zero curvature
//! that touch neither the cost nor the inequality rows are dropped; when they
//! do couple, a proximal-point outer loop is used instead.
//!
//! All factorizations depend only on `(H, A_eq, A_in)`, so a receding-horizon
//! controller builds one [`QpFactorization`] and re-solves it for every new
//! `(f, b_eq, lb, ub)`.

use nalgebra::{DMatrix, DVector};

use super::linalg::{check_finite, symmetric_eigen, orthonormal_complement, pinv_unchecked, row_space_basis, DEFAULT_RTOL};
use crate::error::{invalid, Result};

/// Relative eigenvalue cutoff (times dimension) for zero-curvature directions.
const FLAT_RTOL: f64 = 1e-13;
/// Violation tolerance of the active-set iteration, in whitened units.
const ACTIVE_TOL: f64 = 1e-11;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum QpStatus {
    Optimal,
    /// Primal infeasible constraints, or a cost unbounded below on the feasible set.
    Infeasible,
    MaxIterations,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QpSettings {
    pub eps_feas: f64,
    pub eps_opt: f64,
    pub max_iter: usize,
}

impl Default for QpSettings {
    fn default() -> Self {
        Self { eps_feas: 1e-8, eps_opt: 1e-8, max_iter: 50_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QpSolution {
    pub z: DVector<f64>,
    pub objective: f64,
    pub status: QpStatus,
    pub iterations: usize,
    /// Max of the scaled equality residual and the scaled bound violation.
    pub primal_residual: f64,
    /// Scaled infinity norm of the KKT stationarity residual.
    pub dual_residual: f64,
    /// Equality multipliers, sign convention `Hz + f + A_eqᵀ y_eq + A_inᵀ y_in = 0`.
    pub y_eq: DVector<f64>,
    /// Inequality multipliers: negative on active lower bounds, positive on active upper bounds.
    pub y_in: DVector<f64>,
}

/// A validated convex QP.
#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem {
    h: DMatrix<f64>,
    f: DVector<f64>,
    a_eq: DMatrix<f64>,
    b_eq: DVector<f64>,
    a_in: DMatrix<f64>,
    lb: DVector<f64>,
    ub: DVector<f64>,
}

impl QpProblem {
    /// Validates dimensions, finiteness and bound ordering, and symmetrizes `H`.
    ///
    /// Bounds may be infinite. `H` is rejected when its asymmetry exceeds
    /// `1e-10 · (1 + max|H|)`.
    pub fn new(
        h: DMatrix<f64>,
        f: DVector<f64>,
        a_eq: DMatrix<f64>,
        b_eq: DVector<f64>,
        a_in: DMatrix<f64>,
        lb: DVector<f64>,
        ub: DVector<f64>,
    ) -> Result<Self> {
        let n = h.nrows();
        if n == 0 || h.ncols() != n {
            return Err(invalid(format!("H must be square and nonempty, got {}x{}", h.nrows(), h.ncols())));
        }
        if f.len() != n {
            return Err(invalid(format!("f has length {}, expected {n}", f.len())));
        }
        if a_eq.ncols() != n || a_eq.nrows() != b_eq.len() {
            return Err(invalid(format!(
                "equality block is {}x{} with {} right-hand sides, expected {n} columns",
                a_eq.nrows(),
                a_eq.ncols(),
                b_eq.len()
            )));
        }
        if a_in.ncols() != n || a_in.nrows() != lb.len() || a_in.nrows() != ub.len() {
            return Err(invalid(format!(
                "inequality block is {}x{} with bounds of length {}/{}, expected {n} columns",
                a_in.nrows(),
                a_in.ncols(),
                lb.len(),
                ub.len()
            )));
        }
        check_finite(&h, "H")?;
        check_finite(&a_eq, "A_eq")?;
        check_finite(&a_in, "A_in")?;
        if !f.iter().chain(b_eq.iter()).all(|x| x.is_finite()) {
            return Err(invalid("f and b_eq must be finite"));
        }
        if lb.iter().chain(ub.iter()).any(|x| x.is_nan()) {
            return Err(invalid("bounds must not be NaN"));
        }
        if let Some(i) = (0..lb.len()).find(|&i| lb[i] > ub[i]) {
            return Err(invalid(format!("lb[{i}] = {} exceeds ub[{i}] = {}", lb[i], ub[i])));
        }
        let asym = (&h - h.transpose()).amax();
        if asym > 1e-10 * (1.0 + h.amax()) {
            return Err(invalid(format!("H is not symmetric (asymmetry {asym:.3e})")));
        }
        let h = (&h + h.transpose()) * 0.5;
        Ok(Self { h, f, a_eq, b_eq, a_in, lb, ub })
    }

    /// `min ½ zᵀHz + fᵀz` without constraints.
    pub fn unconstrained(h: DMatrix<f64>, f: DVector<f64>) -> Result<Self> {
        let n = h.nrows();
        Self::new(h, f, DMatrix::zeros(0, n), DVector::zeros(0), DMatrix::zeros(0, n), DVector::zeros(0), DVector::zeros(0))
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }
    pub fn f(&self) -> &DVector<f64> {
        &self.f
    }
    pub fn a_eq(&self) -> &DMatrix<f64> {
        &self.a_eq
    }
    pub fn b_eq(&self) -> &DVector<f64> {
        &self.b_eq
    }
    pub fn a_in(&self) -> &DMatrix<f64> {
        &self.a_in
    }
    pub fn lb(&self) -> &DVector<f64> {
        &self.lb
    }
    pub fn ub(&self) -> &DVector<f64> {
        &self.ub
    }

    pub fn objective(&self, z: &DVector<f64>) -> f64 {
        0.5 * z.dot(&(&self.h * z)) + self.f.dot(z)
    }
}

/// Solves `p` from scratch.
pub fn solve_qp(p: &QpProblem, settings: &QpSettings) -> QpSolution {
    QpFactorization::new(p.h.clone(), p.a_eq.clone(), p.a_in.clone()).solve(&p.f, &p.b_eq, &p.lb, &p.ub, settings)
}

/// Factorized `(H, A_eq, A_in)` reusable across right-hand sides.
#[derive(Debug, Clone)]
pub struct QpFactorization {
    h: DMatrix<f64>,
    a_eq: DMatrix<f64>,
    a_in: DMatrix<f64>,
    eq_pinv: DMatrix<f64>,
    /// Columns span the kept reduced directions with `basisᵀ H basis = I`.
    basis: DMatrix<f64>,
    /// `A_in · basis` with unit-norm rows.
    g: DMatrix<f64>,
    row_scale: Vec<f64>,
    /// Zero-curvature directions inside the equality nullspace.
    flat: DMatrix<f64>,
    prox: Option<(f64, Box<QpFactorization>)>,
}

#[derive(Clone, Copy)]
struct Act {
    row: usize,
    upper: bool,
}

enum ActiveSetOutcome {
    Done,
    Infeasible,
    Budget,
}

impl QpFactorization {
    /// Expects validated, symmetric `h` (see [`QpProblem::new`]).
    pub fn new(h: DMatrix<f64>, a_eq: DMatrix<f64>, a_in: DMatrix<f64>) -> Self {
        Self::build(h, a_eq, a_in, true)
    }

    fn build(h: DMatrix<f64>, a_eq: DMatrix<f64>, a_in: DMatrix<f64>, allow_prox: bool) -> Self {
        let n = h.nrows();
        let (eq_pinv, null) = if a_eq.nrows() == 0 {
            (DMatrix::zeros(n, 0), DMatrix::identity(n, n))
        } else {
            let (pinv, _) = pinv_unchecked(&a_eq, DEFAULT_RTOL);
            let rows = row_space_basis(&a_eq, DEFAULT_RTOL);
            (pinv, orthonormal_complement(&rows))
        };

        let hz = &h * &null;
        let mut reduced = null.transpose() * hz;
        reduced = (&reduced + reduced.transpose()) * 0.5;
        let dim = reduced.nrows();
        let (mut keep, mut drop) = (Vec::new(), Vec::new());
        let mut eig_vals = Vec::new();
        let mut eig_vecs = DMatrix::zeros(dim, 0);
        if dim > 0 {
            let (vals, vecs) = symmetric_eigen(&reduced);
            let lmax = vals.iter().cloned().fold(0.0, f64::max);
            let cut = FLAT_RTOL * dim as f64 * lmax;
            for (i, &l) in vals.iter().enumerate() {
                if lmax > 0.0 && l > cut {
                    keep.push(i);
                } else {
                    drop.push(i);
                }
            }
            // Sort for a deterministic column order independent of the eigensolver's.
            keep.sort_by(|&a, &b| vals[b].total_cmp(&vals[a]).then(a.cmp(&b)));
            eig_vals = vals;
            eig_vecs = vecs;
        }

        let mut basis = DMatrix::zeros(n, keep.len());
        for (j, &i) in keep.iter().enumerate() {
            let col = &null * eig_vecs.column(i) / eig_vals[i].sqrt();
            basis.set_column(j, &col);
        }
        let mut flat = DMatrix::zeros(n, drop.len());
        for (j, &i) in drop.iter().enumerate() {
            flat.set_column(j, &(&null * eig_vecs.column(i)));
        }

        let mut g = &a_in * &basis;
        let mut row_scale = Vec::with_capacity(g.nrows());
        for i in 0..g.nrows() {
            let s = g.row(i).norm();
            if s > 0.0 {
                g.row_mut(i).scale_mut(1.0 / s);
            }
            row_scale.push(s);
        }

        let coupled = flat.ncols() > 0 && a_in.nrows() > 0 && (&a_in * &flat).amax() > 1e-9 * (1.0 + a_in.amax());
        let prox = if coupled && allow_prox {
            let rho = 1e-6 * h.amax().max(1e-12);
            let hp = &h + DMatrix::<f64>::identity(n, n) * rho;
            Some((rho, Box::new(Self::build(hp, a_eq.clone(), a_in.clone(), false))))
        } else {
            None
        };

        Self { h, a_eq, a_in, eq_pinv, basis, g, row_scale, flat, prox }
    }

    pub fn dim(&self) -> usize {
        self.h.nrows()
    }

    /// Solves for a new right-hand side. Dimensions must match the factorization.
    pub fn solve(
        &self,
        f: &DVector<f64>,
        b_eq: &DVector<f64>,
        lb: &DVector<f64>,
        ub: &DVector<f64>,
        settings: &QpSettings,
    ) -> QpSolution {
        assert_eq!(f.len(), self.dim(), "linear cost dimension");
        assert_eq!(b_eq.len(), self.a_eq.nrows(), "equality rhs dimension");
        assert!(lb.len() == self.a_in.nrows() && ub.len() == self.a_in.nrows(), "bound dimension");
        if let Some((rho, inner)) = &self.prox {
            return self.solve_proximal(*rho, inner, f, b_eq, lb, ub, settings);
        }
        self.solve_direct(f, b_eq, lb, ub, settings, 0)
    }

    fn solve_direct(
        &self,
        f: &DVector<f64>,
        b_eq: &DVector<f64>,
        lb: &DVector<f64>,
        ub: &DVector<f64>,
        settings: &QpSettings,
        iterations_so_far: usize,
    ) -> QpSolution {
        let x_p = &self.eq_pinv * b_eq;
        let eq_res = scaled_eq_residual(&self.a_eq, &x_p, b_eq);
        if eq_res > settings.eps_feas {
            return self.finish(x_p, f, lb, ub, None, QpStatus::Infeasible, iterations_so_far);
        }

        let grad0 = &self.h * &x_p + f;
        if self.flat.ncols() > 0 {
            let flat_grad = self.flat.transpose() * &grad0;
            if flat_grad.amax() > 1e-9 * (1.0 + grad0.amax()) {
                log::debug!("QP cost is unbounded along a zero-curvature direction");
                return self.finish(x_p, f, lb, ub, None, QpStatus::Infeasible, iterations_so_far);
            }
        }
        let c = self.basis.transpose() * &grad0;
        let ax = &self.a_in * &x_p;
        let m = self.a_in.nrows();
        let mut lo = vec![f64::NEG_INFINITY; m];
        let mut hi = vec![f64::INFINITY; m];
        for i in 0..m {
            let s = self.row_scale[i];
            if s == 0.0 {
                let tol = settings.eps_feas * (1.0 + lb[i].abs().min(ub[i].abs()).min(1e300));
                if ax[i] < lb[i] - tol || ax[i] > ub[i] + tol {
                    return self.finish(x_p, f, lb, ub, None, QpStatus::Infeasible, iterations_so_far);
                }
                continue;
            }
            lo[i] = (lb[i] - ax[i]) / s;
            hi[i] = (ub[i] - ax[i]) / s;
        }

        let mut v = -c.clone();
        let mut active: Vec<Act> = Vec::new();
        let mut mult: Vec<f64> = Vec::new();
        let mut iterations = iterations_so_far;
        let budget = settings.max_iter;
        let outcome = self.dual_active_set(&mut v, &mut active, &mut mult, &lo, &hi, &mut iterations, budget);

        let z = &x_p + &self.basis * &v;
        let mut y_in = DVector::zeros(m);
        for (a, &mu) in active.iter().zip(mult.iter()) {
            let s = self.row_scale[a.row];
            y_in[a.row] = if a.upper { mu / s } else { -mu / s };
        }
        let status = match outcome {
            ActiveSetOutcome::Done => QpStatus::Optimal,
            ActiveSetOutcome::Infeasible => QpStatus::Infeasible,
            ActiveSetOutcome::Budget => QpStatus::MaxIterations,
        };
        self.finish_with(z, f, b_eq, lb, ub, Some(y_in), status, iterations, settings)
    }

    #[allow(clippy::too_many_arguments)]
    fn dual_active_set(
        &self,
        v: &mut DVector<f64>,
        active: &mut Vec<Act>,
        mult: &mut Vec<f64>,
        lo: &[f64],
        hi: &[f64],
        iterations: &mut usize,
        budget: usize,
    ) -> ActiveSetOutcome {
        let k = v.len();
        let m = lo.len();
        let normal = |a: Act| -> DVector<f64> {
            let row = self.g.row(a.row).transpose();
            if a.upper {
                -row
            } else {
                row
            }
        };
        let slack = |a: Act, v: &DVector<f64>| -> f64 {
            let gv = self.g.row(a.row).dot(&v.transpose());
            if a.upper {
                hi[a.row] - gv
            } else {
                gv - lo[a.row]
            }
        };

        loop {
            // Most violated inactive half-constraint.
            let gv = &self.g * &*v;
            let mut worst: Option<(Act, f64)> = None;
            for i in 0..m {
                if self.row_scale[i] == 0.0 {
                    continue;
                }
                for upper in [false, true] {
                    let b = if upper { hi[i] } else { lo[i] };
                    if !b.is_finite() {
                        continue;
                    }
                    if active.iter().any(|a| a.row == i && a.upper == upper) {
                        continue;
                    }
                    let s = if upper { hi[i] - gv[i] } else { gv[i] - lo[i] };
                    let tol = ACTIVE_TOL * (1.0 + b.abs());
                    if s < -tol && worst.is_none_or(|(_, w)| s < w) {
                        worst = Some((Act { row: i, upper }, s));
                    }
                }
            }
            let Some((p, _)) = worst else {
                return ActiveSetOutcome::Done;
            };
            let np = normal(p);
            let mut u_p = 0.0;

            loop {
                *iterations += 1;
                if *iterations > budget {
                    return ActiveSetOutcome::Budget;
                }
                let q = active.len();
                let (z, r) = if q == 0 {
                    (np.clone(), DVector::zeros(0))
                } else {
                    let mut nmat = DMatrix::zeros(k, q);
                    for (j, &a) in active.iter().enumerate() {
                        nmat.set_column(j, &normal(a));
                    }
                    let gram = nmat.transpose() * &nmat;
                    let rhs = nmat.transpose() * &np;
                    let r = match gram.clone().cholesky() {
                        Some(ch) => ch.solve(&rhs),
                        None => pinv_unchecked(&gram, 1e-14).0 * rhs,
                    };
                    (&np - &nmat * &r, r)
                };

                let mut t1 = f64::INFINITY;
                let mut drop_idx = None;
                for j in 0..r.len() {
                    if r[j] > 1e-14 {
                        let t = mult[j] / r[j];
                        if t < t1 {
                            t1 = t;
                            drop_idx = Some(j);
                        }
                    }
                }
                let zz = z.dot(&np);
                let s_p = slack(p, v);
                let t2 = if z.amax() > 1e-12 && zz > 0.0 { (-s_p / zz).max(0.0) } else { f64::INFINITY };
                let t = t1.min(t2);
                if !t.is_finite() {
                    return ActiveSetOutcome::Infeasible;
                }
                if t2.is_finite() {
                    v.axpy(t, &z, 1.0);
                }
                for j in 0..r.len() {
                    mult[j] -= t * r[j];
                }
                u_p += t;
                if t2 <= t1 {
                    active.push(p);
                    mult.push(u_p);
                    break;
                }
                let l = drop_idx.expect("partial step has a blocking constraint");
                active.remove(l);
                mult.remove(l);
            }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn solve_proximal(
        &self,
        rho: f64,
        inner: &QpFactorization,
        f: &DVector<f64>,
        b_eq: &DVector<f64>,
        lb: &DVector<f64>,
        ub: &DVector<f64>,
        settings: &QpSettings,
    ) -> QpSolution {
        let n = self.dim();
        let mut z = DVector::<f64>::zeros(n);
        let mut iterations = 0;
        let mut last = None;
        while iterations < settings.max_iter {
            let shifted = f - &z * rho;
            let sol = inner.solve_direct(&shifted, b_eq, lb, ub, settings, iterations);
            iterations = sol.iterations + 1;
            if sol.status == QpStatus::Infeasible {
                return self.finish_with(sol.z, f, b_eq, lb, ub, None, QpStatus::Infeasible, iterations, settings);
            }
            let step = (&sol.z - &z).amax();
            z = sol.z.clone();
            last = Some(sol);
            if step <= 1e-12 * (1.0 + z.amax()) {
                break;
            }
        }
        let Some(sol) = last else {
            return self.finish_with(z, f, b_eq, lb, ub, None, QpStatus::MaxIterations, iterations, settings);
        };
        let candidate =
            self.finish_with(sol.z, f, b_eq, lb, ub, Some(sol.y_in), QpStatus::Optimal, iterations, settings);
        if candidate.status == QpStatus::Optimal || iterations < settings.max_iter {
            candidate
        } else {
            QpSolution { status: QpStatus::MaxIterations, ..candidate }
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn finish(
        &self,
        z: DVector<f64>,
        f: &DVector<f64>,
        lb: &DVector<f64>,
        ub: &DVector<f64>,
        y_in: Option<DVector<f64>>,
        status: QpStatus,
        iterations: usize,
    ) -> QpSolution {
        let b_eq = &self.a_eq * &z;
        self.finish_with(z, f, &b_eq, lb, ub, y_in, status, iterations, &QpSettings::default())
    }

    /// Computes multipliers, residuals and objective; downgrades an `Optimal`
    /// claim that misses the residual contract to `MaxIterations`.
    #[allow(clippy::too_many_arguments)]
    fn finish_with(
        &self,
        z: DVector<f64>,
        f: &DVector<f64>,
        b_eq: &DVector<f64>,
        lb: &DVector<f64>,
        ub: &DVector<f64>,
        y_in: Option<DVector<f64>>,
        mut status: QpStatus,
        iterations: usize,
        settings: &QpSettings,
    ) -> QpSolution {
        let hz = &self.h * &z;
        let y_in = y_in.unwrap_or_else(|| DVector::zeros(self.a_in.nrows()));
        let ain_t_y = self.a_in.transpose() * &y_in;
        let partial = &hz + f + &ain_t_y;
        let y_eq = -(self.eq_pinv.transpose() * &partial);
        let aeq_t_y = self.a_eq.transpose() * &y_eq;
        let stationarity = &partial + &aeq_t_y;
        let scale = 1.0 + hz.amax().max(f.amax()).max(ain_t_y.amax()).max(aeq_t_y.amax());
        let dual_residual = stationarity.amax() / scale;

        let mut primal_residual = scaled_eq_residual(&self.a_eq, &z, b_eq);
        let az = &self.a_in * &z;
        for i in 0..az.len() {
            let lo_v = if lb[i].is_finite() { (lb[i] - az[i]) / (1.0 + lb[i].abs()) } else { 0.0 };
            let hi_v = if ub[i].is_finite() { (az[i] - ub[i]) / (1.0 + ub[i].abs()) } else { 0.0 };
            primal_residual = primal_residual.max(lo_v).max(hi_v);
        }

        if status == QpStatus::Optimal && (primal_residual > settings.eps_feas || dual_residual > settings.eps_opt) {
            log::warn!(
                "QP iterate misses tolerances (primal {primal_residual:.2e}, dual {dual_residual:.2e}); reporting max-iterations"
            );
            status = QpStatus::MaxIterations;
        }
        let objective = 0.5 * z.dot(&hz) + f.dot(&z);
        QpSolution { z, objective, status, iterations, primal_residual, dual_residual, y_eq, y_in }
    }
}

fn scaled_eq_residual(a_eq: &DMatrix<f64>, z: &DVector<f64>, b_eq: &DVector<f64>) -> f64 {
    if a_eq.nrows() == 0 {
        return 0.0;
    }
    (a_eq * z - b_eq).amax() / (1.0 + b_eq.amax())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn dv(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    fn box_problem(h: DMatrix<f64>, f: DVector<f64>, a_in: DMatrix<f64>, lb: DVector<f64>, ub: DVector<f64>) -> QpProblem {
        let n = h.nrows();
        QpProblem::new(h, f, DMatrix::zeros(0, n), DVector::zeros(0), a_in, lb, ub).unwrap()
    }

    #[test]
    fn unconstrained_minimum() {
        let p = QpProblem::unconstrained(DMatrix::from_element(1, 1, 2.0), dv(&[0.0])).unwrap();
        let s = solve_qp(&p, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Optimal);
        assert!(s.z[0].abs() < 1e-15 && s.objective.abs() < 1e-15);
    }

    #[test]
    fn active_upper_bound() {
        // (z − 1)² = z² − 2z + 1
        let p = box_problem(
            DMatrix::from_element(1, 1, 2.0),
            dv(&[-2.0]),
            DMatrix::from_element(1, 1, 1.0),
            dv(&[f64::NEG_INFINITY]),
            dv(&[0.5]),
        );
        let s = solve_qp(&p, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 0.5).abs() < 1e-12);
        assert!(s.y_in[0] > 0.0);
    }

    #[test]
    fn least_norm_on_a_line() {
        let p = QpProblem::new(
            DMatrix::identity(2, 2) * 2.0,
            dv(&[0.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            dv(&[2.0]),
            DMatrix::zeros(0, 2),
            dv(&[]),
            dv(&[]),
        )
        .unwrap();
        let s = solve_qp(&p, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 1.0).abs() < 1e-12 && (s.z[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn detects_infeasible_bounds() {
        // z1 + z2 = 2 with both z ≤ 0.5
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            dv(&[0.0, 0.0]),
            DMatrix::from_row_slice(1, 2, &[1.0, 1.0]),
            dv(&[2.0]),
            DMatrix::identity(2, 2),
            dv(&[-1.0, -1.0]),
            dv(&[0.5, 0.5]),
        )
        .unwrap();
        assert_eq!(solve_qp(&p, &QpSettings::default()).status, QpStatus::Infeasible);
        // inconsistent equalities
        let p = QpProblem::new(
            DMatrix::identity(2, 2),
            dv(&[0.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]),
            dv(&[1.0, 2.0]),
            DMatrix::zeros(0, 2),
            dv(&[]),
            dv(&[]),
        )
        .unwrap();
        assert_eq!(solve_qp(&p, &QpSettings::default()).status, QpStatus::Infeasible);
    }

    #[test]
    fn rejects_bad_problems() {
        let asym = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.0, 1.0]);
        assert!(QpProblem::unconstrained(asym, dv(&[0.0, 0.0])).is_err());
        assert!(QpProblem::unconstrained(DMatrix::identity(2, 2), dv(&[0.0])).is_err());
        let bad_bounds = QpProblem::new(
            DMatrix::identity(1, 1),
            dv(&[0.0]),
            DMatrix::zeros(0, 1),
            dv(&[]),
            DMatrix::identity(1, 1),
            dv(&[1.0]),
            dv(&[0.0]),
        );
        assert!(bad_bounds.is_err());
    }

    #[test]
    fn semidefinite_with_decoupled_flat_directions() {
        // Cost only sees z1; z2 is free and untouched: minimum-norm answer z2 = 0.
        let p = QpProblem::unconstrained(DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]), dv(&[-2.0, 0.0])).unwrap();
        let s = solve_qp(&p, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Optimal);
        assert!((s.z[0] - 1.0).abs() < 1e-12 && s.z[1].abs() < 1e-12);
    }

    #[test]
    fn semidefinite_with_coupled_flat_directions() {
        // min (z1 − 1)² s.t. z1 + z2 ≤ 0, z2 ≥ −0.25 → z1 = 0.25, z2 = −0.25
        let p = box_problem(
            DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 0.0]),
            dv(&[-2.0, 0.0]),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 0.0, 1.0]),
            dv(&[f64::NEG_INFINITY, -0.25]),
            dv(&[0.0, f64::INFINITY]),
        );
        let s = solve_qp(&p, &QpSettings::default());
        assert_eq!(s.status, QpStatus::Optimal, "{s:?}");
        assert!((s.z[0] - 0.25).abs() < 1e-6 && (s.z[1] + 0.25).abs() < 1e-6, "{:?}", s.z);
    }

    #[test]
    fn unbounded_cost_is_reported() {
        let p = QpProblem::unconstrained(DMatrix::zeros(1, 1), dv(&[1.0])).unwrap();
        assert_ne!(solve_qp(&p, &QpSettings::default()).status, QpStatus::Optimal);
    }

    #[test]
    fn deterministic_bitwise() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let m = DMatrix::from_fn(8, 8, |_, _| rng.random_range(-1.0..1.0));
        let h = m.transpose() * &m + DMatrix::identity(8, 8);
        let f = DVector::from_fn(8, |_, _| rng.random_range(-3.0..3.0));
        let p = box_problem(h, f, DMatrix::identity(8, 8), DVector::from_element(8, -0.3), DVector::from_element(8, 0.3));
        let a = solve_qp(&p, &QpSettings::default());
        let b = solve_qp(&p, &QpSettings::default());
        assert_eq!(a.z.as_slice(), b.z.as_slice());
        assert_eq!(a.objective.to_bits(), b.objective.to_bits());
    }

    #[test]
    fn factorization_reuse_matches_fresh_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(1234);
        let m = DMatrix::from_fn(6, 6, |_, _| rng.random_range(-1.0..1.0));
        let h = m.transpose() * &m + DMatrix::identity(6, 6) * 0.1;
        let a_eq = DMatrix::from_fn(2, 6, |_, _| rng.random_range(-1.0..1.0));
        let a_in = DMatrix::from_fn(3, 6, |_, _| rng.random_range(-1.0..1.0));
        let fact = QpFactorization::new(h.clone(), a_eq.clone(), a_in.clone());
        for _ in 0..5 {
            let f = DVector::from_fn(6, |_, _| rng.random_range(-2.0..2.0));
            let b = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
            let lb = DVector::from_element(3, -0.5);
            let ub = DVector::from_element(3, 0.5);
            let p = QpProblem::new(h.clone(), f.clone(), a_eq.clone(), b.clone(), a_in.clone(), lb.clone(), ub.clone()).unwrap();
            let fresh = solve_qp(&p, &QpSettings::default());
            let reused = fact.solve(&f, &b, &lb, &ub, &QpSettings::default());
            assert_eq!(fresh.status, reused.status);
            assert!((fresh.z - reused.z).amax() < 1e-12);
        }
    }
}
