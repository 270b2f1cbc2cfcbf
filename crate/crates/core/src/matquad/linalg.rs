use nalgebra::{DMatrix, DVector};

use crate::error::{invalid, Result};

/// Default relative singular-value threshold for rank and pseudoinverse.
pub const DEFAULT_RTOL: f64 = 1e-10;

pub fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(invalid(format!("{what} has non-finite entries")))
    }
}

fn check_nonempty(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if m.nrows() == 0 || m.ncols() == 0 {
        Err(invalid(format!("{what} is empty ({}x{})", m.nrows(), m.ncols())))
    } else {
        Ok(())
    }
}

/// Singular values above this cutoff count toward the rank.
fn cutoff(rows: usize, cols: usize, sigma_max: f64, rtol: f64) -> f64 {
    rtol * rows.max(cols) as f64 * sigma_max
}

fn to_faer(m: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

fn from_faer(m: faer::MatRef<'_, f64>) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| m[(i, j)])
}

/// Thin SVD `m = U diag(s) Vᵀ` with singular values in non-increasing order.
pub(crate) fn thin_svd(m: &DMatrix<f64>) -> (DMatrix<f64>, Vec<f64>, DMatrix<f64>) {
    let svd = to_faer(m).thin_svd().expect("SVD failed to converge");
    let s = svd.S().column_vector();
    let s = (0..s.nrows()).map(|i| s[i]).collect();
    (from_faer(svd.U()), s, from_faer(svd.V()))
}

fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    to_faer(m).singular_values().expect("SVD failed to converge")
}

/// Eigendecomposition of a symmetric matrix; eigenvalues in non-decreasing order.
pub(crate) fn symmetric_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let evd = to_faer(m).self_adjoint_eigen(faer::Side::Lower).expect("eigendecomposition failed to converge");
    let s = evd.S().column_vector();
    ((0..s.nrows()).map(|i| s[i]).collect(), from_faer(evd.U()))
}

/// Eigenvalues of a general square matrix as `(re, im)` pairs.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    to_faer(m)
        .eigenvalues()
        .expect("eigenvalue iteration failed to converge")
        .into_iter()
        .map(|c| (c.re, c.im))
        .collect()
}

/// Numerical rank: the number of singular values `σ_i > rtol · max(rows, cols) · σ_max`.
pub fn rank_with_tolerance(m: &DMatrix<f64>, rtol: f64) -> Result<usize> {
    check_nonempty(m, "matrix")?;
    check_finite(m, "matrix")?;
    if !(rtol >= 0.0) {
        return Err(invalid("rtol must be non-negative"));
    }
    let sv = singular_values(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return Ok(0);
    }
    let cut = cutoff(m.nrows(), m.ncols(), smax, rtol);
    Ok(sv.iter().filter(|&&s| s > cut).count())
}

/// Moore-Penrose pseudoinverse with the same truncation rule as [`rank_with_tolerance`].
pub fn pinv(m: &DMatrix<f64>, rtol: f64) -> Result<DMatrix<f64>> {
    check_nonempty(m, "matrix")?;
    check_finite(m, "matrix")?;
    if !(rtol >= 0.0) {
        return Err(invalid("rtol must be non-negative"));
    }
    Ok(pinv_unchecked(m, rtol).0)
}

/// Pseudoinverse plus the retained rank. Callers have validated the input.
pub(crate) fn pinv_unchecked(m: &DMatrix<f64>, rtol: f64) -> (DMatrix<f64>, usize) {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return (DMatrix::zeros(cols, rows), 0);
    }
    let (u, sv, v) = thin_svd(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    let mut out = DMatrix::zeros(cols, rows);
    if smax == 0.0 {
        return (out, 0);
    }
    let cut = cutoff(rows, cols, smax, rtol);
    let mut rank = 0;
    for (i, &s) in sv.iter().enumerate() {
        if s > cut {
            rank += 1;
            // out += v_i * u_iᵀ / s
            let vi = v.column(i) / s;
            out.ger(1.0, &vi, &u.column(i), 1.0);
        }
    }
    (out, rank)
}

/// Orthonormal basis of the row space of `m` (right singular vectors with
/// singular values above the threshold), returned as columns.
pub(crate) fn row_space_basis(m: &DMatrix<f64>, rtol: f64) -> DMatrix<f64> {
    let (rows, cols) = m.shape();
    if rows == 0 || cols == 0 {
        return DMatrix::zeros(cols, 0);
    }
    let (_, sv, v) = thin_svd(m);
    let smax = sv.iter().cloned().fold(0.0, f64::max);
    if smax == 0.0 {
        return DMatrix::zeros(cols, 0);
    }
    let cut = cutoff(rows, cols, smax, rtol);
    let keep: Vec<usize> = (0..sv.len()).filter(|&i| sv[i] > cut).collect();
    let mut basis = DMatrix::zeros(cols, keep.len());
    for (j, &i) in keep.iter().enumerate() {
        basis.set_column(j, &v.column(i));
    }
    basis
}

/// Orthonormal basis for the orthogonal complement of the column span of `q`,
/// where `q` has orthonormal columns. Built from Householder reflectors so
/// that the full complement is available even when `q` is thin.
pub fn orthonormal_complement(q: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, r) = q.shape();
    let mut work = q.clone();
    let mut reflectors: Vec<DVector<f64>> = Vec::with_capacity(r);
    for k in 0..r.min(n) {
        let x = work.view((k, k), (n - k, 1)).clone_owned();
        let alpha = x.norm();
        let mut v = DVector::<f64>::zeros(n);
        if alpha > 0.0 {
            let sign = if x[0] >= 0.0 { 1.0 } else { -1.0 };
            for i in 0..(n - k) {
                v[k + i] = x[i];
            }
            v[k] += sign * alpha;
            let vn = v.norm();
            if vn > 0.0 {
                v /= vn;
            }
        }
        // work ← (I − 2vvᵀ) work
        let vt_w = v.transpose() * &work;
        work.ger(-2.0, &v, &vt_w.transpose(), 1.0);
        reflectors.push(v);
    }
    // Q = H_1 ... H_r, complement = Q · [0; I].
    let m = n - r.min(n);
    let mut out = DMatrix::<f64>::zeros(n, m);
    for j in 0..m {
        out[(r + j, j)] = 1.0;
    }
    for v in reflectors.iter().rev() {
        let vt_o = v.transpose() * &out;
        out.ger(-2.0, v, &vt_o.transpose(), 1.0);
    }
    out
}

/// Minimum-norm least-squares solution `X = A⁺ B` of `min ‖A·X − B‖_F`.
pub fn least_squares(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if a.nrows() != b.nrows() {
        return Err(invalid(format!(
            "row mismatch in least squares: A is {}x{}, B is {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    check_nonempty(a, "A")?;
    check_finite(a, "A")?;
    check_finite(b, "B")?;
    Ok(pinv_unchecked(a, DEFAULT_RTOL).0 * b)
}
