//! Dense real linear algebra and a deterministic convex QP solver.
//!
//! Every other module assembles its numerical work into the routines here:
//! rank decisions and pseudoinverses go through one SVD-based truncation rule,
//! and both predictive controllers reduce to [`QpProblem`].

mod linalg;
mod qp;

pub use linalg::{
    check_finite, eigenvalues, least_squares, orthonormal_complement, pinv, rank_with_tolerance, DEFAULT_RTOL,
};
pub(crate) use linalg::{pinv_unchecked, symmetric_eigen};
pub use qp::{solve_qp, QpFactorization, QpProblem, QpSettings, QpSolution, QpStatus};

/// Matrices are plain dense `nalgebra` matrices.
pub type RealMatrix = nalgebra::DMatrix<f64>;
/// Column vectors.
pub type RealVector = nalgebra::DVector<f64>;
