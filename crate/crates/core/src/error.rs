use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("pair (A, C) is not observable")]
    NotObservable,
    #[error("iteration did not converge: {0}")]
    NoConvergence(String),
    #[error("simulation diverged at t = {time:.4} s (state norm {norm:.3e})")]
    Divergence { time: f64, norm: f64 },
    #[error("optimization problem is infeasible")]
    Infeasible,
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}
