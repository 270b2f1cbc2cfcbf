use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Core(#[from] deepc_core::Error),
    #[error("I/O error on {}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl BenchError {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            BenchError::Invalid(_) => "invalid-scenario",
            BenchError::Core(deepc_core::Error::InvalidInput(_)) => "invalid-input",
            BenchError::Core(deepc_core::Error::NotObservable) => "not-observable",
            BenchError::Core(deepc_core::Error::NoConvergence(_)) => "no-convergence",
            BenchError::Core(deepc_core::Error::Divergence { .. }) => "divergence",
            BenchError::Core(deepc_core::Error::Infeasible) => "infeasible",
            BenchError::Io { .. } => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BenchError::Io { path: path.into(), source }
    }
}

pub type BenchResult<T> = std::result::Result<T, BenchError>;
