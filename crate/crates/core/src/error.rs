use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = EndaError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum EndaError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid covariance: {0}")]
    InvalidCovariance(String),

    #[error("numerical rank deficiency: {0}")]
    NumericalRank(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("infeasible marginals: {0}")]
    Infeasible(String),

    #[error("value outside domain: {0}")]
    Domain(String),

    #[error("solver did not converge: {0}")]
    NonConvergence(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed data: {0}")]
    Format(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl EndaError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EndaError::Io {
            path: path.into(),
            source,
        }
    }
}
