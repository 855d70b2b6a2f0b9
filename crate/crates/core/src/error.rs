use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: String, actual: String },

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("soft assignment is not row-stochastic (row {row} sums to {sum})")]
    NotStochastic { row: usize, sum: f64 },

    #[error("eigensolver did not converge: max residual {max_residual:e} after {iterations} iterations")]
    EigenNoConvergence { max_residual: f64, iterations: usize },

    #[error("non-finite activation in {0}")]
    NonFinite(String),

    #[error("cache does not match the parameters or graph it is used with: {0}")]
    StaleCache(String),

    #[error("all {restarts} training restarts diverged")]
    TrainingDiverged {
        restarts: usize,
        history: Box<crate::trainer::TrainHistory>,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dims(expected: impl ToString, actual: impl ToString) -> Self {
        Error::DimensionMismatch {
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }
}
