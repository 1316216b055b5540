use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, PrecodingError>;

#[derive(Debug, Error)]
pub enum PrecodingError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: String,
        actual: String,
    },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// A block update hit a singular system that the algorithm cannot recover from.
    #[error("degenerate state at iteration {iteration}, user {user}: {reason}")]
    DegenerateState {
        iteration: usize,
        user: usize,
        reason: String,
    },

    #[error("non-finite value at iteration {iteration} in {context}")]
    NonFinite { iteration: usize, context: String },

    #[error("all precoder coefficients vanish on the active support; no power scaling exists")]
    ZeroPower,

    #[error("combinatorial budget exceeded: {count} candidates > limit {limit}")]
    BudgetExceeded { count: u128, limit: u128 },

    #[error("row index {row} out of range for {m} beams")]
    RowOutOfRange { row: usize, m: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error("{cell}: {source}")]
    InCell {
        cell: String,
        #[source]
        source: Box<PrecodingError>,
    },
}

impl PrecodingError {
    pub(crate) fn dims(
        context: &'static str,
        expected: impl ToString,
        actual: impl ToString,
    ) -> Self {
        PrecodingError::DimensionMismatch {
            context,
            expected: expected.to_string(),
            actual: actual.to_string(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        PrecodingError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn in_cell(self, cell: impl Into<String>) -> Self {
        PrecodingError::InCell {
            cell: cell.into(),
            source: Box::new(self),
        }
    }

    /// Attaches an iteration index to errors raised inside a single block update.
    pub(crate) fn at_iteration(self, iteration: usize) -> Self {
        match self {
            PrecodingError::DegenerateState { user, reason, .. } => {
                PrecodingError::DegenerateState {
                    iteration,
                    user,
                    reason,
                }
            }
            PrecodingError::NonFinite { context, .. } => {
                PrecodingError::NonFinite { iteration, context }
            }
            other => other,
        }
    }
}
