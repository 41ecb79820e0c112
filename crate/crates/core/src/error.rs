//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{op}: shape mismatch between {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: (usize, usize),
        rhs: (usize, usize),
    },

    #[error("{op}: invalid argument: {msg}")]
    InvalidArgument { op: &'static str, msg: String },

    #[error("{what} is not finite")]
    NonFinite { what: String },

    #[error("{file}:{line}: {msg}")]
    DatasetFormat {
        file: String,
        line: usize,
        msg: String,
    },

    #[error("graph invariant violated: {0}")]
    GraphInvariant(String),

    #[error("training diverged at epoch {epoch} (learning rate {learning_rate}): {msg}")]
    Divergence {
        epoch: usize,
        learning_rate: f64,
        msg: String,
    },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
