//! Crate-wide error type.

use std::path::PathBuf;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Tensor or image shapes do not line up for the requested operation.
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    /// A parameter is outside its documented domain.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// A configuration violates its invariants.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Autodiff graph misuse (non-scalar backward, double backward, ...).
    #[error("autodiff state: {0}")]
    Autodiff(String),

    /// A computation produced non-finite or otherwise unusable values.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An iterative solver failed to make progress.
    #[error("no convergence: {0}")]
    Convergence(String),

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
