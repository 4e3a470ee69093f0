//! Error types shared across the crate.

use std::path::PathBuf;
use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Image or tensor dimensions do not match what an operation requires.
    #[error("shape mismatch: {0}")]
    Shape(String),

    /// A value is outside its mathematical or physical domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A configuration or input failed validation before any work started.
    #[error("validation error: {0}")]
    Validation(String),

    /// A dataset, weight file or checkpoint could not be decoded.
    #[error("format error: {0}")]
    Format(String),

    /// Training or a metric produced a non-finite value.
    #[error("numeric failure: {0}")]
    Numeric(String),

    /// An I/O failure, annotated with the file it concerns.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
