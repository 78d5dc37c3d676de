use std::io;

use thiserror::Error;

pub type Result<T, E = HteError> = std::result::Result<T, E>;

/// Errors raised by the regression engine.
///
/// The variants are grouped so that callers (the CLI in particular) can map
/// them onto configuration, data, and training failures.
#[derive(Debug, Error)]
pub enum HteError {
    #[error("invalid configuration: `{field}` {message}")]
    Config { field: String, message: String },

    #[error("dimension mismatch: expected d={expected}, got d={actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("csv error at row {row}, column {column}: {message}")]
    Csv {
        row: usize,
        column: String,
        message: String,
    },

    #[error("matrix is ill-conditioned: Cholesky failed with jitter up to {max_jitter:e}")]
    IllConditioned { max_jitter: f64 },

    #[error("training error: {0}")]
    Training(String),

    #[error("model format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl HteError {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        HteError::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        HteError::Data(message.into())
    }

    /// Broad failure category used for process exit codes.
    pub fn kind(&self) -> ErrorKind {
        match self {
            HteError::Config { .. } => ErrorKind::Config,
            HteError::DimensionMismatch { .. }
            | HteError::Data(_)
            | HteError::Csv { .. }
            | HteError::Format(_)
            | HteError::Io(_) => ErrorKind::Data,
            HteError::IllConditioned { .. } | HteError::Training(_) => ErrorKind::Training,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Config,
    Data,
    Training,
}

pub(crate) fn check_dim(expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(HteError::DimensionMismatch { expected, actual });
    }
    Ok(())
}
