use thiserror::Error;

use crate::embedstore::{AlignError, ConllError, FormatError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Dimension disagreement between two operands.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("shape mismatch in {context}: expected {expected}, got {actual}")]
pub struct ShapeError {
    pub context: &'static str,
    pub expected: usize,
    pub actual: usize,
}

impl ShapeError {
    pub fn check(context: &'static str, expected: usize, actual: usize) -> Result<(), ShapeError> {
        if expected == actual {
            Ok(())
        } else {
            Err(ShapeError { context, expected, actual })
        }
    }
}

/// Invalid user-supplied configuration. `field` names the offending key.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("invalid `{field}`: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self { field: field.into(), message: message.into() }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Format(#[from] FormatError),
    #[error(transparent)]
    Conll(#[from] ConllError),
    #[error(transparent)]
    Align(#[from] AlignError),
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite loss {loss} at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize, loss: f64 },
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: &std::path::Path, source: std::io::Error) -> Self {
        Error::Io { path: path.display().to_string(), source }
    }
}
