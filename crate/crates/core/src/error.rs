use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: String, reason: String },

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("queue index {0} out of range (expected 1..=4)")]
    QueueIndex(usize),

    #[error("trace error: {0}")]
    Trace(String),

    #[error("non-finite gradient at iteration {iteration}: {gradient:?}")]
    NonFiniteGradient { iteration: usize, gradient: [f64; 4] },

    #[error("spec error: {0}")]
    Spec(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
