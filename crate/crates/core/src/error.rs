use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum DrltError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid parameter: {0}")]
    InvalidParam(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("entry ({row},{col}) = {value} is not in the allowed set {allowed}")]
    InvalidEntry {
        row: usize,
        col: usize,
        value: f64,
        allowed: &'static str,
    },

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("parse error: {0}")]
    Parse(String),

    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl DrltError {
    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        DrltError::DimensionMismatch(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        DrltError::InvalidParam(msg.into())
    }
}
