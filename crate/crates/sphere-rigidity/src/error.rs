use thiserror::Error;

/// Errors raised by the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("unsupported dimension n = {0}")]
    UnsupportedDimension(usize),
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid index: {0}")]
    InvalidIndex(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("integrity failure: {0}")]
    Integrity(String),
    #[error("undefined quantity: {0}")]
    Undefined(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;
