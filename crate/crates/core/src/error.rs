use thiserror::Error;

/// Errors raised by matrix construction, pipeline setup and model inputs.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("zero dimension: {what} must be at least 1")]
    ZeroDimension { what: &'static str },

    #[error("dimension mismatch in {op}: expected {expected}, got {actual}")]
    DimensionMismatch {
        op: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("data length {actual} does not match {rows}x{cols}")]
    DataLength {
        rows: usize,
        cols: usize,
        actual: usize,
    },

    #[error("invalid softmax scale {0}: must be finite and non-negative")]
    InvalidScale(f64),

    #[error("invalid schedule parameter: {0}")]
    InvalidSchedule(&'static str),
}

pub type Result<T> = core::result::Result<T, Error>;
