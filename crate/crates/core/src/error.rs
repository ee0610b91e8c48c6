use thiserror::Error;

/// Errors produced by the inversion library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected:?}, got {got:?}")]
    Dimension { expected: Vec<usize>, got: Vec<usize> },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("solver diverged at iteration {iteration}")]
    Divergence { iteration: usize },

    #[error("symmetric Bregman distance is negative ({0:e}); supplied vectors are not subgradients")]
    SubgradientViolation(f64),

    #[error("construction failed: {0}")]
    Construction(String),

    #[error("malformed {format} data: {reason}")]
    Format { format: &'static str, reason: String },

    #[error("truncated {format} data: expected {expected} bytes, found {actual}")]
    Truncated { format: &'static str, expected: usize, actual: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dims(expected: &[usize], got: &[usize]) -> Self {
        Error::Dimension { expected: expected.to_vec(), got: got.to_vec() }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
