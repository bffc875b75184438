use thiserror::Error;

/// Errors raised anywhere in the library.
#[derive(Error, Debug, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error(
        "covariance of {kernel} is not positive semidefinite on {grid} after jitter {jitter:e}"
    )]
    NotPsd {
        kernel: String,
        grid: String,
        jitter: f64,
    },
    #[error("quadrature did not converge: requested {requested:e}, achieved {achieved:e}")]
    Quadrature { requested: f64, achieved: f64 },
    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("horizon {needed} exceeds grid end {grid_end}")]
    Horizon { needed: f64, grid_end: f64 },
    #[error("singular matrix: {0}")]
    Singular(String),
    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
