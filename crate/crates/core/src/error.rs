//! Error type shared by the whole crate.

use std::fmt;

/// Library-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong in this crate.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A matrix expected to be symmetric positive definite failed its
    /// Cholesky factorization. During iterations this signals that an
    /// iterate left the cone.
    NotPositiveDefinite,
    /// Operand shapes do not match.
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },
    /// The Kraus collection violates the invertibility assumption on its
    /// Gram sums, so one-sided normalization is impossible.
    AssumptionViolated(String),
    /// A triangular factor has a zero pivot.
    Singular,
    /// Scalar argument outside its admissible range.
    Domain(String),
    /// A trace does not hold enough usable records for the requested
    /// estimate.
    InsufficientHistory { needed: usize, available: usize },
    /// An anchor point expected to be a (numerical) fixed point is not.
    NotConverged { gradient_norm: f64 },
    /// The problem is too large for a dense materialization.
    DimensionTooLarge { size: usize, max: usize },
    /// Invalid solver or generator configuration.
    InvalidConfig(String),
    /// I/O or de/serialization failure.
    Io(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NotPositiveDefinite => {
                write!(f, "matrix is not positive definite (Cholesky pivot <= 0)")
            }
            Error::DimensionMismatch { expected, found } => write!(
                f,
                "dimension mismatch: expected {}x{}, found {}x{}",
                expected.0, expected.1, found.0, found.1
            ),
            Error::AssumptionViolated(what) => {
                write!(f, "scaling assumption violated: {what}")
            }
            Error::Singular => write!(f, "triangular factor has a zero pivot"),
            Error::Domain(what) => write!(f, "argument outside admissible range: {what}"),
            Error::InsufficientHistory { needed, available } => write!(
                f,
                "trace too short: need {needed} usable records, have {available}"
            ),
            Error::NotConverged { gradient_norm } => write!(
                f,
                "anchor is not a fixed point (gradient norm {gradient_norm:.3e})"
            ),
            Error::DimensionTooLarge { size, max } => {
                write!(f, "dense materialization of size {size} exceeds limit {max}")
            }
            Error::InvalidConfig(what) => write!(f, "invalid configuration: {what}"),
            Error::Io(what) => write!(f, "i/o error: {what}"),
        }
    }
}

impl std::error::Error for Error {}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Io(e.to_string())
    }
}
