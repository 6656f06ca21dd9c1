use std::fmt;

/// Errors produced by the numerical and simulation routines in this crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    /// A value lies outside the admissible domain of a transform.
    #[error("{what}: value {value} outside admissible domain {admissible}")]
    Domain {
        what: &'static str,
        value: f64,
        admissible: Interval,
    },

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    /// More than one crossing of the detector and constellation curves.
    #[error("found {crossings} fixed-point crossings; a unique fixed point is required")]
    MultipleFixedPoints { crossings: usize },

    #[error("transfer curve is not monotone: {0}")]
    NonMonotone(String),

    #[error("code transfer curve covers rho up to {covered}, but {required} is required")]
    InsufficientCoverage { covered: f64, required: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }
}

/// Open or half-open real interval used in domain error messages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub lo: f64,
    pub hi: f64,
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.lo, self.hi)
    }
}
