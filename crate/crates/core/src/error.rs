use thiserror::Error;

/// Errors raised by the analysis routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("numerical failure: {0}")]
    NumericalFailure(String),

    #[error("matrix is indefinite (minimum eigenvalue {min_eigenvalue:e})")]
    IndefiniteMatrix { min_eigenvalue: f64 },

    #[error("dimension mismatch: expected {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("wrong shape: expected {expected}, got {rows}x{cols}")]
    WrongShape {
        expected: &'static str,
        rows: usize,
        cols: usize,
    },

    #[error("value {value} out of range: {what}")]
    OutOfRange { what: &'static str, value: f64 },

    #[error("analytic description needs min(n, m) <= 2, got {n}x{m}")]
    WrongScenario { n: usize, m: usize },

    #[error("correlator is not a member of the quantum set (margin {margin:e})")]
    NotAMember { margin: f64 },

    #[error("exposedness test needs an extreme point")]
    NotExtremeInput,

    #[error("problem too large: {0}")]
    TooLarge(String),

    #[error("behavior is signaling: marginal deviation {deviation:e}")]
    SignalingInput { deviation: f64 },

    #[error("invariant violated: {0}")]
    InvariantViolation(String),

    #[error("unknown instance name `{0}`")]
    UnknownName(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T> = std::result::Result<T, Error>;
