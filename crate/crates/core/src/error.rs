use thiserror::Error;

/// Errors produced by the laboratory.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain: {0}")]
    InvalidDomain(String),

    #[error("grid too coarse: no interior node for h = {h}")]
    GridTooCoarse { h: f64 },

    #[error("ellipticity violated at ({x:.6}, {y:.6}): smallest eigenvalue {eigenvalue:.3e}")]
    EllipticityViolated { x: f64, y: f64, eigenvalue: f64 },

    #[error("invalid coefficient preset: {0}")]
    InvalidCoefficients(String),

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite value at node {index}")]
    NonFinite { index: usize },

    #[error("singular or ill-conditioned matrix (condition estimate {condition:.3e})")]
    SingularMatrix { condition: f64 },

    #[error("iterative solver did not converge after {iterations} iterations (relative residual {residual:.3e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("fixed-point iteration for n = {n} exceeded {iterations} iterations (last residual {residual:.3e})")]
    FixedPointNotConverged { n: u64, iterations: usize, residual: f64 },

    #[error("nonpositive value {value:.3e} at node {index}")]
    NonPositive { index: usize, value: f64 },

    #[error("uniqueness probe aborted after {completed} runs: {reason}")]
    ProbeAborted { completed: usize, reason: String },

    #[error("configuration error in `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config { field: field.into(), message: message.into() }
    }
}
