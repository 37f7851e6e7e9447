use thiserror::Error;

/// Errors raised by the solvers and their supporting data model.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("weights sum to {sum}, outside the renormalisation tolerance")]
    NotNormalized { sum: f64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("kernel matrix is not positive semidefinite (quadratic form {0})")]
    NotPositiveSemidefinite(f64),

    #[error("semi-dual decreased by {drop:e} at iteration {iteration} on an ascent method")]
    Divergence { iteration: usize, drop: f64 },

    #[error("reference solver stopped after {iterations} iterations at residual {residual:e}")]
    OracleNotConverged { iterations: usize, residual: f64 },

    #[error("integration blew up; last finite state at t = {last_t}")]
    BlowUp { last_t: f64 },

    #[error("instance file: {0}")]
    Format(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
