use thiserror::Error;

/// Errors raised by the geometry, solver and reconstruction layers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected k = {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("point (rho = {rho}, z = {z}) lies on the singular set")]
    OnSingularSet { rho: f64, z: f64 },

    #[error("invalid rod configuration: {0}")]
    InvalidRods(String),

    #[error("invalid seed configuration: {0}")]
    InvalidSeed(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("component index {index} out of range (have {count})")]
    BadComponent { index: usize, count: usize },

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error("solver failed: {reason}")]
    SolverFailure { reason: String },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
