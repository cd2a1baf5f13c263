use thiserror::Error;

/// Errors raised by the numerical routines and the CLI plumbing.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite entry in {0}")]
    NonFinite(&'static str),

    #[error("matrix is not positive semi-definite (min eigenvalue {min_eig:e})")]
    NotPsd { min_eig: f64 },

    #[error("matrix is not positive definite (min eigenvalue {min_eig:e})")]
    NotPositiveDefinite { min_eig: f64 },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("model is not certified convex on the cone")]
    Uncertified,

    #[error("model is not superlinear on the cone: no finite search radius below {radius:e}")]
    NotSuperlinear { radius: f64 },

    #[error("invalid path: {0}")]
    InvalidPath(String),

    #[error("path is not nondecreasing: increment {index} has min eigenvalue {min_eig:e}")]
    NonMonotone { index: usize, min_eig: f64 },

    #[error("argument out of range: {0}")]
    OutOfRange(String),

    #[error("invalid measure: {0}")]
    InvalidMeasure(String),

    #[error("invalid cascade specification: {0}")]
    InvalidCascade(String),

    #[error("grid evaluation failed: {0}")]
    Grid(String),

    #[error("enumeration too large: {configs} configurations (limit {limit})")]
    EnumerationTooLarge { configs: usize, limit: usize },

    #[error("covariance is not positive semi-definite (min eigenvalue {min_eig:e})")]
    CovarianceNotPsd { min_eig: f64 },

    #[error("linear program failed: {0}")]
    Lp(String),

    #[error("optimizer failed: {0}")]
    Optimizer(String),

    #[error("infeasible perturbation: {0}")]
    Infeasible(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
