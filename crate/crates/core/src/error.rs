use thiserror::Error;

/// Errors produced by the sensitivity toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("{what} is not symmetric (max asymmetry {asymmetry:e})")]
    Asymmetric { what: String, asymmetry: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("index out of range: {0}")]
    IndexOutOfRange(String),

    #[error("constraint Jacobian is rank deficient (smallest pivot {min_pivot:e})")]
    RankDeficient { min_pivot: f64 },

    #[error("R~ at stage {stage} is not invertible (smallest |eigenvalue| {min_abs_eig:e})")]
    NonInvertibleRtilde { stage: usize, min_abs_eig: f64 },

    #[error("R~ at stage {stage} is not positive definite (smallest eigenvalue {min_eig:e})")]
    NotPositiveDefinite { stage: usize, min_eig: f64 },

    #[error("second-order sufficient condition fails (reduced Hessian eigenvalue {gamma:e})")]
    SoscFailed { gamma: f64 },

    #[error("W at stage {stage} is not positive definite (smallest eigenvalue {min_eig:e})")]
    IndefiniteW { stage: usize, min_eig: f64 },

    #[error("KKT matrix is singular")]
    SingularKkt,

    #[error("Newton iteration diverged after {iterations} iterations (residual {residual:e})")]
    SolverDiverged { iterations: usize, residual: f64 },

    #[error("insufficient data for decay fit: {0}")]
    InsufficientData(String),

    #[error("multiplier recovery residual {0:e} exceeds tolerance")]
    MultiplierResidual(f64),

    #[error("assumption violated: {0}")]
    AssumptionFailed(String),

    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
