use thiserror::Error;

#[derive(Debug, Error)]
pub enum FeecError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid sequence pattern: {0}")]
    InvalidPattern(String),
    #[error("unsupported space: {0}")]
    UnsupportedSpace(String),
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),
    #[error("singular matrix: numerical nullity {nullity}")]
    Singular { nullity: usize },
    #[error("linear solver failure: {0}")]
    Solver(String),
    #[error("eigensolver did not converge: {0}")]
    NonConvergence(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FeecError>;
