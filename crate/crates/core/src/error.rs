use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: expected {expected} values, got {got}")]
    Shape { expected: usize, got: usize },

    #[error("boundary node index {0} is not on the boundary")]
    NotOnBoundary(usize),

    #[error("linear solver failed: {0}")]
    LinearSolve(String),

    #[error("eigensolver did not converge after {iterations} iterations (residual {residual:e})")]
    EigenSolve { iterations: usize, residual: f64 },

    #[error("model violation: {0}")]
    Model(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("quadrature failed to converge: {0}")]
    Quadrature(String),

    #[error("not applicable: {0}")]
    NotApplicable(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("ensemble failed: {0}")]
    Ensemble(String),
}

pub type Result<T> = std::result::Result<T, Error>;
