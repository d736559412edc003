use thiserror::Error;

/// Errors raised by the estimation, adjustment and simulation routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("operation not supported for {model}: {reason}")]
    UnsupportedVariant { model: &'static str, reason: String },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("singular design: {0}")]
    SingularDesign(String),

    #[error("assumption violated: {0}")]
    AssumptionViolation(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("third-derivative tensor is not symmetric (max deviation {0:e})")]
    AsymmetricTensor(f64),

    #[error("curvature matrix has a positive direction (eigenvalue {0:e}); improvement is unbounded")]
    IndefiniteCurvature(f64),

    #[error("adjustment system is singular after pinning: {0}")]
    SingularSystem(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, Error>;
