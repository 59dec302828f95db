use thiserror::Error;

/// Errors surfaced by the estimators, oracles and the experiment runner.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("response {y} is outside the domain of the {family} loss")]
    InvalidResponse { family: &'static str, y: f64 },

    #[error("non-finite input: {0}")]
    NonFinite(&'static str),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("operation requires a {expected} regularizer, got {got}")]
    WrongRegularizer { expected: &'static str, got: &'static str },

    #[error("matrix is not positive definite ({0})")]
    NotPositiveDefinite(&'static str),

    #[error("leave-one-out fit for observation {index} did not converge after {iterations} iterations")]
    LooNotConverged { index: usize, iterations: usize },

    #[error("fit for fold {fold} did not converge after {iterations} iterations")]
    FoldNotConverged { fold: usize, iterations: usize },

    #[error("full-data fit has not converged")]
    FitNotConverged,

    #[error("second derivative of the loss vanishes at observation {0}")]
    ZeroCurvature(usize),

    #[error("replicate {replicate}: {source}")]
    Replicate {
        replicate: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("config: {0}")]
    Config(String),

    #[error("i/o error at {path}: {message}")]
    Io { path: String, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        name,
        reason: reason.into(),
    }
}
