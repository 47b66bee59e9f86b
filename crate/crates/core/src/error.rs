use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix `{what}` is numerically singular (condition estimate {condition:e})")]
    SingularMatrix { what: &'static str, condition: f64 },

    #[error("symmetric part of `{what}` is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositive { what: &'static str, min_eigenvalue: f64 },

    #[error("markov chain is not ergodic: {0}")]
    NotErgodic(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("non-positive value {value:e} at k = {k} inside the fit window")]
    NonPositive { k: f64, value: f64 },

    #[error("iterate left the finite range at step {step}{}", trajectory.map(|t| format!(" of trajectory {t}")).unwrap_or_default())]
    NonFinite { step: u64, trajectory: Option<usize> },

    #[error("no transient index found up to k = {limit}")]
    NotFound { limit: u64 },

    #[error("step-size series diverges: {0}")]
    Diverges(String),

    #[error("overflow: {0}")]
    Overflow(String),

    #[error("epoch budget exceeded: {needed} epochs required, cap is {cap}")]
    BudgetExceeded { needed: u64, cap: u64 },

    #[error("feature scaling violates the 1/4 block bound: {0}")]
    FeatureScale(String),
}

pub type Result<T> = std::result::Result<T, Error>;
