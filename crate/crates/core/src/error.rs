use thiserror::Error;

/// Errors raised by samplers, estimators and experiments.
#[derive(Debug, Error)]
pub enum Error {
    /// A model parameter (theta, k, tail epsilon, ...) is out of range.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// An argument lies outside the domain of a function.
    #[error("domain error: {0}")]
    Domain(String),
    /// A theorem hypothesis such as `b_1 + ... + b_k < 1` does not hold.
    #[error("hypothesis violated: {0}")]
    Hypothesis(String),
    /// A table or sampler was asked for more than it can hold.
    #[error("capacity exceeded: {0}")]
    Capacity(String),
    /// Rejection sampling could not find admissible draws.
    #[error("infeasible: {0}")]
    Infeasible(String),
    /// Caller misuse, e.g. an empty sample set.
    #[error("usage error: {0}")]
    Usage(String),
    /// A run-time invariant was broken by a sampled value.
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
