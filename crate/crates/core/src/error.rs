use thiserror::Error;

/// Errors raised across the crate.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state vector must have at least one component")]
    EmptyState,

    #[error("state component {index} is not finite ({value})")]
    NonFiniteState { index: usize, value: f64 },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("action {action} out of range for {n_actions} actions")]
    ActionOutOfRange { action: usize, n_actions: usize },

    #[error("invalid correlation matrix: {0}")]
    InvalidCorrelation(String),

    #[error("matrix factorization failed: {0}")]
    Factorization(String),

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("not enough data: {0}")]
    InsufficientData(String),

    #[error("invalid MDP: {0}")]
    InvalidMdp(String),

    #[error("value iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },

    #[error("state space is not a product of per-dimension grids: {0}")]
    NotProductSpace(String),

    #[error("no instantaneous dependence detected: beta is zero for every supplied reward")]
    NoInstantaneousDependence,

    #[error("action marginals identical: K is zero for every basis function")]
    IdenticalActionMarginals,

    #[error("reward certification failed: alpha = {alpha}, beta = {beta}")]
    CertificationFailed { alpha: f64, beta: f64 },

    #[error("csv: {0}")]
    Csv(String),
}

pub type Result<T> = std::result::Result<T, Error>;
