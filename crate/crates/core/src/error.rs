use thiserror::Error;

use crate::quotient::BranchId;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("point outside the state space: {0}")]
    Domain(String),

    #[error("branch {branch:?} has no preimage for ({z}, {w}): {reason}")]
    BranchDomain { branch: BranchId, z: f64, w: f64, reason: String },

    #[error("branch composition failed at step {step}: {source}")]
    Composition {
        step: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("root finding failed (best residual {residual:e}): {reason}")]
    RootFinding { residual: f64, reason: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no convergence after {iterations} iterations: {what}")]
    NoConvergence { what: String, iterations: usize },

    #[error("exhausted search: {0}")]
    SearchExhausted(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
