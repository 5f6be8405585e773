//! Error type shared by every module of the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: expected {expected}, got {got}")]
    DimensionMismatch {
        op: &'static str,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("backward requires a scalar root, got shape {0:?}")]
    NonScalarRoot(Vec<usize>),

    #[error("backward already ran on this graph; call reset_grads first")]
    AlreadyBackpropagated,

    #[error("invalid parameters: {0}")]
    InvalidParams(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("expert failed on {failed} of {attempted} episodes (limit 10%)")]
    ExpertFailure { failed: usize, attempted: usize },

    #[error("non-finite loss at epoch {epoch}, step {step} (learning rate too high?)")]
    NonFiniteLoss { epoch: usize, step: usize },

    #[error("dataset layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn mismatch(op: &'static str, expected: impl ToString, got: impl ToString) -> Error {
    Error::DimensionMismatch {
        op,
        expected: expected.to_string(),
        got: got.to_string(),
    }
}
