//! Error types shared across the crate.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum UqError {
    /// Invalid argument or input value (bad shape, out-of-range id, NaN, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Operation called on an object in the wrong state (e.g. unfitted model).
    #[error("state error: {0}")]
    State(String),

    /// Malformed data on the wire (JSONL logs, model files), with a line number
    /// when one is known.
    #[error("schema error at line {line}: {msg}")]
    Schema { line: usize, msg: String },

    /// Bad command-line usage or run configuration.
    #[error("usage error: {0}")]
    Usage(String),

    /// A self-check the artifact is contractually required to satisfy failed.
    #[error("invariant check failed: {0}")]
    Invariant(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Json(#[from] serde_json::Error),
}

impl UqError {
    /// Process exit code for the CLI: 1 usage, 2 data/schema, 3 invariant failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            UqError::Usage(_) => 1,
            UqError::Invariant(_) => 3,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, UqError>;

pub(crate) fn domain(msg: impl Into<String>) -> UqError {
    UqError::Domain(msg.into())
}
