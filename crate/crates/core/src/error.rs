use thiserror::Error;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad argument: index out of range, shape mismatch, unsupported combination.
    #[error("invalid parameter: {0}")]
    Parameter(String),
    /// An object was used in a state that does not allow the operation.
    #[error("invalid state: {0}")]
    State(String),
    /// Geometric or algebraic data disagree with each other.
    #[error("consistency check failed: {0}")]
    Consistency(String),
    /// Non-finite values or a degenerate numeric input.
    #[error("numeric error: {0}")]
    Numeric(String),
    /// A file did not satisfy the invariants of its format.
    #[error("verification failed: {0}")]
    Verification(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

macro_rules! param_err {
    ($($arg:tt)*) => { $crate::error::Error::Parameter(format!($($arg)*)) };
}
pub(crate) use param_err;
