//! Error type shared across the toolkit.

use thiserror::Error;

/// Errors produced by toolkit operations.
#[derive(Debug, Error)]
pub enum Error {
    /// A precondition on an argument was violated (bad dims, negative
    /// parameter, mismatched shapes, ...).
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A computation produced numerically unusable output (non-finite
    /// values, large imaginary residue, diverging iterations).
    #[error("numeric error: {0}")]
    NumericError(String),

    /// The requested solve has no unique solution (rank-deficient system
    /// with zero regularization).
    #[error("ill-posed problem: {0}")]
    IllPosed(String),

    /// A serialized artifact failed validation. `offset` is the byte
    /// position at which the problem was detected.
    #[error("format error at byte {offset}: {message}")]
    FormatError { offset: u64, message: String },

    /// An operation was called before the state it relies on was recorded.
    #[error("state error: {0}")]
    StateError(String),

    /// The training loss became non-finite.
    #[error("training aborted at iteration {iteration}: loss is not finite")]
    NonFiniteLoss { iteration: usize },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn numeric(msg: impl Into<String>) -> Self {
        Error::NumericError(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
