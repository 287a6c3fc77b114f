use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A Cholesky factorization kept failing up to and including `jitter`
    /// (relative to the signal variance).
    #[error("numerical failure in {context}: factorization failed with jitter {jitter:e}")]
    Numerical { context: String, jitter: f64 },

    #[error("objective evaluation failed: {0}")]
    Objective(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
