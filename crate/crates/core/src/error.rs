use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input reduced to nothing (empty text, empty token sequence).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("validation error: {0}")]
    Validation(String),

    /// A required prior step (training, loading) has not happened.
    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("training diverged: {0}")]
    Training(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn precondition(msg: impl Into<String>) -> Self {
        Error::Precondition(msg.into())
    }
}
