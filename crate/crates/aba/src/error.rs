use thiserror::Error;

/// Error type shared across the crate.
#[derive(Debug, Error)]
pub enum AbaError {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    ShapeMismatch {
        context: &'static str,
        expected: String,
        got: String,
    },

    #[error("invalid argument: {0}")]
    InvalidArg(String),

    #[error("non-finite value produced by {context}")]
    NonFinite { context: String },

    #[error("data format error: {0}")]
    DataFormat(String),

    #[error("config error for key `{key}`: {msg}")]
    Config { key: String, msg: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(String),
}

impl From<csv::Error> for AbaError {
    fn from(e: csv::Error) -> Self {
        AbaError::Csv(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, AbaError>;

impl AbaError {
    pub fn shape(context: &'static str, expected: impl Into<String>, got: impl Into<String>) -> Self {
        AbaError::ShapeMismatch {
            context,
            expected: expected.into(),
            got: got.into(),
        }
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        AbaError::InvalidArg(msg.into())
    }
}
