use thiserror::Error;

/// Errors shared by every stage of the pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("input shape mismatch: expected {expected} features, got {got}")]
    InputShape { expected: usize, got: usize },

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unsupported dimension {0}: grid extraction handles 2 or 3 features")]
    UnsupportedDimension(usize),

    #[error("unsupported model: {0}")]
    UnsupportedModel(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
        if expected == got {
            Ok(())
        } else {
            Err(Error::InputShape { expected, got })
        }
    }

    /// Process exit code: 1 usage/config, 2 data, 3 validation.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::UnsupportedDimension(_) | Error::UnsupportedModel(_) => 1,
            Error::Validation(_) => 3,
            _ => 2,
        }
    }
}
