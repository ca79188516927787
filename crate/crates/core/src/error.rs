use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum ColfError {
    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid state: {0}")]
    InvalidState(String),

    #[error("unregistered id {id} in field '{field}'")]
    MissingId { field: String, id: u32 },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for ColfError {
    fn from(err: std::io::Error) -> Self {
        ColfError::Io(err.to_string())
    }
}

pub type Result<T> = std::result::Result<T, ColfError>;
