use thiserror::Error;

/// Errors raised by table, model, and selection operations.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid cell: {0}")]
    InvalidCell(String),
    #[error("schema error: {0}")]
    Schema(String),
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },
    #[error("invalid argument: {0}")]
    Argument(String),
    #[error("illegal split: {0}")]
    IllegalSplit(String),
    #[error("meaningless split: {0}")]
    MeaninglessSplit(String),
    #[error("split conflict: {0}")]
    Conflict(String),
    #[error("degenerate model: {0}")]
    Degenerate(String),
    #[error("infinite deviance: fitted probability is zero in a cell with positive count")]
    InfiniteDeviance,
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}
