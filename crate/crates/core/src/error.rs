use std::io;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed dataset line. `line` is 1-based; 0 means the text did not
    /// come from a file.
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    /// A value that parses but is outside the domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("model has not been trained on any example")]
    NotTrained,

    #[error("model format error: {0}")]
    Format(String),

    #[error("corrupt model file: {0}")]
    Corrupt(String),

    #[error("model type mismatch: expected {expected}, found {found}")]
    ModelType {
        expected: &'static str,
        found: &'static str,
    },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub(crate) fn at_line(self, line: usize) -> Self {
        match self {
            Error::Parse {
                column, message, ..
            } => Error::Parse {
                line,
                column,
                message,
            },
            Error::Domain(msg) => Error::Domain(format!("line {line}: {msg}")),
            other => other,
        }
    }
}
