use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    Dimension { expected: usize, actual: usize },

    #[error("invalid feature vector: {0}")]
    InvalidVector(String),

    #[error("query vector has zero norm")]
    ZeroVector,

    #[error("repository is empty")]
    EmptyRepository,

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("insufficient data: need at least {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("degenerate data: total variance is zero")]
    DegenerateData,

    #[error("format error{}: {message}", path_suffix(.path))]
    Format {
        path: Option<PathBuf>,
        message: String,
    },

    #[error("duplicate item id {0:?}")]
    DuplicateId(String),

    #[error("unknown item id {0:?}")]
    UnknownItem(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("i/o error on {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn path_suffix(path: &Option<PathBuf>) -> String {
    match path {
        Some(p) => format!(" in {}", p.display()),
        None => String::new(),
    }
}

impl Error {
    pub(crate) fn format(message: impl Into<String>) -> Self {
        Error::Format {
            path: None,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Attaches a file path to format errors that do not carry one yet.
    pub(crate) fn at_path(self, at: &std::path::Path) -> Self {
        match self {
            Error::Format { path: None, message } => Error::Format {
                path: Some(at.to_path_buf()),
                message,
            },
            other => other,
        }
    }
}
