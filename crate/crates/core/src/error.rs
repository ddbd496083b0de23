use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid entity: {0:?} is empty after trimming")]
    InvalidEntity(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("template {template}: missing binding for placeholder {{{placeholder}}}")]
    Template {
        template: &'static str,
        placeholder: String,
    },

    #[error("gateway error: {message}")]
    Gateway {
        message: String,
        status: Option<u16>,
    },

    #[error("extraction failed for {doc_id}: {reason}")]
    Extraction { doc_id: String, reason: String },

    #[error("vector store: {0}")]
    Store(String),

    #[error("persistence error at {}: {reason}", path.display())]
    Persistence { path: PathBuf, reason: String },

    #[error("io error at {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn gateway(message: impl Into<String>) -> Self {
        Error::Gateway {
            message: message.into(),
            status: None,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn persistence(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Persistence {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// HTTP status carried by a gateway failure, if the server answered at all.
    pub fn status(&self) -> Option<u16> {
        match self {
            Error::Gateway { status, .. } => *status,
            _ => None,
        }
    }
}
