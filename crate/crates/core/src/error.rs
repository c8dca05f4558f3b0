use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// Corpus or checkpoint file is malformed. `id` names the offending
    /// utterance or parameter array when one can be identified.
    #[error("format error in {id}: {message}")]
    Format { id: String, message: String },

    #[error("numeric error: {0}")]
    Numeric(String),

    /// The label sequence cannot be aligned to the available frames.
    #[error("infeasible CTC alignment: {frames} frames, {required} required")]
    InfeasibleAlignment { frames: usize, required: usize },

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid_input(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn invalid_config(msg: impl Into<String>) -> Self {
        Error::InvalidConfig(msg.into())
    }

    pub(crate) fn format(id: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            id: id.into(),
            message: msg.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
