use std::path::PathBuf;

use thiserror::Error;

/// Errors raised by corpus handling and the modelling pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: no usable lines")]
    EmptyCorpus(PathBuf),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("backend failure: {0}")]
    Backend(String),

    #[error(
        "generation stopped after {} prompts with {} of {target} sentences accepted",
        stats.prompts,
        stats.accepted
    )]
    BudgetExhausted {
        target: usize,
        partial: Vec<crate::corpus::Sentence>,
        stats: crate::pgen::GenerationStats,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// True when the failure originated in a generation or translation backend.
    pub fn is_backend(&self) -> bool {
        matches!(self, Error::Backend(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
