use std::path::PathBuf;

use thiserror::Error;

use crate::validation::ValidationReport;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// The behavioral header or one of its tests is malformed.
    #[error("spec error: {0}")]
    Spec(String),

    #[error("backend error: {0}")]
    Backend(#[from] BackendError),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("storage error at {path}: {message}")]
    Storage { path: PathBuf, message: String },

    #[error("no code found in backend response")]
    Extraction,

    #[error("worker error: {0}")]
    Worker(String),

    #[error("{0}")]
    Synthesis(SynthesisFailure),

    /// An installed function raised or misbehaved when called.
    #[error("call to `{function}` failed: {message}")]
    Call { function: String, message: String },

    #[error("parse error in {path}: {message}")]
    Parse { path: String, message: String },

    #[error("internal error: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn spec(msg: impl Into<String>) -> Self {
        Error::Spec(msg.into())
    }

    pub(crate) fn storage(path: impl Into<PathBuf>, err: impl std::fmt::Display) -> Self {
        Error::Storage {
            path: path.into(),
            message: err.to_string(),
        }
    }
}

/// Raised when calling a function whose synthesis ended in failure.
#[derive(Debug, Clone)]
pub struct SynthesisFailure {
    pub function: String,
    pub attempts: u32,
    pub message: String,
    pub last_report: Option<ValidationReport>,
}

impl std::fmt::Display for SynthesisFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "synthesis of `{}` failed after {} attempt(s): {}",
            self.function, self.attempts, self.message
        )
    }
}

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum BackendError {
    #[error("scripted backend has no entry matching the prompt")]
    NoMatch,
    #[error("scripted backend script is exhausted")]
    Exhausted,
    #[error("request failed with status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("retries exhausted after {attempts} attempt(s); last error: {last}")]
    RetriesExhausted { attempts: u32, last: Box<BackendError> },
    #[error("malformed response: {0}")]
    Malformed(String),
    #[error("backend returned an empty response")]
    Empty,
}
