use serde::{Deserialize, Serialize};
use std::io;
use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("invalid request: {0}")]
    Validation(String),

    #[error("no session with id `{0}`")]
    NotFound(String),

    #[error("stale stimulus: {message}")]
    StaleStimulus {
        message: String,
        expected_index: usize,
        expected_x: Option<f64>,
    },

    #[error("session `{0}` is closed")]
    Closed(String),

    #[error("session `{0}` has no trials to undo")]
    EmptyHistory(String),

    #[error("unknown export format `{0}`")]
    UnknownFormat(String),

    #[error("invalid session record: {0}")]
    InvalidRecord(String),

    #[error("corrupt log {path}, line {line}: {message}")]
    CorruptLog {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl ServiceError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        ServiceError::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable machine-readable code.
    pub fn code(&self) -> &'static str {
        match self {
            ServiceError::Validation(_) => "validation",
            ServiceError::NotFound(_) => "not_found",
            ServiceError::StaleStimulus { .. } => "stale_stimulus",
            ServiceError::Closed(_) => "session_closed",
            ServiceError::EmptyHistory(_) => "empty_history",
            ServiceError::UnknownFormat(_) => "unknown_format",
            ServiceError::InvalidRecord(_) => "invalid_record",
            ServiceError::CorruptLog { .. } => "corrupt_log",
            ServiceError::Io { .. } => "io",
        }
    }

    pub fn body(&self) -> ErrorBody {
        let detail = match self {
            ServiceError::StaleStimulus {
                expected_index,
                expected_x,
                ..
            } => serde_json::json!({ "expected_index": expected_index, "expected_x": expected_x }),
            ServiceError::NotFound(id) | ServiceError::Closed(id) | ServiceError::EmptyHistory(id) => {
                serde_json::json!({ "id": id })
            }
            ServiceError::CorruptLog { path, line, .. } => {
                serde_json::json!({ "path": path, "line": line })
            }
            _ => serde_json::Value::Null,
        };
        ErrorBody {
            code: self.code().to_string(),
            message: self.to_string(),
            detail,
        }
    }
}

impl From<langlie_core::Error> for ServiceError {
    fn from(e: langlie_core::Error) -> Self {
        ServiceError::Validation(e.to_string())
    }
}

/// Wire form of an error: `{code, message, detail}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub code: String,
    pub message: String,
    pub detail: serde_json::Value,
}

pub type Result<T> = std::result::Result<T, ServiceError>;
