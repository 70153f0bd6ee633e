use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = MecError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum MecError {
    #[error("unknown verb sense `{0}`")]
    UnknownVerb(String),

    #[error("{path}: malformed JSON at byte {offset}: {message}")]
    Parse {
        path: PathBuf,
        offset: usize,
        message: String,
    },

    #[error("{file}: invalid `{field}` in video `{video_id}`: {message}")]
    Schema {
        file: String,
        field: String,
        video_id: String,
        message: String,
    },

    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("{path}: truncated tensor ({message})")]
    Truncation { path: PathBuf, message: String },

    #[error("{path}: non-finite value at flat index {index}")]
    Value { path: PathBuf, index: usize },

    #[error("inconsistent bundle `{video_id}`: {what} expected {expected}, found {found}")]
    Consistency {
        video_id: String,
        what: String,
        expected: String,
        found: String,
    },

    #[error("embedding row {row} has zero norm")]
    DegenerateEmbedding { row: usize },

    #[error("index out of range: {0}")]
    Index(String),

    #[error("entity group {group} is assigned an empty cluster {cluster}")]
    DegenerateCluster { group: usize, cluster: usize },

    #[error("role-slot universes differ: extra {extra:?}, missing {missing:?}")]
    Domain {
        extra: Vec<(usize, usize)>,
        missing: Vec<(usize, usize)>,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl MecError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        MecError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(
        file: impl Into<String>,
        field: impl Into<String>,
        video_id: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        MecError::Schema {
            file: file.into(),
            field: field.into(),
            video_id: video_id.into(),
            message: message.into(),
        }
    }

    /// Errors caused by the caller's inputs, files or configuration. Everything
    /// else indicates a broken internal invariant.
    pub fn is_input_error(&self) -> bool {
        !matches!(self, MecError::Index(_))
    }
}
