use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("row {row}: malformed spans field {field:?}: {reason}")]
    MalformedSpans {
        row: usize,
        field: String,
        reason: String,
    },

    #[error("row {row}: offset {offset} out of range for text of {len} characters")]
    OffsetOutOfRange {
        row: usize,
        offset: usize,
        len: usize,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("probability {0} outside the open interval (0, 1)")]
    Domain(f64),

    #[error("non-finite loss at epoch {epoch}, sequence {doc_id}")]
    Diverged { epoch: usize, doc_id: usize },

    #[error("mismatched document ids: {0}")]
    MismatchedDocs(String),

    #[error("self-training iteration {iteration}: {source}")]
    Iteration {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Innermost error, looking through iteration annotations.
    pub fn root(&self) -> &Error {
        match self {
            Error::Iteration { source, .. } => source.root(),
            other => other,
        }
    }
}
