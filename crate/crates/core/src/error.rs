use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("io error: {0}")]
    Stream(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    /// Input data violates a documented schema or invariant.
    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("missing required column `{0}`")]
    MissingColumn(String),

    #[error("vocabulary is empty after filtering ({terms_seen} distinct terms seen, min_count={min_count})")]
    EmptyVocabulary { terms_seen: usize, min_count: usize },

    #[error("class `{0}` has no training examples")]
    EmptyClass(String),

    #[error("class `{class}` has {count} members, fewer than k={k} folds")]
    ClassTooSmall { class: String, count: usize, k: usize },

    #[error("loss became non-finite at batch {batch} (epoch {epoch})")]
    NonFiniteLoss { epoch: usize, batch: usize },

    #[error("vocabulary hash mismatch: model expects {expected}, vectorizer has {found}")]
    VocabularyMismatch { expected: String, found: String },

    #[error("label `{0}` is not in the label set")]
    UnknownLabel(String),

    #[error("bridge protocol error: {0}")]
    Protocol(String),

    #[error("unsupported format `{0}`")]
    UnsupportedFormat(String),
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
}
