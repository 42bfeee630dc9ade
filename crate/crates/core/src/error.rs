//! Error type shared by every stage of the pipeline.

use std::io;

use thiserror::Error;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid UTF-8 in input at byte offset {offset}")]
    Decode { offset: u64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("vocab size below alphabet: requested {requested}, alphabet needs at least {minimum}")]
    VocabBelowAlphabet { requested: usize, minimum: usize },

    #[error("training exhausted: no mergeable pairs remain")]
    TrainingExhausted,

    #[error("training exhausted at {reached} active tokens (target {target}); maximum achievable size is {max_achievable}")]
    TargetUnreachable {
        target: usize,
        reached: usize,
        max_achievable: usize,
    },

    #[error("unknown token id {0}")]
    UnknownToken(u32),

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("non-dense event indices: position {position} holds index {found}")]
    NonDenseEvents { position: usize, found: usize },

    #[error("invalid model at event {index}: {reason}")]
    InvalidEvent { index: usize, reason: String },

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("mismatched configurations: {0}")]
    Mismatch(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error("malformed model file: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn event(index: usize, reason: impl Into<String>) -> Self {
        Error::InvalidEvent {
            index,
            reason: reason.into(),
        }
    }

    /// True for errors caused by reading or writing files rather than by
    /// their contents.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io(_))
    }
}
