use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty training data")]
    EmptyTrainingData,

    #[error("seed dictionary empty")]
    SeedDictionaryEmpty,

    #[error("seed word {0:?} missing from embedding table")]
    MissingSeedWord(String),

    #[error("conflicting special tokens: {0}")]
    ConflictingSpecials(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("vocabulary mismatch: {0}")]
    VocabMismatch(String),

    #[error("adapters already inserted")]
    AdaptersPresent,

    #[error("token id {id} out of range for vocabulary of size {vocab_size}")]
    TokenOutOfRange { id: u32, vocab_size: usize },

    #[error("position {pos} exceeds max_len {max_len}")]
    SequenceTooLong { pos: usize, max_len: usize },

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    #[error("shape mismatch for {name}: expected {expected:?}, got {got:?}")]
    ShapeMismatch {
        name: String,
        expected: Vec<usize>,
        got: Vec<usize>,
    },

    #[error("unknown or frozen tensor {0:?}")]
    UnknownTensor(String),

    #[error("empty validation set")]
    EmptyValidationSet,

    #[error("trial budget must be positive")]
    ZeroTrialBudget,

    #[error("line count mismatch: {hyp} hypotheses vs {refs} references")]
    LengthMismatch { hyp: usize, refs: usize },

    #[error("vocabulary drift: checkpoint {expected}, config {got}")]
    VocabularyDrift { expected: String, got: String },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }
}
