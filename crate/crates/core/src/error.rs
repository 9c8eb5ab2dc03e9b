use std::io;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid annotations: {0}")]
    Annotation(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("embedding file: {0}")]
    Embedding(String),

    #[error("non-finite value in row {row}")]
    NonFinite { row: usize },

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: String, found: String },

    #[error("identity {0} has no attribute annotation")]
    MissingAnnotation(u32),

    #[error("sample {0} has no attribute labels (distractor or junk)")]
    Unlabeled(u64),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("index {index} out of range for {len} classes")]
    TargetOutOfRange { index: usize, len: usize },

    #[error("checkpoint: {0}")]
    Checkpoint(String),

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
