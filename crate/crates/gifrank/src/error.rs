//! Crate-wide error and result types.

use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("line {line}: malformed JSON record: {message}")]
    MalformedLine { line: usize, message: String },

    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },

    #[error("line {line}: sample {idx} has no categories but labels are required")]
    MissingLabels { line: usize, idx: u64 },

    #[error("line {line}: sample {idx}: {message}")]
    InvalidLabelSet { line: usize, idx: u64, message: String },

    #[error("duplicate sample idx {idx}")]
    DuplicateIdx { idx: u64 },

    #[error("dataset is not fully labeled")]
    Unlabeled,

    #[error("unknown category {0:?}")]
    UnknownCategory(String),

    #[error("category id {id} out of range (label count {count})")]
    CategoryOutOfRange { id: usize, count: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("non-finite value during {0}")]
    NonFinite(String),

    #[error("bad magic bytes in model file (expected {expected:?}, found {found:?})")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },

    #[error("unsupported {what} format version {found} (this build reads version {supported})")]
    UnsupportedVersion {
        what: &'static str,
        found: u32,
        supported: u32,
    },

    #[error("feature schema hash mismatch: model {model:#018x}, input {input:#018x}")]
    SchemaHashMismatch { model: u64, input: u64 },

    #[error("missing artifact {path}: run the `{stage}` stage first")]
    MissingArtifact { path: PathBuf, stage: String },

    #[error("stale artifact {path}: config hash {found:#018x} does not match current run {expected:#018x}")]
    StaleArtifact {
        path: PathBuf,
        found: u64,
        expected: u64,
    },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error("predictions error: {0}")]
    Predictions(String),

    #[error("artifact directory {0} is locked by another run (remove the `lock` file if stale)")]
    Locked(PathBuf),
}

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }

    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
