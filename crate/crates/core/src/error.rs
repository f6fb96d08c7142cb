use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the ECS pipeline.
#[derive(Debug, Error)]
pub enum EcsError {
    #[error("I/O error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("non-numeric cell at row {row}, column {column}: {value:?}")]
    NonNumericCell {
        /// 1-based data row (the header, if any, is not counted).
        row: usize,
        column: String,
        value: String,
    },

    #[error("unknown column {0:?}")]
    UnknownColumn(String),

    #[error("column selection is invalid: {0}")]
    BadSelection(String),

    #[error("bad IDX magic number in {path}: expected {expected:#010x}, found {found:#010x}")]
    BadMagic {
        path: PathBuf,
        expected: u32,
        found: u32,
    },

    #[error("record count mismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },

    #[error("truncated payload in {path}: expected {expected} bytes, found {found}")]
    Truncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("invalid point-cloud spec: {0}")]
    InvalidSpec(String),

    #[error("vector length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("need at least 2 records, got {0}")]
    TooFewRecords(usize),

    #[error("invalid delta: {0}")]
    InvalidDelta(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("self-comparison of record {0} is not part of the method")]
    SelfComparison(usize),

    #[error("record id {id} out of range (n = {n})")]
    UnknownRecord { id: usize, n: usize },

    #[error("window {window} exceeds computed profile length {k_max}")]
    WindowTooLarge { window: usize, k_max: usize },

    #[error("invalid rule: {0}")]
    InvalidRule(String),

    #[error("invalid region: {0}")]
    InvalidRegion(String),

    #[error("gamma must be positive and finite, got {0}")]
    InvalidGamma(f64),

    #[error("unknown ECS set {0:?} (valid: EE, EU, UE, UU)")]
    UnknownSet(String),

    #[error("requirements file line {line}: {message}")]
    RequirementSyntax { line: usize, message: String },

    #[error("requirement {0:?} references a report that was not produced")]
    MissingReport(String),

    #[error("malformed run artifact: {0}")]
    BadArtifact(String),

    #[error("thread pool: {0}")]
    ThreadPool(String),
}

impl EcsError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        EcsError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = EcsError> = std::result::Result<T, E>;
