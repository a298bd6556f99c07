use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by corpus ingestion, feature extraction, modeling and training.
#[derive(Error, Debug)]
pub enum Error {
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("validation error for sample '{sample_id}': {msg}")]
    Validation { sample_id: String, msg: String },

    #[error("empty dataset: {0}")]
    EmptyDataset(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    Shape {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },

    #[error("numeric error in {op}: {msg}")]
    Numeric { op: &'static str, msg: String },

    #[error("label {label} out of range for {num_classes} classes")]
    Label { label: usize, num_classes: usize },

    #[error("class count mismatch: {left} vs {right}")]
    ClassMismatch { left: usize, right: usize },

    #[error("feature layout mismatch vs checkpoint: expected {expected}, got {got}")]
    FeatureMismatch { expected: usize, got: usize },

    #[error("missing embedding for sentence: {0:?}")]
    MissingEmbedding(String),

    #[error("unsupported checkpoint format: {0}")]
    UnsupportedFormat(String),

    #[error("corrupted checkpoint: {0}")]
    Corrupted(String),

    #[error("training diverged (non-finite loss) at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
