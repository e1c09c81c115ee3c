use std::path::PathBuf;

/// Errors surfaced by every fallible operation in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("shape mismatch at {node}: {detail}")]
    ShapeMismatch { node: String, detail: String },

    #[error("tensor data length {len} does not match shape {shape:?}")]
    BadTensor { shape: Vec<usize>, len: usize },

    #[error("loss node {node} is not scalar (shape {shape:?})")]
    NonScalarLoss { node: usize, shape: Vec<usize> },

    #[error("unknown node id {0}")]
    UnknownNode(usize),

    #[error("parameter layouts differ")]
    LayoutMismatch,

    #[error("unknown parameter `{0}`")]
    UnknownParam(String),

    #[error("class id {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },

    #[error("invalid model spec: {0}")]
    InvalidModel(String),

    #[error("invalid task spec: {0}")]
    InvalidTask(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid metric input: {0}")]
    InvalidMetric(String),

    #[error("malformed dataset file: {0}")]
    BadDataset(String),

    #[error("cannot compare runs: {0}")]
    Incompatible(String),

    #[error("missing file {0}")]
    MissingFile(PathBuf),

    #[error("malformed csv {path}: {detail}")]
    BadCsv { path: PathBuf, detail: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
