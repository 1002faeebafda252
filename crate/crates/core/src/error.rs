use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("file not found: {}", .0.display())]
    FileMissing(PathBuf),

    #[error("io failure on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed record {index} in {}: {reason}", path.display())]
    MalformedRecord {
        path: PathBuf,
        index: usize,
        reason: String,
    },

    #[error("point cloud is empty")]
    EmptyCloud,

    #[error("non-finite coordinate at point {0}")]
    NonFinite(usize),

    #[error("mesh has zero total surface area")]
    DegenerateMesh,

    #[error("cardinality mismatch: {left} vs {right} points")]
    CardinalityMismatch { left: usize, right: usize },

    #[error("exact solver limit is {limit} points but clouds have {n}, and no approximate fallback is enabled")]
    SolverInfeasible { n: usize, limit: usize },

    #[error("distance threshold must be positive, got {0}")]
    NonpositiveThreshold(f64),

    #[error("baseline must be positive, got {0}")]
    NonpositiveBaseline(f64),

    #[error("no samples to aggregate")]
    EmptyInput,

    #[error("sample {0} carries no category label")]
    MissingCategory(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("wrong input shape: expected {expected:?}, got {got:?}")]
    WrongInputShape { expected: Vec<usize>, got: Vec<usize> },

    #[error("missing pretrained weights: {0}")]
    MissingPretrainedWeights(String),

    #[error("width mismatch: expected {expected}, got {got}")]
    WidthMismatch { expected: usize, got: usize },

    #[error("resolution mismatch: model emits {model} points but ground truth for {record} has {gt}")]
    ResolutionMismatch {
        record: String,
        model: usize,
        gt: usize,
    },

    #[error("non-finite loss at step {step}; diagnostic snapshot: {snapshot:?}")]
    NonFiniteLoss {
        step: usize,
        snapshot: Option<PathBuf>,
    },

    #[error("checkpoint format mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("checkpoint was trained on backbone {expected} but backbone {found} is loaded")]
    BackboneMismatch { expected: String, found: String },

    #[error("corrupt archive {}: {reason}", path.display())]
    CorruptArchive { path: PathBuf, reason: String },

    #[error("record {record} references missing file {}", path.display())]
    MissingFile { record: String, path: PathBuf },

    #[error("unknown category: {0}")]
    UnknownCategory(String),

    #[error("duplicate sample id: {0}")]
    DuplicateId(String),

    #[error("unreadable image {}: {reason}", path.display())]
    UnreadableImage { path: PathBuf, reason: String },

    #[error("cloud has {have} points, {need} required and no mesh is available for resampling")]
    InsufficientPoints { have: usize, need: usize },

    #[error("unknown {kind} '{name}' (available: {available})")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        let path = path.into();
        if source.kind() == std::io::ErrorKind::NotFound {
            Error::FileMissing(path)
        } else {
            Error::Io { path, source }
        }
    }
}
