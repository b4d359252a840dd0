use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Every failure surfaced by the library.
///
/// [`Error::category`] gives a stable, machine-parsable tag used by the
/// command-line front end.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{primitive}: shape mismatch between {left:?} and {right:?}")]
    ShapeMismatch {
        primitive: &'static str,
        left: Vec<usize>,
        right: Vec<usize>,
    },

    #[error("invalid tensor: {0}")]
    InvalidTensor(String),

    #[error("backward requires a scalar output, node {node} has shape {shape:?}")]
    NonScalarOutput { node: usize, shape: Vec<usize> },

    #[error("class index {index} out of range for {classes} classes")]
    ClassOutOfRange { index: usize, classes: usize },

    #[error("invalid model config: {0}")]
    InvalidConfig(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("idx {path}: bad magic number {found:#010x}, expected {expected:#010x}")]
    IdxBadMagic {
        path: PathBuf,
        found: u32,
        expected: u32,
    },

    #[error("idx {path}: truncated, expected {expected} bytes but found {found}")]
    IdxTruncated {
        path: PathBuf,
        expected: usize,
        found: usize,
    },

    #[error("idx count mismatch: {images} images but {labels} labels")]
    IdxCountMismatch { images: usize, labels: usize },

    #[error("sample index {index} out of range for stream of {count}")]
    SampleOutOfRange { index: usize, count: usize },

    #[error("non-finite gradient at sample {sample}")]
    NonFiniteGradient { sample: usize },

    #[error("value {value} outside [0, 1]")]
    OutOfRange { value: f64 },

    #[error("estimator inconsistency: mutual information {mi} exceeds entropy {entropy}")]
    EstimatorInconsistency { mi: f64, entropy: f64 },

    #[error("benchmark normalization needs a LinearScale method")]
    MissingReferenceMethod,

    #[error("eigen-solve failed: {0}")]
    EigenSolve(String),

    #[error("checkpoint format: {0}")]
    Checkpoint(String),

    #[error("config: {0}")]
    Config(String),

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("png encoding: {0}")]
    Png(#[from] png::EncodingError),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short category tag, one per failure family.
    pub fn category(&self) -> &'static str {
        match self {
            Error::ShapeMismatch { .. } | Error::InvalidTensor(_) | Error::NonScalarOutput { .. } => {
                "shape"
            }
            Error::ClassOutOfRange { .. } => "class",
            Error::InvalidConfig(_) => "model-config",
            Error::InvalidParameter(_) | Error::SampleOutOfRange { .. } | Error::OutOfRange { .. } => {
                "parameter"
            }
            Error::EmptyDataset
            | Error::IdxBadMagic { .. }
            | Error::IdxTruncated { .. }
            | Error::IdxCountMismatch { .. } => "data",
            Error::NonFiniteGradient { .. } => "numeric",
            Error::EstimatorInconsistency { .. } | Error::MissingReferenceMethod => "estimator",
            Error::EigenSolve(_) => "eigen",
            Error::Checkpoint(_) => "checkpoint",
            Error::Config(_) => "config",
            Error::Manifest(_) => "manifest",
            Error::Io { .. } => "io",
            Error::Png(_) | Error::Json(_) => "encode",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
