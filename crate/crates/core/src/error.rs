use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {detail}")]
    ShapeMismatch { op: &'static str, detail: String },
    #[error("unsupported op `{0}`")]
    UnsupportedOp(String),
    #[error("non-finite value produced by {0}")]
    NonFinite(String),
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NotScalar(Vec<usize>),
    #[error("loss is not attached to an autodiff graph")]
    DetachedGraph,

    #[error("strides {strides:?} do not divide input size {height}x{width}")]
    IndivisibleSpatialDims { strides: Vec<usize>, height: usize, width: usize },
    #[error("bad magic: expected {expected:?}, found {found:?}")]
    BadMagic { expected: [u8; 4], found: [u8; 4] },
    #[error("truncated file: expected {expected} bytes, found {found}")]
    TruncatedFile { expected: usize, found: usize },
    #[error("dimension {0} out of range (must be in 1..=65536)")]
    DimOverflow(u64),
    #[error("unsupported precision tag {0}")]
    BadPrecision(u8),

    #[error("group count {groups} exceeds label count {labels}")]
    GroupOverflow { groups: usize, labels: usize },
    #[error("target value {0} is not binary")]
    NonBinaryTarget(f64),
    #[error("empty input")]
    EmptyInput,
    #[error("no positive labels")]
    NoPositives,
    #[error("iteration {it} outside schedule of {total} iterations")]
    OutOfRange { it: usize, total: usize },
    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGrad(String),
    #[error("training diverged at epoch {epoch}, iteration {iteration}: loss {loss}")]
    Diverged { epoch: usize, iteration: usize, loss: f64 },

    #[error("unknown label `{0}`")]
    UnknownLabel(String),
    #[error("missing image {0}")]
    MissingImage(PathBuf),
    #[error("`{0}` appears in both train and test splits")]
    DuplicateAcrossSplits(String),
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("empty dataset")]
    EmptyDataset,
    #[error("malformed input: {0}")]
    Malformed(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Image(#[from] image::ImageError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn shape(op: &'static str, detail: impl Into<String>) -> Self {
        Error::ShapeMismatch { op, detail: detail.into() }
    }
}
