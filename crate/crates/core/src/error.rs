use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error at {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed manifest: {0}")]
    Manifest(String),

    #[error("unsupported manifest version {0}")]
    UnsupportedVersion(u32),

    #[error("unknown dtype `{dtype}` for tensor `{name}`")]
    UnknownDtype { name: String, dtype: String },

    #[error("duplicate tensor name `{0}`")]
    DuplicateTensor(String),

    #[error("tensor `{0}` missing")]
    MissingTensor(String),

    #[error("tensor `{name}` has invalid shape {shape:?}")]
    InvalidShape { name: String, shape: Vec<usize> },

    #[error("tensor `{name}`: shape implies {expected} elements, got {actual}")]
    ElementCount {
        name: String,
        expected: usize,
        actual: usize,
    },

    #[error("tensor `{name}`: expected {expected} bytes on disk, found {actual}")]
    ByteLength {
        name: String,
        expected: u64,
        actual: u64,
    },

    #[error("tensor `{name}` holds a non-finite value at element {index}")]
    NonFinite { name: String, index: usize },

    #[error("tensor `{name}` has shape {actual:?}, expected {expected}")]
    ShapeMismatch {
        name: String,
        expected: String,
        actual: Vec<usize>,
    },

    #[error("metadata key `{0}` missing")]
    MissingMetadata(String),

    #[error("metadata key `{key}` has invalid value `{value}`")]
    InvalidMetadata { key: String, value: String },

    #[error("zero-norm embedding: {0}")]
    ZeroNorm(String),

    #[error("negative attention weight in `{name}` at element {index}")]
    NegativeAttention { name: String, index: usize },

    #[error("instruction attention has no query tokens")]
    EmptyQuery,

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("index {index} out of range for length {len}")]
    OutOfRange { index: usize, len: usize },

    #[error("token budget {budget} exceeds token count {total}")]
    BudgetTooLarge { budget: usize, total: usize },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid synthetic spec: {0}")]
    InvalidSynthSpec(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
