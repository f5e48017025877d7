use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Problems with dataset files. Every variant names the byte offset where
/// parsing stopped.
#[derive(Debug, Error)]
pub enum DataError {
    #[error("{path}: malformed header at byte {offset}: {reason}")]
    MalformedHeader {
        path: PathBuf,
        offset: u64,
        reason: String,
    },
    #[error("{path}: truncated at byte {offset}: expected {expected} more bytes, found {found}")]
    Truncated {
        path: PathBuf,
        offset: u64,
        expected: u64,
        found: u64,
    },
    #[error("{path}: label {label} out of range at byte {offset}")]
    LabelOutOfRange { path: PathBuf, offset: u64, label: u8 },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("mixed image dimensions: {0}")]
    MixedDimensions(String),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid temporal configuration: {0}")]
    InvalidTemporalConfig(String),
    #[error("row length {found} does not match model temporal interval {expected}")]
    LengthMismatch { expected: usize, found: usize },
    #[error("frame is {found_h}x{found_w}, model expects {expected}x{expected}")]
    FrameSize {
        expected: usize,
        found_h: usize,
        found_w: usize,
    },
    #[error("weights file {path}: {reason}")]
    Weights { path: PathBuf, reason: String },
    #[error("shape mismatch in tensor {tensor}: {reason}")]
    ShapeMismatch { tensor: String, reason: String },
    #[error("degenerate response: total rate of neuron {neuron} is zero")]
    DegenerateResponse { neuron: usize },
    #[error("combine: {0}")]
    Combine(String),
    #[error("image {index}: {source}")]
    AtImage {
        index: usize,
        #[source]
        source: Box<Error>,
    },
    #[error("feature file: {0}")]
    FeatureFile(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
