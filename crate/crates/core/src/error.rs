//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("tensor '{tensor}' contains a non-finite value")]
    NonFinite { tensor: String },

    #[error("not an NTF file (byte offset {offset})")]
    NotNtf { offset: u64 },

    #[error("malformed NTF header at byte offset {offset}: {message}")]
    NtfHeader { offset: u64, message: String },

    #[error("payload length mismatch at byte offset {offset}: expected {expected} bytes, got {actual}")]
    PayloadLength {
        offset: u64,
        expected: u64,
        actual: u64,
    },

    #[error("duplicate tensor name '{name}' (header at byte offset {offset})")]
    DuplicateTensor { offset: u64, name: String },

    #[error("missing tensor '{name}'")]
    MissingTensor { name: String },

    #[error("tensor '{tensor}': {message}")]
    TensorShape { tensor: String, message: String },

    #[error("incomparable histograms: bin edges differ")]
    IncomparableHistograms,

    #[error("length mismatch in {context}: {len_a} vs {len_b}")]
    LengthMismatch {
        context: String,
        len_a: usize,
        len_b: usize,
    },

    #[error("no paired layers to compare")]
    NoPairedLayers,

    #[error("prediction failed for batch {batch}: {message}")]
    PredictionFailed { batch: usize, message: String },

    #[error("PGM error: {message}")]
    Pgm { message: String },

    #[error("class {class} has {count} samples, fewer than {k} folds")]
    ClassTooSmall {
        class: usize,
        count: usize,
        k: usize,
    },

    #[error("label {label} out of range for {class_count} classes")]
    LabelOutOfRange { label: usize, class_count: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("{0}")]
    InvalidArgument(String),
}

impl Error {
    pub fn invalid(message: impl Into<String>) -> Self {
        Error::InvalidArgument(message.into())
    }
}
