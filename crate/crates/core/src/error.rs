use std::io;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("bad magic: expected \"EMB1\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("malformed header: {0}")]
    Header(String),

    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },

    #[error("header/payload dimension mismatch: header says dim={header_dim}, payload is sized for dim={payload_dim}")]
    PayloadDimMismatch {
        header_dim: usize,
        payload_dim: usize,
    },

    #[error("trailing bytes after payload: expected {expected} bytes, found {actual}")]
    TrailingBytes { expected: usize, actual: usize },

    #[error("invariant violated ({field}): {detail}")]
    Invariant { field: &'static str, detail: String },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimMismatch { expected: usize, actual: usize },

    #[error("{what} is empty")]
    Empty { what: &'static str },

    #[error("row {row} of {what} is the zero vector")]
    ZeroVector { what: &'static str, row: usize },

    #[error("class {class} has no samples")]
    EmptyClass { class: usize },

    #[error("label {label} out of range for {num_classes} classes")]
    LabelOutOfRange { label: usize, num_classes: usize },

    #[error("class {class} has {available} samples in the {split} split, {required} required")]
    InsufficientSamples {
        class: usize,
        split: String,
        available: usize,
        required: usize,
    },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("dataset has no logits (has_logits = false)")]
    MissingLogits,

    #[error("invalid configuration: {0}")]
    Config(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn invariant(field: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant {
            field,
            detail: detail.into(),
        }
    }

    /// True for failures caused by degenerate numbers rather than bad input shape.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::ZeroVector { .. } | Error::NonFinite(_))
    }
}
