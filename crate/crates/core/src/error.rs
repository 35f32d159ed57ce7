//! Crate-wide error type.

use std::fmt;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by the numeric kernels, the network engine and the
/// dataset loaders.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    /// A value that must be finite was NaN or infinite.
    /// `index` is the flat offset of the first offending entry.
    NonFinite { context: String, index: usize },
    /// Tensor/matrix shapes do not line up.
    ShapeMismatch {
        context: String,
        expected: String,
        actual: String,
    },
    /// A class label outside `[0, classes)`.
    LabelOutOfRange { label: usize, classes: usize },
    /// Argument outside its documented domain.
    InvalidArgument(String),
    /// Dataset file problems (bad magic, truncation, count mismatches,
    /// malformed CSV rows).
    Data(String),
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::NonFinite { context, index } => {
                write!(f, "non-finite value in {context} at flat index {index}")
            }
            Error::ShapeMismatch {
                context,
                expected,
                actual,
            } => write!(f, "shape mismatch in {context}: expected {expected}, got {actual}"),
            Error::LabelOutOfRange { label, classes } => {
                write!(f, "label {label} out of range for {classes} classes")
            }
            Error::InvalidArgument(msg) => write!(f, "invalid argument: {msg}"),
            Error::Data(msg) => write!(f, "data error: {msg}"),
        }
    }
}

impl std::error::Error for Error {}
