use std::path::PathBuf;

use thiserror::Error;

use crate::raster::ColorSpace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("expected a {expected:?} image, got {found:?}")]
    WrongColorSpace { expected: ColorSpace, found: ColorSpace },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("unsupported image format in {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },

    #[error("failed to decode {path}: {reason}")]
    Decode { path: PathBuf, reason: String },

    #[error("malformed container at byte {offset}: {reason}")]
    Container { offset: usize, reason: String },

    #[error("arccos derivative is singular: |cos(theta_t)| = {cos:.9} is within the guard band")]
    DegenerateGradient { cos: f64 },

    #[error("config error in {field}: {reason}")]
    Config { field: String, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn dims(msg: impl Into<String>) -> Self {
        Error::DimensionMismatch(msg.into())
    }
}
