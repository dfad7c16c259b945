use thiserror::Error;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor/video shape or dimensionality mismatch.
    #[error("shape mismatch: {0}")]
    Shape(String),
    /// Invalid argument or precondition violation.
    #[error("invalid argument: {0}")]
    Invalid(String),
    /// Dataset or on-disk data problem.
    #[error("data error: {0}")]
    Data(String),
    /// Checkpoint serialization/deserialization problem.
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;
