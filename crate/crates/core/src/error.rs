use std::path::PathBuf;

/// Errors produced anywhere in the imager pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("degenerate rosette pattern: n = m = {0}")]
    DegeneratePattern(u32),

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("malformed {kind} data: {reason}")]
    Format { kind: &'static str, reason: String },

    #[error("linear algebra failure: {0}")]
    LinAlg(String),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}

pub(crate) fn shape(expected: impl ToString, actual: impl ToString) -> Error {
    Error::ShapeMismatch { expected: expected.to_string(), actual: actual.to_string() }
}
