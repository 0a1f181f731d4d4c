use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape: {0}")]
    InvalidShape(String),

    #[error("batch range {lo}..{hi} out of bounds for batch extent {len}")]
    Bounds { lo: usize, hi: usize, len: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid batch: {0}")]
    InvalidBatch(String),

    /// A network description whose layer shapes do not chain. `from`/`to`
    /// are 1-based positions in the description.
    #[error("invalid network spec: layer {from} -> layer {to}: {detail}")]
    ChainBreak {
        from: usize,
        to: usize,
        detail: String,
    },

    #[error("invalid network spec: {0}")]
    InvalidSpec(String),

    #[error("invalid labels: {0}")]
    InvalidLabel(String),

    #[error("invalid data: {0}")]
    InvalidData(String),

    #[error("unsupported unit kind: {0}")]
    UnsupportedKind(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("truncated input: {0}")]
    Length(String),

    #[error("inconsistent input: {0}")]
    Consistency(String),

    #[error("dataset missing: {what} ({hint})")]
    DataMissing { what: String, hint: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

pub(crate) fn shape_err(msg: impl Into<String>) -> Error {
    Error::InvalidShape(msg.into())
}
