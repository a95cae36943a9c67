use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite tensor")]
    NonFinite,

    #[error("empty score vector")]
    EmptyScores,

    #[error("shape mismatch: expected {expected}, got {actual}")]
    ShapeMismatch { expected: String, actual: String },

    #[error("singular transform (det = {det:e})")]
    SingularTransform { det: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid label {label} for {num_classes} classes")]
    InvalidLabel { label: usize, num_classes: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("bad magic")]
    BadMagic,

    #[error("unsupported version {0}")]
    UnsupportedVersion(u8),

    #[error("truncated file")]
    Truncated,

    #[error("checksum mismatch (stored {stored:08x}, computed {computed:08x})")]
    Checksum { stored: u32, computed: u32 },

    #[error("layer shapes do not chain: {0}")]
    ShapeChain(String),

    #[error("truncated record: {0} bytes is not a multiple of 3073")]
    TruncatedRecord(usize),

    #[error("bad label byte {label} in record {record}")]
    BadLabel { label: u8, record: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: io::Error,
    },
}

impl Error {
    /// Short machine-readable tag, used by the CLI as `error: <code>: <message>`.
    pub fn code(&self) -> &'static str {
        match self {
            Error::NonFinite => "non-finite",
            Error::EmptyScores => "empty-scores",
            Error::ShapeMismatch { .. } => "shape-mismatch",
            Error::SingularTransform { .. } => "singular-transform",
            Error::InvalidParameter(_) => "invalid-parameter",
            Error::InvalidLabel { .. } => "invalid-label",
            Error::EmptyDataset => "empty-dataset",
            Error::BadMagic => "bad-magic",
            Error::UnsupportedVersion(_) => "unsupported-version",
            Error::Truncated => "truncated",
            Error::Checksum { .. } => "checksum",
            Error::ShapeChain(_) => "shape-chain",
            Error::TruncatedRecord(_) => "truncated-record",
            Error::BadLabel { .. } => "bad-label",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
            Error::Context { source, .. } => source.code(),
        }
    }

    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// Wraps `self` with a location such as a file name.
    pub fn context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error under any [`Error::Context`] layers.
    pub fn root(&self) -> &Error {
        match self {
            Error::Context { source, .. } => source.root(),
            other => other,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
