//! Crate-wide error type.

use std::path::PathBuf;

use thiserror::Error;

/// Everything that can go wrong in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {context}: expected {expected}, got {got}")]
    Shape {
        context: String,
        expected: String,
        got: String,
    },

    #[error("non-finite value in {phase} at layer {layer}")]
    NonFinite { phase: String, layer: usize },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch} (batch {batch}): {detail}")]
    Diverged {
        epoch: usize,
        batch: usize,
        detail: String,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("model load error: {0}")]
    Load(#[from] LoadError),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

/// Reasons a model file can be rejected.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum LoadError {
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },
    #[error("stream truncated while reading {0}")]
    Truncated(&'static str),
    #[error("inconsistent dimensions: {0}")]
    Dimension(String),
    #[error("unknown tag {tag} for {what}")]
    UnknownTag { what: &'static str, tag: u8 },
    #[error("trailing bytes after model payload")]
    Trailing,
    #[error("model role mismatch: expected {expected}, found {found}")]
    Role { expected: String, found: String },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn shape(context: impl Into<String>, expected: impl ToString, got: impl ToString) -> Self {
        Error::Shape {
            context: context.into(),
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code used by the command-line front end.
    ///
    /// 2 for configuration problems, 3 for data/file problems, 4 for
    /// numerical failures and divergence.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::Contract(_) => 2,
            Error::Shape { .. } | Error::Data(_) | Error::Load(_) | Error::Io { .. } | Error::Csv(_) => 3,
            Error::NonFinite { .. } | Error::Numeric(_) | Error::Diverged { .. } => 4,
        }
    }
}
