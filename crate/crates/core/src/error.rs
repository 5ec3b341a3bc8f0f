use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid shape for {what}: {reason}")]
    InvalidShape { what: &'static str, reason: String },

    #[error("dimension mismatch in {what}: expected {expected}, got {actual}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("missing side input: {0}")]
    MissingSideInput(&'static str),

    #[error("invalid config `{field}`: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("malformed sequence spec: {0}")]
    MalformedSpec(String),

    #[error("bad magic: expected \"G2FD\", found {found:?}")]
    BadMagic { found: [u8; 4] },

    #[error("bad version: expected 1, found {found}")]
    BadVersion { found: u32 },

    #[error("truncated file while reading {section}: expected {expected} bytes, got {actual}")]
    TruncatedFile {
        section: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("length mismatch: header implies {expected} bytes, file has {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("non-finite value in {section} at element {index}")]
    NonFinite { section: &'static str, index: usize },

    #[error("invalid header field `{field}`: {reason}")]
    BadHeaderField { field: &'static str, reason: String },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("internal invariant violated: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field,
            reason: reason.into(),
        }
    }

    /// Process exit code for the command-line front end: 1 for broken
    /// internal invariants, 2 for everything caused by user input.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Internal(_) => 1,
            _ => 2,
        }
    }
}
