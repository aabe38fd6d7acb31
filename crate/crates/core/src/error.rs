//! Error type shared across the crate.

use std::io;
use std::path::PathBuf;

/// Crate-wide error type.
///
/// Variants are grouped by failure class so callers (notably the CLI) can map
/// them onto stable exit codes without inspecting message strings.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Filesystem failure while reading or writing `path`.
    #[error("i/o failure on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A file exists but its content cannot be understood (bad JSON, truncated
    /// blob, unsupported format version).
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },

    /// Input data violates an invariant (dimension mismatch, non-finite
    /// sample, class too small for the requested fold count, ...).
    #[error("invalid data: {0}")]
    Data(String),

    /// A configuration or argument value is out of its documented range.
    #[error("invalid config: {0}")]
    Config(String),

    /// A numerical procedure failed to converge or produced non-finite
    /// intermediates (e.g. Cholesky repair exhausted its jitter ladder).
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }

    /// Process exit code for this error class: 1 usage, 2 i/o, 3 data
    /// invariant, 4 numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Io { .. } | Error::Format { .. } => 2,
            Error::Data(_) => 3,
            Error::Numerical(_) => 4,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
