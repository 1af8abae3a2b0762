use thiserror::Error;

/// Errors raised anywhere in the demodulation pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("training diverged at epoch {epoch}, batch {batch}; last good checkpoint restored")]
    Diverged { epoch: usize, batch: usize },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("not a {expected} file (bad magic bytes)")]
    BadMagic { expected: &'static str },
    #[error("format version mismatch: file has version {found}, expected {expected}")]
    VersionMismatch { found: u32, expected: u32 },
    #[error("scalar type mismatch: file stores {found}-byte floats, expected {expected}-byte")]
    ScalarMismatch { found: u8, expected: u8 },
    #[error("checksum failure: stored {stored:#010x}, computed {computed:#010x}")]
    Checksum { stored: u32, computed: u32 },
    #[error("truncated file: {0}")]
    Truncated(String),
    #[error("malformed file: {0}")]
    Malformed(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn dim(context: &'static str, expected: usize, actual: usize) -> Self {
        Error::Dimension {
            context,
            expected,
            actual,
        }
    }

    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidInput(_) | Error::Dimension { .. } => 2,
            Error::Numerical(_) | Error::Diverged { .. } => 3,
            Error::Io(_)
            | Error::BadMagic { .. }
            | Error::VersionMismatch { .. }
            | Error::ScalarMismatch { .. }
            | Error::Checksum { .. }
            | Error::Truncated(_)
            | Error::Malformed(_) => 4,
        }
    }
}
