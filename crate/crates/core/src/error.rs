use thiserror::Error;

/// Errors produced by the simulator library.
#[derive(Debug, Error)]
pub enum Error {
    /// Invalid parameter combination or configuration file contents.
    #[error("configuration error: {0}")]
    Config(String),

    /// Sequence/buffer lengths inconsistent with the requested operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// Non-finite values where finite samples are required.
    #[error("invalid data: {0}")]
    InvalidData(String),

    /// Malformed or truncated serialized artifact.
    #[error("format error: {0}")]
    Format(String),

    /// Serialized artifact written by an incompatible format revision.
    #[error("unsupported format version {found} (this build reads version {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },

    /// Training failed (diverging loss or unusable dataset).
    #[error("training error: {0}")]
    Training(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for CLI use: configuration problems, I/O problems
    /// and training divergence get distinct codes.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::InvalidData(_) => 2,
            Error::Io(_) => 3,
            Error::Training(_) => 4,
            Error::Dimension(_) | Error::Format(_) | Error::UnsupportedVersion { .. } => 5,
        }
    }
}
