use std::path::{Path, PathBuf};

use romkit_core::ErrorKind;

pub type RomResult<T> = Result<T, RomError>;

#[derive(Debug, thiserror::Error)]
pub enum RomError {
    #[error(transparent)]
    Core(#[from] romkit_core::Error),
    /// A core validation failure while loading `origin`.
    #[error("{origin}: {source}")]
    Data {
        origin: String,
        source: romkit_core::Error,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("{origin}: {reason}")]
    Format { origin: String, reason: String },
    #[error("{0}")]
    Usage(String),
}

impl RomError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        RomError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn format(origin: impl Into<String>, reason: impl Into<String>) -> Self {
        RomError::Format {
            origin: origin.into(),
            reason: reason.into(),
        }
    }

    pub fn data(origin: impl Into<String>, source: romkit_core::Error) -> Self {
        RomError::Data {
            origin: origin.into(),
            source,
        }
    }

    /// Process exit code: 2 validation, 3 numeric failure, 4 I/O or unreadable file.
    pub fn exit_code(&self) -> i32 {
        match self {
            RomError::Core(e) | RomError::Data { source: e, .. } => match e.kind() {
                ErrorKind::Validation => 2,
                ErrorKind::Numeric => 3,
            },
            RomError::Usage(_) => 2,
            RomError::Io { .. } | RomError::Format { .. } => 4,
        }
    }
}
