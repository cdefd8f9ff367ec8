use std::io;

/// Everything the std layer can fail with. Engine-level failures keep their
/// core error so callers can still classify them.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] weave_core::Error),
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("checksum mismatch at byte {offset}")]
    ChecksumMismatch { offset: u64 },
    #[error("not a snapshot file (bad magic)")]
    BadMagic,
    #[error("unsupported snapshot version {0}")]
    UnsupportedVersion(u16),
    #[error("corrupt file: {0}")]
    Corrupt(String),
    #[error("writer busy: timed out after {0} ms waiting for the write lock")]
    Busy(u64),
    #[error("config: {0}")]
    Config(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Coarse classes used for HTTP status codes and CLI exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Validation,
    NotFound,
    Conflict,
    Oracle,
    Busy,
    Internal,
}

impl Error {
    pub fn class(&self) -> ErrorClass {
        use weave_core::Error as E;
        match self {
            Error::Core(e) => match e {
                E::NotFound(_) | E::StrandNotFound(_) => ErrorClass::NotFound,
                E::DuplicateId(_) | E::StaleOldValue(_) | E::EmptyIndex | E::EmbedderMismatch { .. } => {
                    ErrorClass::Conflict
                }
                E::Oracle(_) => ErrorClass::Oracle,
                _ => ErrorClass::Validation,
            },
            Error::Config(_) => ErrorClass::Validation,
            Error::Busy(_) => ErrorClass::Busy,
            _ => ErrorClass::Internal,
        }
    }
}
