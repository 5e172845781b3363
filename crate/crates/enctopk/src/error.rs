use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("key error: {0}")]
    Key(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid ciphertext: {0}")]
    Ciphertext(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("ingest error: {0}")]
    Ingest(String),

    #[error("channel error: {0}")]
    Channel(String),

    #[error("protocol desync: expected tag {expected}, got {got}")]
    Desync { expected: u16, got: u16 },

    #[error("protocol abort: {0}")]
    Protocol(String),

    #[error("leakage violation: {0}")]
    Leakage(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Stable process exit code per error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Io(_) => 2,
            Error::Format(_) | Error::Ingest(_) => 3,
            Error::Key(_) => 4,
            Error::Channel(_) | Error::Desync { .. } | Error::Protocol(_) => 5,
            Error::Domain(_) | Error::Ciphertext(_) => 6,
            Error::Leakage(_) => 7,
            Error::Usage(_) => 8,
        }
    }
}
