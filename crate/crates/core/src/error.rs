use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Error, Debug)]
pub enum Error {
    /// A caller broke an operation's precondition (wrong lengths, bad ranges).
    #[error("contract violation: {0}")]
    Contract(String),
    /// Invalid or mutually incompatible configuration values.
    #[error("configuration error: {0}")]
    Config(String),
    /// Malformed weight container or descriptor.
    #[error("weights error: {0}")]
    Weights(String),
    #[error("speech signal is silent (no frame above the activity threshold)")]
    SilentSpeech,
    #[error("reference signal is silent")]
    SilentReference,
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Wav {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },
    #[error("{context}: {source}")]
    Json {
        context: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures caused by the file system or file decoding.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Wav { .. })
    }
}

/// Checks that a slice has the expected length.
pub(crate) fn expect_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::contract(format!(
            "{what}: expected length {expected}, got {got}"
        )));
    }
    Ok(())
}
