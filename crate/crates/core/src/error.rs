use std::path::PathBuf;

use thiserror::Error;

/// Errors surfaced by scenario ingestion, program construction, and I/O.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid session {id}: {reason}")]
    InvalidSession { id: u64, reason: String },

    #[error("invalid station config: {0}")]
    InvalidConfig(String),

    #[error("invalid generator params: {0}")]
    InvalidParams(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("no active sessions in solve window")]
    NoActiveSessions,

    #[error("unknown policy '{0}' (expected es, edf, mpc, or soc_mpc)")]
    UnknownPolicy(String),

    #[error("unsupported schema version {0}")]
    SchemaVersion(u32),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {reason}")]
    Parse { path: PathBuf, reason: String },

    #[error("missing column '{0}'")]
    MissingColumn(String),

    #[error("no valid session rows ({dropped} dropped)")]
    NoValidRows { dropped: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
