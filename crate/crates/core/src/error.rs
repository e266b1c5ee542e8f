use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("format error: {0}")]
    Format(String),
    #[error("length error: expected {expected} bytes, found {found}")]
    Length { expected: usize, found: usize },
    #[error("metadata error: {0}")]
    Metadata(String),
    #[error("incompatible format version {found} (this build reads {supported})")]
    Version { found: u32, supported: u32 },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("training error: {0}")]
    Training(String),
    #[error("rollout error: {0}")]
    Rollout(String),
    #[error("export error: {0}")]
    Export(String),
    #[error("composition error: {0}")]
    Composition(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
