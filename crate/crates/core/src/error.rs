use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Invalid configuration, hyper-parameter or argument.
    #[error("configuration error: {0}")]
    Config(String),

    /// Malformed or out-of-range input data (manifests, prediction files).
    #[error("ingestion error: {0}")]
    Ingest(String),

    /// A tone group outside the transformer's domain.
    #[error("domain error: {0}")]
    Domain(String),

    /// A metric or statistic requested on input that cannot define it.
    #[error("undefined input: {0}")]
    UndefinedInput(String),

    /// Non-finite values in activations, losses or updates.
    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("internal error: {0}")]
    Internal(String),

    #[error("refusing to overwrite existing output {0} (use force)")]
    Exists(PathBuf),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by the caller's inputs rather than by a run.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Config(_)
                | Error::Ingest(_)
                | Error::Domain(_)
                | Error::UndefinedInput(_)
                | Error::Exists(_)
        )
    }
}
