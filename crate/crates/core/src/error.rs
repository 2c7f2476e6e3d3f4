use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed {kind} manifest at byte {offset}: {message}")]
    Manifest {
        kind: String,
        offset: usize,
        message: String,
    },

    #[error("unsupported manifest file `{0}` (expected package.json or bower.json)")]
    UnsupportedManifest(String),

    #[error("invalid library spec: {0}")]
    InvalidLibrary(String),

    #[error("git command failed in {repo}: {message}")]
    Git { repo: PathBuf, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("{path}:{line}: {message}")]
    Row {
        path: String,
        line: u64,
        message: String,
    },

    #[error("http error: {0}")]
    Http(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("stage `{stage}` failed for {library}: {source}")]
    Stage {
        stage: String,
        library: String,
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    /// True for problems with what the caller supplied (configuration,
    /// input files, arguments) rather than failures while processing.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            Error::Manifest { .. }
                | Error::UnsupportedManifest(_)
                | Error::InvalidLibrary(_)
                | Error::InvalidInput(_)
                | Error::Row { .. }
                | Error::Config(_)
        )
    }
}
