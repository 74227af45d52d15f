use std::path::PathBuf;

use gmp_core::GmpError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Error, Debug)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{path}: invalid config: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error("invalid {what}: {message}")]
    Invalid { what: &'static str, message: String },

    #[error("image {image}: {source}")]
    Image {
        image: String,
        #[source]
        source: GmpError,
    },

    #[error(
        "image {image}: descriptor dimension {actual} does not match encoder dimension {expected}"
    )]
    ImageDimension {
        image: String,
        expected: usize,
        actual: usize,
    },

    #[error(transparent)]
    Core(#[from] GmpError),

    #[error("verification failed: {}", .0.join(", "))]
    VerifyFailed(Vec<String>),
}

impl CliError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(what: &'static str, message: impl Into<String>) -> Self {
        CliError::Invalid {
            what,
            message: message.into(),
        }
    }
}
