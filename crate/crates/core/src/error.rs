use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::ids::UserId;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Record {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("user {user} is not trainable: {mapped} mapped rated item(s), at least 2 required")]
    UserNotTrainable { user: UserId, mapped: usize },

    #[error("training diverged at epoch {epoch} (non-finite loss); lower the learning rate")]
    Diverged { epoch: usize },

    #[error("empty feature map: no triple matched the requested predicates")]
    EmptyFeatureMap,

    #[error("empty profile: no trained features")]
    EmptyProfile,

    #[error("no cold-user candidates")]
    NoColdCandidates,

    #[error(transparent)]
    Sparql(#[from] crate::kg::sparql::SparqlError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
