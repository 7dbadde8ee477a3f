//! Local annotation service: an append-only label log, the consensus rules
//! that turn it into ground truth, and the HTTP API the browser UI talks to.

pub mod server;
pub mod store;

use std::path::{Path, PathBuf};

pub use server::{router, serve, SharedStore};
pub use store::{Consensus, LabelStore, Pass, StoreConfig, SKIP_NEUTRAL};

pub type Result<T, E = LabelError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum LabelError {
    #[error("{0}")]
    BadRequest(String),

    #[error("{0}")]
    NotFound(String),

    #[error("{0}")]
    Conflict(String),

    #[error("label log is damaged: {0}")]
    Corrupt(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl LabelError {
    pub(crate) fn io(path: &Path, source: std::io::Error) -> Self {
        LabelError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
