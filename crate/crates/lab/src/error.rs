use std::path::PathBuf;

use peerflip_core::analysis::AnalysisError;
use peerflip_core::catalog::CatalogError;
use peerflip_core::consensus::ConsensusError;
use peerflip_core::flip::FlipError;
use peerflip_core::{AgentError, GraphError};

#[derive(Debug, thiserror::Error)]
pub enum LabError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Format { path: PathBuf, message: String },
    #[error("invalid config key `{key}`: {reason}")]
    Config { key: String, reason: String },
    #[error("network file {0} not found; run `peerflip gen-networks` first")]
    MissingNetwork(PathBuf),
    #[error("environment variable {0} is not set")]
    MissingCredential(String),
    #[error("cache entry {0} failed its checksum")]
    CacheCorrupt(PathBuf),
    #[error("manifest {0} already exists with a different configuration")]
    ManifestConflict(PathBuf),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Flip(#[from] FlipError),
    #[error(transparent)]
    Consensus(#[from] ConsensusError),
    #[error(transparent)]
    Analysis(#[from] AnalysisError),
}

impl LabError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        LabError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, message: impl ToString) -> Self {
        LabError::Format {
            path: path.into(),
            message: message.to_string(),
        }
    }

    pub fn config(key: impl Into<String>, reason: impl ToString) -> Self {
        LabError::Config {
            key: key.into(),
            reason: reason.to_string(),
        }
    }
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
