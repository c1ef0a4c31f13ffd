use std::path::Path;

use peerflip_core::catalog::BUILTIN_TSV;
use peerflip_core::Catalog;

use crate::error::{LabError, Result};
use crate::fsutil::{read_bytes, sha256_hex};

/// A validated catalog together with the SHA-256 of its source bytes.
#[derive(Debug, Clone)]
pub struct LoadedCatalog {
    pub catalog: Catalog,
    pub checksum: String,
    pub source: String,
}

impl LoadedCatalog {
    pub fn builtin() -> LoadedCatalog {
        LoadedCatalog {
            catalog: Catalog::builtin(),
            checksum: sha256_hex(BUILTIN_TSV.as_bytes()),
            source: "builtin".into(),
        }
    }

    pub fn from_file(path: &Path) -> Result<LoadedCatalog> {
        let bytes = read_bytes(path)?;
        let text = std::str::from_utf8(&bytes).map_err(|e| LabError::format(path, e))?;
        let catalog = Catalog::parse_tsv(text).map_err(|e| LabError::format(path, e))?;
        Ok(LoadedCatalog {
            catalog,
            checksum: sha256_hex(&bytes),
            source: path.display().to_string(),
        })
    }

    pub fn load(path: Option<&Path>) -> Result<LoadedCatalog> {
        path.map_or_else(|| Ok(LoadedCatalog::builtin()), LoadedCatalog::from_file)
    }
}
