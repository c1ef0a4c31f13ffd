//! Per-command run manifests. Written before any result, never rewritten
//! with a different configuration.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::{Config, Provider};
use crate::error::{LabError, Result};
use crate::fsutil::{read_bytes, sha256_hex, write_atomic};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentManifest {
    pub command: String,
    /// The effective configuration, overrides applied, as TOML.
    pub config: String,
    pub config_checksum: String,
    pub catalog_checksum: String,
    pub code_version: String,
    pub master_seed: u64,
    pub agent: String,
    pub provider: Option<String>,
    pub model: Option<String>,
    /// Seconds since the Unix epoch.
    pub created_at: u64,
    /// Paths relative to the output directory.
    pub outputs: Vec<String>,
}

impl ExperimentManifest {
    pub fn new(command: &str, config: &Config, catalog_checksum: &str, outputs: &[&str]) -> Self {
        let text = config.to_toml();
        let llm = matches!(config.agent.kind, crate::config::AgentKind::Llm);
        ExperimentManifest {
            command: command.into(),
            config_checksum: sha256_hex(text.as_bytes()),
            config: text,
            catalog_checksum: catalog_checksum.into(),
            code_version: env!("CARGO_PKG_VERSION").into(),
            master_seed: config.run.master_seed,
            agent: format!("{:?}", config.agent.kind).to_lowercase(),
            provider: llm.then(|| provider_label(config.llm.provider).into()),
            model: llm.then(|| config.llm.model.clone()),
            created_at: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map_or(0, |d| d.as_secs()),
            outputs: outputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn path(output_dir: &Path, command: &str) -> PathBuf {
        output_dir.join(format!("{command}.manifest.json"))
    }

    /// Write the manifest unless one already exists. An existing manifest
    /// must describe the same command, configuration and catalog; it is kept
    /// untouched and returned.
    pub fn write_or_verify(&self, output_dir: &Path) -> Result<ExperimentManifest> {
        let path = Self::path(output_dir, &self.command);
        if path.exists() {
            let existing = Self::read(&path)?;
            if existing.config_checksum != self.config_checksum
                || existing.catalog_checksum != self.catalog_checksum
                || existing.command != self.command
            {
                return Err(LabError::ManifestConflict(path));
            }
            return Ok(existing);
        }
        let mut text = serde_json::to_string_pretty(self).map_err(|e| LabError::format(&path, e))?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())?;
        Ok(self.clone())
    }

    pub fn read(path: &Path) -> Result<ExperimentManifest> {
        let bytes = read_bytes(path)?;
        serde_json::from_slice(&bytes).map_err(|e| LabError::format(path, e))
    }
}

pub fn provider_label(p: Provider) -> &'static str {
    match p {
        Provider::Openai => "openai",
        Provider::Gemini => "gemini",
        Provider::Simulated => "simulated",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn config(seed: u64) -> Config {
        Config::from_toml("", &[format!("run.master_seed={seed}"), "agent.kind=llm".into()]).unwrap()
    }

    #[test]
    fn existing_manifests_are_immutable() {
        let dir = tempfile::tempdir().unwrap();
        let m = ExperimentManifest::new("flip-grid", &config(1), "abc", &["records.csv"]);
        let first = m.write_or_verify(dir.path()).unwrap();
        let path = ExperimentManifest::path(dir.path(), "flip-grid");
        let bytes = std::fs::read(&path).unwrap();

        let again = ExperimentManifest {
            created_at: first.created_at + 100,
            ..m.clone()
        };
        assert_eq!(again.write_or_verify(dir.path()).unwrap(), first);
        assert_eq!(std::fs::read(&path).unwrap(), bytes);

        let other = ExperimentManifest::new("flip-grid", &config(2), "abc", &["records.csv"]);
        assert!(matches!(other.write_or_verify(dir.path()), Err(LabError::ManifestConflict(_))));
        let other = ExperimentManifest::new("flip-grid", &config(1), "def", &["records.csv"]);
        assert!(matches!(other.write_or_verify(dir.path()), Err(LabError::ManifestConflict(_))));
        assert_eq!(std::fs::read(&path).unwrap(), bytes);
    }

    #[test]
    fn records_provider_and_model_for_llm_runs() {
        let m = ExperimentManifest::new("consensus", &config(0), "abc", &[]);
        assert_eq!(m.provider.as_deref(), Some("gemini"));
        assert_eq!(m.model.as_deref(), Some("gemini-1.5-flash"));
        assert_eq!(m.agent, "llm");
        let plain = Config::default();
        let m = ExperimentManifest::new("consensus", &plain, "abc", &[]);
        assert_eq!(m.provider, None);
        assert!(m.config.contains("[llm]"));
    }
}
