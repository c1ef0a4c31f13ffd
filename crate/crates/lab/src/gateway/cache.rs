use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use peerflip_core::TrialKey;

use super::LlmTranscript;
use crate::error::{LabError, Result};
use crate::fsutil::{sha256_hex, write_atomic};

/// One JSON document per (scenario, repetition), never overwritten.
#[derive(Debug, Clone)]
pub struct TranscriptCache {
    dir: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    scenario: String,
    repetition: u32,
    transcript: LlmTranscript,
    /// SHA-256 of the compact JSON of `transcript`.
    checksum: String,
}

fn transcript_checksum(t: &LlmTranscript) -> String {
    sha256_hex(&serde_json::to_vec(t).expect("transcripts serialize"))
}

pub fn cache_key_hash(key: &TrialKey) -> String {
    sha256_hex(format!("{}\n{}", key.scenario, key.repetition).as_bytes())
}

impl TranscriptCache {
    pub fn open(dir: impl Into<PathBuf>) -> Result<TranscriptCache> {
        let dir = dir.into();
        fs::create_dir_all(&dir).map_err(|e| LabError::io(&dir, e))?;
        Ok(TranscriptCache { dir })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, key: &TrialKey) -> PathBuf {
        self.dir.join(format!("{}.json", cache_key_hash(key)))
    }

    pub fn get(&self, key: &TrialKey) -> Result<Option<LlmTranscript>> {
        let path = self.path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(None),
            Err(e) => return Err(LabError::io(&path, e)),
        };
        let entry: Entry = serde_json::from_slice(&bytes).map_err(|_| LabError::CacheCorrupt(path.clone()))?;
        if entry.scenario != key.scenario
            || entry.repetition != key.repetition
            || entry.checksum != transcript_checksum(&entry.transcript)
        {
            return Err(LabError::CacheCorrupt(path));
        }
        Ok(Some(entry.transcript))
    }

    /// Store a completed transcript. An existing entry is kept as is.
    pub fn put(&self, key: &TrialKey, transcript: &LlmTranscript) -> Result<()> {
        let path = self.path(key);
        if path.exists() {
            return Ok(());
        }
        let entry = Entry {
            scenario: key.scenario.clone(),
            repetition: key.repetition,
            transcript: transcript.clone(),
            checksum: transcript_checksum(transcript),
        };
        let mut text = serde_json::to_string_pretty(&entry).map_err(|e| LabError::format(&path, e))?;
        text.push('\n');
        write_atomic(&path, text.as_bytes())
    }

    /// Number of stored transcripts.
    pub fn len(&self) -> Result<usize> {
        let entries = fs::read_dir(&self.dir).map_err(|e| LabError::io(&self.dir, e))?;
        let mut n = 0;
        for entry in entries {
            let entry = entry.map_err(|e| LabError::io(&self.dir, e))?;
            if entry.path().extension().is_some_and(|x| x == "json") {
                n += 1;
            }
        }
        Ok(n)
    }

    pub fn is_empty(&self) -> Result<bool> {
        self.len().map(|n| n == 0)
    }
}
