//! The flip results table: one row per trial plus provenance columns.

use std::fs::OpenOptions;
use std::path::Path;

use serde::{Deserialize, Serialize};

use peerflip_core::{Answer, FlipRecord, Ordering, PromptSpec};

use crate::error::{LabError, Result};

/// Provenance stamped on every row.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub catalog_checksum: String,
    pub model: String,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Row {
    topic: String,
    layer: String,
    frame: String,
    initial: String,
    peer_count: u32,
    disagree_percent: u8,
    repetition: u32,
    ordering: String,
    final_answer: String,
    flipped: bool,
    failed: bool,
    catalog_checksum: String,
    model: String,
    master_seed: u64,
}

impl Row {
    fn new(r: &FlipRecord, p: &Provenance) -> Row {
        Row {
            topic: r.spec.topic.to_string(),
            layer: r.spec.layer.to_string(),
            frame: r.spec.frame.to_string(),
            initial: r.initial.to_string(),
            peer_count: r.peer_count,
            disagree_percent: r.disagree_percent,
            repetition: r.repetition,
            ordering: r.ordering.to_string(),
            final_answer: r.final_answer.map(|a| a.to_string()).unwrap_or_default(),
            flipped: r.flipped,
            failed: r.failed,
            catalog_checksum: p.catalog_checksum.clone(),
            model: p.model.clone(),
            master_seed: p.master_seed,
        }
    }

    fn record(&self) -> std::result::Result<(FlipRecord, Provenance), String> {
        let e = |e: &dyn std::fmt::Display| e.to_string();
        let spec = PromptSpec::new(
            self.topic.parse().map_err(|x| e(&x))?,
            self.layer.parse().map_err(|x| e(&x))?,
            self.frame.parse().map_err(|x| e(&x))?,
        );
        let initial: Answer = self.initial.parse().map_err(|x| e(&x))?;
        let ordering: Ordering = self.ordering.parse().map_err(|x| e(&x))?;
        let final_answer = if self.final_answer.is_empty() {
            None
        } else {
            Some(self.final_answer.parse::<Answer>().map_err(|x| e(&x))?)
        };
        if final_answer.is_none() != self.failed {
            return Err("failed rows carry no final answer, and only they".into());
        }
        if self.flipped != final_answer.is_some_and(|a| a != initial) {
            return Err("flipped disagrees with the answers".into());
        }
        let record = FlipRecord {
            spec,
            initial,
            peer_count: self.peer_count,
            disagree_percent: self.disagree_percent,
            repetition: self.repetition,
            ordering,
            final_answer,
            flipped: self.flipped,
            failed: self.failed,
        };
        let provenance = Provenance {
            catalog_checksum: self.catalog_checksum.clone(),
            model: self.model.clone(),
            master_seed: self.master_seed,
        };
        Ok((record, provenance))
    }
}

/// Appends rows, writing the header only when the file is new or empty.
pub struct RecordWriter {
    writer: csv::Writer<std::fs::File>,
    provenance: Provenance,
    path: std::path::PathBuf,
}

impl RecordWriter {
    pub fn append(path: &Path, provenance: Provenance) -> Result<RecordWriter> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| LabError::io(path, e))?;
        let fresh = file.metadata().map_err(|e| LabError::io(path, e))?.len() == 0;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(RecordWriter {
            writer,
            provenance,
            path: path.to_path_buf(),
        })
    }

    pub fn create(path: &Path, provenance: Provenance) -> Result<RecordWriter> {
        std::fs::File::create(path).map_err(|e| LabError::io(path, e))?;
        RecordWriter::append(path, provenance)
    }

    pub fn write(&mut self, record: &FlipRecord) -> Result<()> {
        self.writer
            .serialize(Row::new(record, &self.provenance))
            .map_err(|e| LabError::format(&self.path, e))
    }

    pub fn flush(&mut self) -> Result<()> {
        self.writer.flush().map_err(|e| LabError::io(&self.path, e))
    }
}

/// Read every row, checking internal consistency. Provenance is returned
/// from the first row; mixed provenance is an error.
pub fn read_records(path: &Path) -> Result<(Vec<FlipRecord>, Option<Provenance>)> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| LabError::format(path, e))?;
    let mut records = Vec::new();
    let mut provenance: Option<Provenance> = None;
    for (i, row) in reader.deserialize::<Row>().enumerate() {
        let row = row.map_err(|e| LabError::format(path, e))?;
        let (record, p) = row
            .record()
            .map_err(|e| LabError::format(path, format!("row {}: {e}", i + 1)))?;
        match &provenance {
            None => provenance = Some(p),
            Some(first) if *first != p => {
                return Err(LabError::format(
                    path,
                    format!("row {}: provenance differs from the first row", i + 1),
                ))
            }
            Some(_) => {}
        }
        records.push(record);
    }
    Ok((records, provenance))
}
