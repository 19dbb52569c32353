//! Line-delimited JSON manifests (`.pool.jsonl`).
//!
//! Each line is a flat object `{"text", "label", "lang", "task"}`; line N is
//! vector row N. Retrieved-set exports append `src_row`, `query_index`,
//! `rank` and `distance`. Unknown keys are ignored on read, so an export can
//! be read back as a plain manifest.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::Instance;
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub text: String,
    pub label: i64,
    pub lang: String,
    pub task: String,
}

impl ManifestRecord {
    pub(crate) fn into_instance(self, id: usize) -> Instance {
        Instance {
            id,
            text: self.text,
            // out-of-range labels are caught by validation
            label: u8::try_from(self.label).unwrap_or(u8::MAX),
            language: self.lang,
            source_task: self.task,
        }
    }
}

impl From<&Instance> for ManifestRecord {
    fn from(i: &Instance) -> Self {
        Self {
            text: i.text.clone(),
            label: i.label as i64,
            lang: i.language.clone(),
            task: i.source_task.clone(),
        }
    }
}

/// A manifest record with retrieval provenance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievedRecord {
    pub text: String,
    pub label: i64,
    pub lang: String,
    pub task: String,
    pub src_row: usize,
    pub query_index: usize,
    pub rank: usize,
    pub distance: f64,
}

fn parse_error(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

/// Reads every record. Reported line numbers are 1-based.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestRecord>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| match e.kind() {
            std::io::ErrorKind::InvalidData => parse_error(lineno, "not valid UTF-8"),
            _ => Error::io(path, e),
        })?;
        let rec: ManifestRecord =
            serde_json::from_str(&line).map_err(|e| parse_error(lineno, e.to_string()))?;
        if rec.label != 0 && rec.label != 1 {
            return Err(parse_error(lineno, format!("label {} is not 0 or 1", rec.label)));
        }
        if !super::is_language_code(&rec.lang) {
            return Err(parse_error(lineno, format!("lang {:?} is not [a-z]{{2}}", rec.lang)));
        }
        if rec.text.is_empty() {
            return Err(parse_error(lineno, "empty text"));
        }
        out.push(rec);
    }
    Ok(out)
}

fn write_lines<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    for r in records {
        serde_json::to_writer(&mut w, r).map_err(|e| Error::io(path, e.into()))?;
        w.write_all(b"\n").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn write_manifest(path: &Path, records: &[ManifestRecord]) -> Result<()> {
    write_lines(path, records)
}

pub fn write_retrieved_manifest(path: &Path, records: &[RetrievedRecord]) -> Result<()> {
    write_lines(path, records)
}

pub fn read_retrieved_manifest(path: &Path) -> Result<Vec<RetrievedRecord>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| parse_error(i + 1, e.to_string())))
        .collect()
}
