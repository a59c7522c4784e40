//! Append-only behavior archive and the k-nearest-neighbor novelty score.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::behavior::{euclidean, BehaviorVector};
use crate::controller::Controller;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArchiveEntry {
    pub generation: usize,
    pub controller: Controller,
    pub behavior_vector: BehaviorVector,
    pub image_id: String,
    /// Rollout seed, enough to re-simulate the entry.
    pub seed: u64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Archive {
    entries: Vec<ArchiveEntry>,
}

impl Archive {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn entries(&self) -> &[ArchiveEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn mapping_id(&self) -> Option<&str> {
        self.entries.first().map(|e| e.behavior_vector.mapping_id.as_str())
    }

    /// Appends an entry; vectors from a different mapping are refused.
    pub fn push(&mut self, entry: ArchiveEntry) -> Result<()> {
        if let Some(first) = self.entries.first() {
            let (a, b) = (&first.behavior_vector, &entry.behavior_vector);
            if a.mapping_id != b.mapping_id {
                return Err(Error::contract(format!(
                    "archive holds `{}` vectors, got `{}`",
                    a.mapping_id, b.mapping_id
                )));
            }
            if a.values.len() != b.values.len() {
                return Err(Error::contract("behavior vector dimension changed"));
            }
        }
        self.entries.push(entry);
        Ok(())
    }

    pub fn vectors(&self) -> Vec<&[f64]> {
        self.entries.iter().map(|e| e.behavior_vector.values.as_slice()).collect()
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for e in &self.entries {
            write_line(&mut w, e).map_err(|err| Error::io(path, err))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_jsonl(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut archive = Archive::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: ArchiveEntry = serde_json::from_str(&line)
                .map_err(|e| Error::format("archive", format!("line {}: {e}", n + 1)))?;
            archive.push(entry)?;
        }
        Ok(archive)
    }
}

fn write_line<W: Write>(w: &mut W, e: &ArchiveEntry) -> std::io::Result<()> {
    serde_json::to_writer(&mut *w, e)?;
    w.write_all(b"\n")
}

/// Appends entries to a JSON-lines archive file as they are produced.
#[derive(Debug)]
pub struct ArchiveWriter {
    path: PathBuf,
    file: File,
}

impl ArchiveWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .write(true)
            .truncate(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(ArchiveWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn append(&mut self, entries: &[ArchiveEntry]) -> Result<()> {
        let mut buf = Vec::new();
        for e in entries {
            write_line(&mut buf, e).map_err(|err| Error::io(&self.path, err))?;
        }
        self.file.write_all(&buf).map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

/// Mean distance from `b` to its `k` nearest points (all of them if fewer
/// than `k`). The nearest distances are summed in ascending order. An empty
/// archive is maximally novel: `+∞`.
pub fn novelty(b: &[f64], archive: &[&[f64]], k: usize) -> f64 {
    if archive.is_empty() {
        return f64::INFINITY;
    }
    let mut d: Vec<f64> = archive.iter().map(|x| euclidean(b, x)).collect();
    let k = k.clamp(1, d.len());
    if k < d.len() {
        d.select_nth_unstable_by(k - 1, f64::total_cmp);
    }
    let nearest = &mut d[..k];
    nearest.sort_unstable_by(f64::total_cmp);
    nearest.iter().sum::<f64>() / k as f64
}
