//! Append-only label journal. Every acknowledged label is one JSON line,
//! synced to disk before the call returns; the in-memory index is rebuilt
//! from the journal on open.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::HilError;
use crate::error::Error;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaviorClass {
    pub class_id: u32,
    pub display_name: String,
    /// First image labeled with this class; absent for seeded classes
    /// until they receive a label.
    pub exemplar: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelRecord {
    pub label_id: u64,
    pub query_id: u64,
    pub image_id: String,
    pub class_id: u32,
    pub labeler_id: String,
    /// Milliseconds since the Unix epoch.
    pub timestamp: u64,
}

/// Class picked for a label.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassChoice {
    Existing(u32),
    New(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
enum Event {
    Class {
        class: BehaviorClass,
    },
    Label {
        record: LabelRecord,
        /// Present when this label created its class; both land in one
        /// journal line, so class creation is atomic with the label.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        new_class: Option<BehaviorClass>,
    },
}

#[derive(Debug)]
pub struct LabelStore {
    path: PathBuf,
    file: File,
    classes: Vec<BehaviorClass>,
    history: Vec<LabelRecord>,
    /// Latest record per image, as an index into `history`.
    active: HashMap<String, usize>,
    by_query: HashMap<u64, usize>,
    /// Class created by a label, keyed by label id.
    created_by: HashMap<u64, u32>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis() as u64)
        .unwrap_or(0)
}

impl LabelStore {
    /// Opens (creating if needed) the journal at `path` and replays it. A
    /// torn final line from an interrupted write is ignored.
    pub fn open(path: &Path) -> Result<Self, HilError> {
        let file = OpenOptions::new()
            .create(true)
            .read(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        let mut store = LabelStore {
            path: path.to_path_buf(),
            file,
            classes: Vec::new(),
            history: Vec::new(),
            active: HashMap::new(),
            by_query: HashMap::new(),
            created_by: HashMap::new(),
        };
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
        for (n, line) in bytes[..complete].split(|&b| b == b'\n').enumerate() {
            if line.iter().all(u8::is_ascii_whitespace) {
                continue;
            }
            let ev: Event = serde_json::from_slice(line)
                .map_err(|e| Error::format("label journal", format!("line {}: {e}", n + 1)))?;
            store.apply(ev);
        }
        if complete < bytes.len() {
            // an interrupted write never reached its newline, so it was
            // never acknowledged; cut it off before appending again
            log::warn!("dropping torn journal tail in {}", path.display());
            store.file.set_len(complete as u64).map_err(|e| Error::io(path, e))?;
        }
        Ok(store)
    }

    fn apply(&mut self, ev: Event) {
        match ev {
            Event::Class { class } => self.classes.push(class),
            Event::Label { record, new_class } => {
                if let Some(c) = new_class {
                    self.created_by.insert(record.label_id, c.class_id);
                    self.classes.push(c);
                }
                let idx = self.history.len();
                self.active.insert(record.image_id.clone(), idx);
                self.by_query.insert(record.query_id, idx);
                if let Some(c) = self.classes.iter_mut().find(|c| c.class_id == record.class_id) {
                    c.exemplar.get_or_insert_with(|| record.image_id.clone());
                }
                self.history.push(record);
            }
        }
    }

    fn append(&mut self, ev: &Event) -> Result<(), HilError> {
        let mut line = serde_json::to_vec(ev).map_err(|e| Error::format("label journal", e))?;
        line.push(b'\n');
        self.file.write_all(&line).map_err(|e| Error::io(&self.path, e))?;
        self.file.sync_data().map_err(|e| Error::io(&self.path, e))?;
        Ok(())
    }

    pub fn classes(&self) -> &[BehaviorClass] {
        &self.classes
    }

    pub fn history(&self) -> &[LabelRecord] {
        &self.history
    }

    /// Latest label of every labeled image, in journal order.
    pub fn active_labels(&self) -> Vec<&LabelRecord> {
        let mut idx: Vec<usize> = self.active.values().copied().collect();
        idx.sort_unstable();
        idx.into_iter().map(|i| &self.history[i]).collect()
    }

    pub fn label_of(&self, image_id: &str) -> Option<&LabelRecord> {
        self.active.get(image_id).map(|&i| &self.history[i])
    }

    pub fn record_for_query(&self, query_id: u64) -> Option<&LabelRecord> {
        self.by_query.get(&query_id).map(|&i| &self.history[i])
    }

    pub fn max_query_id(&self) -> Option<u64> {
        self.by_query.keys().copied().max()
    }

    /// Active label count per class id.
    pub fn class_counts(&self) -> HashMap<u32, usize> {
        let mut counts = HashMap::new();
        for r in self.active_labels() {
            *counts.entry(r.class_id).or_insert(0) += 1;
        }
        counts
    }

    fn next_class_id(&self) -> u32 {
        self.classes.iter().map(|c| c.class_id + 1).max().unwrap_or(1)
    }

    fn class_by_name(&self, name: &str) -> Option<&BehaviorClass> {
        self.classes.iter().find(|c| c.display_name == name)
    }

    /// Adds a class without a label (configuration seeding). Existing
    /// names are returned unchanged.
    pub fn seed_class(&mut self, name: &str) -> Result<BehaviorClass, HilError> {
        let name = validate_name(name)?;
        if let Some(c) = self.class_by_name(&name) {
            return Ok(c.clone());
        }
        let class = BehaviorClass {
            class_id: self.next_class_id(),
            display_name: name,
            exemplar: None,
        };
        let ev = Event::Class { class: class.clone() };
        self.append(&ev)?;
        self.apply(ev);
        Ok(class)
    }

    /// Whether `choice` is the same request that produced `record`.
    pub fn same_submission(&self, record: &LabelRecord, choice: &ClassChoice) -> bool {
        match choice {
            ClassChoice::Existing(id) => *id == record.class_id,
            ClassChoice::New(name) => {
                self.created_by.get(&record.label_id) == Some(&record.class_id)
                    && self
                        .classes
                        .iter()
                        .any(|c| c.class_id == record.class_id && c.display_name == name.trim())
            }
        }
    }

    /// Durably records a label. A new class name creates the class in the
    /// same journal line.
    pub fn record(
        &mut self,
        query_id: u64,
        image_id: &str,
        choice: &ClassChoice,
        labeler_id: &str,
    ) -> Result<(LabelRecord, bool), HilError> {
        let label_id = self.history.len() as u64 + 1;
        let (class_id, new_class) = match choice {
            ClassChoice::Existing(id) => {
                if !self.classes.iter().any(|c| c.class_id == *id) {
                    return Err(HilError::NotFound(format!("class {id}")));
                }
                (*id, None)
            }
            ClassChoice::New(name) => {
                let name = validate_name(name)?;
                if self.class_by_name(&name).is_some() {
                    return Err(HilError::Conflict(format!("class {name:?} already exists")));
                }
                let id = self.next_class_id();
                let class = BehaviorClass {
                    class_id: id,
                    display_name: name,
                    exemplar: Some(image_id.to_string()),
                };
                (id, Some(class))
            }
        };
        let record = LabelRecord {
            label_id,
            query_id,
            image_id: image_id.to_string(),
            class_id,
            labeler_id: labeler_id.to_string(),
            timestamp: now_ms(),
        };
        let created = new_class.is_some();
        let ev = Event::Label {
            record: record.clone(),
            new_class,
        };
        self.append(&ev)?;
        self.apply(ev);
        Ok((record, created))
    }
}

fn validate_name(name: &str) -> Result<String, HilError> {
    let t = name.trim();
    if t.is_empty() || t.len() > 200 {
        return Err(HilError::BadRequest("class name must be 1 to 200 characters".into()));
    }
    Ok(t.to_string())
}
