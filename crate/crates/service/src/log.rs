//! Append-only session log: one JSON object per line.

use langlie_core::{Family, Outcome};
use serde::{Deserialize, Serialize};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use crate::error::{Result, ServiceError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum LogEntry {
    Created {
        id: String,
        created_at: String,
        a: f64,
        b: f64,
        family: Family,
    },
    Recorded {
        index: usize,
        x: f64,
        y: Outcome,
        timestamp: Option<String>,
        note: Option<String>,
    },
    /// Logical removal of trial `index`, the last one at the time.
    Undone {
        index: usize,
        timestamp: String,
    },
    Closed {
        timestamp: String,
    },
}

/// Open handle on a session log.
#[derive(Debug)]
pub struct LogWriter {
    path: PathBuf,
    file: File,
}

impl LogWriter {
    /// Creates a new log whose first line is `first`; fails if the file exists.
    pub fn create(path: &Path, first: &LogEntry) -> Result<Self> {
        let file = OpenOptions::new()
            .append(true)
            .create_new(true)
            .open(path)
            .map_err(|e| ServiceError::io(path, e))?;
        let mut w = Self {
            path: path.to_path_buf(),
            file,
        };
        w.append(first)?;
        if let Some(dir) = path.parent() {
            sync_dir(dir)?;
        }
        Ok(w)
    }

    pub fn open(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .append(true)
            .open(path)
            .map_err(|e| ServiceError::io(path, e))?;
        Ok(Self {
            path: path.to_path_buf(),
            file,
        })
    }

    /// Writes one line and waits for it to reach the disk.
    pub fn append(&mut self, entry: &LogEntry) -> Result<()> {
        let mut line = serde_json::to_vec(entry).expect("log entry serialises");
        line.push(b'\n');
        self.file
            .write_all(&line)
            .and_then(|_| self.file.sync_data())
            .map_err(|e| ServiceError::io(&self.path, e))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}

fn sync_dir(dir: &Path) -> Result<()> {
    File::open(dir)
        .and_then(|d| d.sync_all())
        .map_err(|e| ServiceError::io(dir, e))
}

/// Entries of a log, in order. An incomplete or unparsable final line is
/// the trace of an interrupted append and is cut off the file; a bad line
/// anywhere else is corruption.
pub fn read_log(path: &Path) -> Result<Vec<LogEntry>> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| ServiceError::io(path, e))?;

    let mut entries = Vec::new();
    let mut offset = 0;
    let mut line_no = 0;
    while offset < bytes.len() {
        line_no += 1;
        let (line, next, complete) = match bytes[offset..].iter().position(|&c| c == b'\n') {
            Some(i) => (&bytes[offset..offset + i], offset + i + 1, true),
            None => (&bytes[offset..], bytes.len(), false),
        };
        let parsed = if complete {
            serde_json::from_slice::<LogEntry>(line).map_err(|e| e.to_string())
        } else {
            Err("incomplete line".to_string())
        };
        match parsed {
            Ok(entry) => entries.push(entry),
            Err(_) if next == bytes.len() => {
                tracing::warn!(path = %path.display(), line = line_no, "truncating torn log tail");
                truncate(path, offset as u64)?;
                break;
            }
            Err(message) => {
                return Err(ServiceError::CorruptLog {
                    path: path.to_path_buf(),
                    line: line_no,
                    message,
                })
            }
        }
        offset = next;
    }
    Ok(entries)
}

fn truncate(path: &Path, len: u64) -> Result<()> {
    OpenOptions::new()
        .write(true)
        .open(path)
        .and_then(|f| {
            f.set_len(len)?;
            f.sync_all()
        })
        .map_err(|e| ServiceError::io(path, e))
}
