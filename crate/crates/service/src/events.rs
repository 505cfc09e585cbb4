//! Append-only per-session event logs.
//!
//! Each session owns one `<id>.events.jsonl` file. Every line is a complete
//! JSON record; a trailing fragment without a newline is what a crash in the
//! middle of a write leaves behind, and is dropped on recovery.

use std::fs::{File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use valence_core::assessment::TrajectoryOutcome;

pub const LOG_SUFFIX: &str = ".events.jsonl";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum EventBody {
    Created {
        scenario: String,
        scenario_hash: String,
        seed: u64,
        gamma: f64,
        horizon: u32,
        reveal: bool,
    },
    Action {
        step: usize,
        action: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        idempotency_key: Option<String>,
    },
    Finished {
        outcome: TrajectoryOutcome,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub session: String,
    /// Strictly increasing within a session, starting at 0.
    pub seq: u64,
    /// UTC, RFC 3339.
    pub at: String,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}:{line}: {message}")]
    Corrupt {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

/// The complete records of a log and the byte length they span.
#[derive(Debug)]
pub struct LogContents {
    pub records: Vec<EventRecord>,
    pub valid_len: u64,
    /// Bytes past `valid_len`, a torn final write.
    pub torn: u64,
}

pub fn read_log(path: &Path) -> Result<LogContents, LogError> {
    let bytes = std::fs::read(path).map_err(|source| LogError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    let mut records = Vec::new();
    for (i, line) in bytes[..complete].split_inclusive(|&b| b == b'\n').enumerate() {
        let line = &line[..line.len() - 1];
        let record: EventRecord = serde_json::from_slice(line).map_err(|e| LogError::Corrupt {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        records.push(record);
    }
    Ok(LogContents {
        records,
        valid_len: complete as u64,
        torn: (bytes.len() - complete) as u64,
    })
}

/// Open handle on a session log.
#[derive(Debug)]
pub struct EventLog {
    path: PathBuf,
    file: File,
    durable: bool,
}

impl EventLog {
    /// Creates a new log; fails if one already exists.
    pub fn create(path: PathBuf, durable: bool) -> Result<Self, LogError> {
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(&path)
            .map_err(|source| LogError::Io {
                path: path.clone(),
                source,
            })?;
        Ok(EventLog { path, file, durable })
    }

    /// Reopens an existing log, cutting it back to `valid_len` bytes.
    pub fn reopen(path: PathBuf, valid_len: u64, durable: bool) -> Result<Self, LogError> {
        let io = |source| LogError::Io {
            path: path.clone(),
            source,
        };
        let file = OpenOptions::new().write(true).open(&path).map_err(io)?;
        if file.metadata().map_err(io)?.len() != valid_len {
            file.set_len(valid_len).map_err(io)?;
            file.sync_data().map_err(io)?;
        }
        drop(file);
        let file = OpenOptions::new().append(true).open(&path).map_err(io)?;
        Ok(EventLog { path, file, durable })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Writes all records with a single write, then flushes to disk.
    pub fn append(&mut self, records: &[EventRecord]) -> Result<(), LogError> {
        let mut buf = Vec::new();
        for r in records {
            serde_json::to_writer(&mut buf, r).expect("event records always serialise");
            buf.push(b'\n');
        }
        let io = |source| LogError::Io {
            path: self.path.clone(),
            source,
        };
        self.file.write_all(&buf).map_err(io)?;
        if self.durable {
            self.file.sync_data().map_err(io)?;
        }
        Ok(())
    }
}
