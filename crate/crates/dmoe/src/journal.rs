//! Line-delimited on-disk journal for the event store.
//!
//! `events.jsonl` holds one [`EventRecord`] per line and `deletions.jsonl`
//! one `{"deleted_id": N}` per line. Opening a directory replays both.

use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use dmoe_core::event_log::{EventId, EventRecord, EventStore, Journal, StoreError};
use serde::{Deserialize, Serialize};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const DELETIONS_FILE: &str = "deletions.jsonl";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeletionRecord {
    pub deleted_id: EventId,
}

#[derive(Debug, thiserror::Error)]
pub enum JournalError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Store(#[from] StoreError),
}

pub struct FileJournal {
    events: BufWriter<File>,
    deletions: BufWriter<File>,
}

impl FileJournal {
    pub fn create(dir: &Path) -> Result<Self, JournalError> {
        fs::create_dir_all(dir).map_err(|source| JournalError::Io {
            path: dir.into(),
            source,
        })?;
        let open = |name: &str| {
            let path = dir.join(name);
            OpenOptions::new()
                .create(true)
                .append(true)
                .open(&path)
                .map(BufWriter::new)
                .map_err(|source| JournalError::Io { path, source })
        };
        Ok(Self {
            events: open(EVENTS_FILE)?,
            deletions: open(DELETIONS_FILE)?,
        })
    }

    fn write_line<T: Serialize>(out: &mut BufWriter<File>, value: &T) -> Result<(), String> {
        let line = serde_json::to_string(value).map_err(|e| e.to_string())?;
        writeln!(out, "{line}")
            .and_then(|_| out.flush())
            .map_err(|e| e.to_string())
    }
}

impl Journal for FileJournal {
    fn appended(&mut self, record: &EventRecord) -> Result<(), String> {
        Self::write_line(&mut self.events, record)
    }

    fn deleted(&mut self, id: EventId) -> Result<(), String> {
        Self::write_line(&mut self.deletions, &DeletionRecord { deleted_id: id })
    }
}

fn read_lines<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>, JournalError> {
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(source) => {
            return Err(JournalError::Io {
                path: path.into(),
                source,
            })
        }
    };
    let mut out = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|source| JournalError::Io {
            path: path.into(),
            source,
        })?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| JournalError::Parse {
            path: path.into(),
            line: i + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

/// Replays a journal directory (missing files mean an empty log) and
/// returns a store that keeps journaling into the same directory.
pub fn open_store(dir: &Path) -> Result<EventStore, JournalError> {
    let appends: Vec<EventRecord> = read_lines(&dir.join(EVENTS_FILE))?;
    let deletions: Vec<DeletionRecord> = read_lines(&dir.join(DELETIONS_FILE))?;
    let journal = FileJournal::create(dir)?;
    Ok(EventStore::restore(
        appends,
        deletions.into_iter().map(|d| d.deleted_id),
        Box::new(journal),
    )?)
}

/// Appends gap-report lines to a plain text log.
pub fn append_lines(path: &Path, lines: &[String]) -> Result<(), JournalError> {
    if lines.is_empty() {
        return Ok(());
    }
    let io = |source| JournalError::Io {
        path: path.into(),
        source,
    };
    let mut f = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
    for line in lines {
        writeln!(f, "{line}").map_err(io)?;
    }
    Ok(())
}
