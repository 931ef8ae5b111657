//! Append-only JSON-lines event logs, one directory per session.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use crate::error::ApiError;
use crate::session::{Event, Session};

pub const EVENT_LOG: &str = "events.jsonl";
pub const FRAMES_DIR: &str = "frames";

#[derive(Debug)]
pub struct EventLog {
    dir: PathBuf,
    file: File,
}

impl EventLog {
    pub fn create(dir: &Path) -> Result<Self, ApiError> {
        std::fs::create_dir_all(dir)?;
        let file = OpenOptions::new()
            .create_new(true)
            .append(true)
            .open(dir.join(EVENT_LOG))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            file,
        })
    }

    pub fn open(dir: &Path) -> Result<Self, ApiError> {
        let file = OpenOptions::new().append(true).open(dir.join(EVENT_LOG))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            file,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn frames_dir(&self) -> PathBuf {
        self.dir.join(FRAMES_DIR)
    }

    pub fn append(&mut self, event: &Event) -> Result<(), ApiError> {
        let mut line = serde_json::to_string(event).map_err(|e| ApiError::internal(e.to_string()))?;
        line.push('\n');
        self.file.write_all(line.as_bytes())?;
        self.file.flush()?;
        Ok(())
    }
}

/// Reads the events of a session directory. A truncated last line, as left
/// by a crash mid-write, is ignored.
pub fn read_events(dir: &Path) -> Result<Vec<Event>, ApiError> {
    let reader = BufReader::new(File::open(dir.join(EVENT_LOG))?);
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let mut events = Vec::with_capacity(lines.len());
    for (i, line) in lines.iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str(line) {
            Ok(e) => events.push(e),
            Err(_) if i + 1 == lines.len() => tracing::warn!(dir = %dir.display(), "ignoring truncated last event"),
            Err(e) => {
                return Err(ApiError::internal(format!(
                    "{}: line {}: {e}",
                    dir.join(EVENT_LOG).display(),
                    i + 1
                )))
            }
        }
    }
    Ok(events)
}

/// Rebuilds a session from its directory.
pub fn load_session(dir: &Path) -> Result<Session, ApiError> {
    Session::replay(&read_events(dir)?)
}
