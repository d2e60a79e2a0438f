//! Append-only event log with periodic snapshots.
//!
//! Every state change is one JSON line `{"seq": n, "event": {...}}` in
//! `events.jsonl`. A snapshot records the full state together with the last
//! sequence number it is guaranteed to contain; replay applies only later
//! events. Events are idempotent, so a snapshot that already reflects some
//! later events is still consistent after replay.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use arena_core::campaign::{write_atomic, IterationRecord};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::state::{CampaignEntry, CampaignState};

pub const EVENTS_FILE: &str = "events.jsonl";
pub const SNAPSHOT_FILE: &str = "snapshot.json";
pub const DEFAULT_SNAPSHOT_EVERY: usize = 256;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Dataset { dataset: Value },
    /// Full campaign state; written on creation and when a machine run finishes.
    Campaign { entry: CampaignEntry },
    /// One human iteration; `record.index` makes replay idempotent.
    Record {
        id: String,
        record: IterationRecord,
        state: CampaignState,
    },
    Published { id: String },
}

#[derive(Debug, Serialize, Deserialize)]
struct LogLine {
    seq: u64,
    event: Event,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub seq: u64,
    pub next_id: u64,
    pub datasets: Vec<Value>,
    pub campaigns: Vec<CampaignEntry>,
    pub published: Vec<String>,
}

/// What was on disk when the store was opened.
#[derive(Debug, Default)]
pub struct Restored {
    pub snapshot: Option<Snapshot>,
    /// Events newer than the snapshot, in order.
    pub events: Vec<Event>,
}

#[derive(Debug)]
pub struct Store {
    dir: PathBuf,
    log: File,
    seq: u64,
    since_snapshot: usize,
    snapshot_every: usize,
}

fn io_other(e: impl std::fmt::Display) -> io::Error {
    io::Error::other(e.to_string())
}

impl Store {
    pub fn open(dir: &Path, snapshot_every: usize) -> io::Result<(Self, Restored)> {
        fs::create_dir_all(dir)?;
        let snapshot: Option<Snapshot> = match fs::read_to_string(dir.join(SNAPSHOT_FILE)) {
            Ok(text) => Some(serde_json::from_str(&text).map_err(io_other)?),
            Err(e) if e.kind() == io::ErrorKind::NotFound => None,
            Err(e) => return Err(e),
        };
        let base = snapshot.as_ref().map_or(0, |s| s.seq);
        let mut seq = base;
        let mut events = Vec::new();
        let path = dir.join(EVENTS_FILE);
        if path.exists() {
            for (n, line) in BufReader::new(File::open(&path)?).lines().enumerate() {
                let line = line?;
                if line.trim().is_empty() {
                    continue;
                }
                let parsed: LogLine = match serde_json::from_str(&line) {
                    Ok(l) => l,
                    // A torn final line from a crash mid-append is dropped.
                    Err(e) if e.is_eof() => {
                        tracing::warn!("{}: ignoring truncated line {}", path.display(), n + 1);
                        continue;
                    }
                    Err(e) => return Err(io_other(format!("{}:{}: {e}", path.display(), n + 1))),
                };
                seq = seq.max(parsed.seq);
                if parsed.seq > base {
                    events.push(parsed.event);
                }
            }
        }
        let log = OpenOptions::new().create(true).append(true).open(&path)?;
        let store = Self {
            dir: dir.to_path_buf(),
            log,
            seq,
            since_snapshot: events.len(),
            snapshot_every: snapshot_every.max(1),
        };
        Ok((store, Restored { snapshot, events }))
    }

    pub fn seq(&self) -> u64 {
        self.seq
    }

    /// Durably appends one event; returns true when a snapshot is due.
    pub fn append(&mut self, event: &Event) -> io::Result<bool> {
        let line = serde_json::to_string(&LogLine {
            seq: self.seq + 1,
            event: event.clone(),
        })
        .map_err(io_other)?;
        self.log.write_all(line.as_bytes())?;
        self.log.write_all(b"\n")?;
        self.log.sync_data()?;
        self.seq += 1;
        self.since_snapshot += 1;
        Ok(self.since_snapshot >= self.snapshot_every)
    }

    /// Writes the snapshot and drops log lines it covers.
    pub fn write_snapshot(&mut self, snapshot: &Snapshot) -> io::Result<()> {
        let bytes = serde_json::to_vec(snapshot).map_err(io_other)?;
        write_atomic(&self.dir.join(SNAPSHOT_FILE), &bytes).map_err(io_other)?;

        let path = self.dir.join(EVENTS_FILE);
        let mut kept = Vec::new();
        for line in BufReader::new(File::open(&path)?).lines() {
            let line = line?;
            match serde_json::from_str::<LogLine>(&line) {
                Ok(l) if l.seq > snapshot.seq => {
                    kept.extend_from_slice(line.as_bytes());
                    kept.push(b'\n');
                }
                _ => {}
            }
        }
        write_atomic(&path, &kept).map_err(io_other)?;
        self.log = OpenOptions::new().append(true).open(&path)?;
        self.since_snapshot = 0;
        Ok(())
    }
}
