//! Append-only telemetry store with a time index and a correlation-id index.
//!
//! File-backed stores persist one canonical event per line (JSONL, event_id
//! included) and rebuild both indexes by a full scan on open. A torn final
//! line left by a crash is dropped with a warning and truncated away.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use parking_lot::{Mutex, RwLock, RwLockReadGuard};

use crate::model::{CorrelationId, ModelError, Plane, TelemetryEvent};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("storage failure: {0}")]
    StorageFailure(#[from] io::Error),
    #[error("invalid range: t0 {t0} > t1 {t1}")]
    InvalidRange { t0: i64, t1: i64 },
    #[error("invalid event: {0}")]
    InvalidEvent(#[from] ModelError),
    #[error("corrupt store file at line {line}: {reason}")]
    Corrupt { line: usize, reason: String },
}

type TimeKey = (i64, Plane, u64);

#[derive(Default)]
struct Indexed {
    /// Events in ingestion (event_id) order.
    events: Vec<TelemetryEvent>,
    by_time: BTreeMap<TimeKey, usize>,
    by_cid: HashMap<CorrelationId, Vec<usize>>,
    next_seq: u64,
}

impl Indexed {
    fn insert(&mut self, event: TelemetryEvent) {
        let pos = self.events.len();
        self.by_time.insert(event.canonical_key(), pos);
        if let Some(cid) = &event.correlation_id {
            self.by_cid.entry(cid.clone()).or_default().push(pos);
        }
        self.next_seq = self.next_seq.max(event.event_id + 1);
        self.events.push(event);
    }
}

struct Backing {
    path: PathBuf,
    file: File,
    len: u64,
    sync: bool,
}

/// Handle to an in-memory or file-backed event store. Reads run concurrently;
/// appends are serialized through a single writer.
pub struct EventStore {
    state: RwLock<Indexed>,
    backing: Mutex<Option<Backing>>,
}

impl std::fmt::Debug for EventStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EventStore")
            .field("path", &self.path())
            .field("len", &self.len())
            .finish()
    }
}

impl Default for EventStore {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl EventStore {
    pub fn in_memory() -> Self {
        Self {
            state: RwLock::new(Indexed { next_seq: 1, ..Default::default() }),
            backing: Mutex::new(None),
        }
    }

    /// Opens (or creates) a file-backed store, replaying every stored event.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        Self::open_with(path, true)
    }

    /// Like [`EventStore::open`]; `sync` controls whether every append is
    /// followed by `fdatasync`.
    pub fn open_with(path: impl AsRef<Path>, sync: bool) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(&path)?;
        let mut indexed = Indexed { next_seq: 1, ..Default::default() };

        // character devices and pipes have nothing to replay
        let replay_limit = if file.metadata()?.is_file() { u64::MAX } else { 0 };
        let mut reader = BufReader::new((&mut file).take(replay_limit));
        let mut good_len: u64 = 0;
        let mut line_no = 0usize;
        let mut buf = String::new();
        let mut pending_error: Option<(usize, String)> = None;
        loop {
            buf.clear();
            let n = reader.read_line(&mut buf)?;
            if n == 0 {
                break;
            }
            line_no += 1;
            if let Some((line, reason)) = pending_error.take() {
                // a bad line followed by more data is corruption, not a torn tail
                return Err(StoreError::Corrupt { line, reason });
            }
            let complete = buf.ends_with('\n');
            let trimmed = buf.trim_end_matches(['\n', '\r']);
            if trimmed.trim().is_empty() {
                good_len += n as u64;
                continue;
            }
            match serde_json::from_str::<TelemetryEvent>(trimmed) {
                Ok(ev) if complete => {
                    if ev.event_id == 0 || ev.event_id < indexed.next_seq {
                        return Err(StoreError::Corrupt {
                            line: line_no,
                            reason: format!("event_id {} out of sequence", ev.event_id),
                        });
                    }
                    indexed.insert(ev);
                    good_len += n as u64;
                }
                Ok(_) => pending_error = Some((line_no, "unterminated final line".into())),
                Err(e) => pending_error = Some((line_no, e.to_string())),
            }
        }
        drop(reader);

        if let Some((line, reason)) = pending_error {
            tracing::warn!(path = %path.display(), line, %reason, "dropping torn final line");
            file.set_len(good_len)?;
        }
        file.seek(SeekFrom::End(0))?;

        Ok(Self {
            state: RwLock::new(indexed),
            backing: Mutex::new(Some(Backing { path, file, len: good_len, sync })),
        })
    }

    pub fn path(&self) -> Option<PathBuf> {
        self.backing.lock().as_ref().map(|b| b.path.clone())
    }

    pub fn len(&self) -> usize {
        self.state.read().events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Appends one event and returns its assigned id. Any incoming event_id
    /// is ignored.
    pub fn append(&self, event: TelemetryEvent) -> Result<u64, StoreError> {
        let ids = self.append_batch(vec![event])?;
        Ok(ids[0])
    }

    /// Appends events in order as one write. Either all are recorded or none.
    pub fn append_batch(&self, events: Vec<TelemetryEvent>) -> Result<Vec<u64>, StoreError> {
        for e in &events {
            e.validate()?;
        }
        let mut backing = self.backing.lock();
        let mut state = self.state.write();

        let mut next = state.next_seq;
        let mut stamped = Vec::with_capacity(events.len());
        let mut lines = String::new();
        for mut e in events {
            e.event_id = next;
            next += 1;
            lines.push_str(&e.to_json_line());
            lines.push('\n');
            stamped.push(e);
        }

        if let Some(b) = backing.as_mut() {
            if let Err(err) = write_durably(b, lines.as_bytes()) {
                // roll the file back to the last durable state
                let _ = b.file.set_len(b.len);
                return Err(StoreError::StorageFailure(err));
            }
            b.len += lines.len() as u64;
        }

        let ids = stamped.iter().map(|e| e.event_id).collect();
        for e in stamped {
            state.insert(e);
        }
        state.next_seq = next;
        Ok(ids)
    }

    /// A consistent read snapshot; appends block while it is held.
    pub fn view(&self) -> StoreView<'_> {
        StoreView { guard: self.state.read() }
    }

    pub fn query_window(&self, t0_ms: i64, t1_ms: i64) -> Result<Vec<TelemetryEvent>, StoreError> {
        self.view().query_window(t0_ms, t1_ms)
    }

    pub fn query_by_cid(&self, cid: &CorrelationId) -> Vec<TelemetryEvent> {
        self.view().query_by_cid(cid)
    }

    pub fn all_events(&self) -> Vec<TelemetryEvent> {
        self.view().all()
    }
}

fn write_durably(b: &mut Backing, bytes: &[u8]) -> io::Result<()> {
    b.file.write_all(bytes)?;
    b.file.flush()?;
    if b.sync {
        b.file.sync_data()?;
    }
    Ok(())
}

pub struct StoreView<'a> {
    guard: RwLockReadGuard<'a, Indexed>,
}

impl StoreView<'_> {
    /// Events with `t0_ms <= timestamp_ms <= t1_ms`, canonical order.
    pub fn query_window(&self, t0_ms: i64, t1_ms: i64) -> Result<Vec<TelemetryEvent>, StoreError> {
        if t0_ms > t1_ms {
            return Err(StoreError::InvalidRange { t0: t0_ms, t1: t1_ms });
        }
        Ok(self.window_iter(t0_ms, t1_ms).cloned().collect())
    }

    pub(crate) fn window_iter(&self, t0_ms: i64, t1_ms: i64) -> impl Iterator<Item = &TelemetryEvent> {
        let lo = (t0_ms, Plane::Browser, 0);
        let hi = (t1_ms, Plane::Server, u64::MAX);
        self.guard.by_time.range(lo..=hi).map(|(_, &pos)| &self.guard.events[pos])
    }

    /// Events whose correlation id equals `cid`, canonical order.
    pub fn query_by_cid(&self, cid: &CorrelationId) -> Vec<TelemetryEvent> {
        let mut out: Vec<TelemetryEvent> = self
            .guard
            .by_cid
            .get(cid)
            .map(|ps| ps.iter().map(|&p| self.guard.events[p].clone()).collect())
            .unwrap_or_default();
        out.sort_by(crate::model::canonical_cmp);
        out
    }

    /// Every event, canonical order.
    pub fn all(&self) -> Vec<TelemetryEvent> {
        self.guard.by_time.values().map(|&p| self.guard.events[p].clone()).collect()
    }

    pub fn len(&self) -> usize {
        self.guard.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.guard.events.is_empty()
    }
}
