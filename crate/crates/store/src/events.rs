//! Append-only power-quality event log with an in-memory index.

use std::collections::{BTreeMap, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::Path;

use parking_lot::{Mutex, RwLock};
use tracing::warn;

use gridmon_core::wire::{decode_event, encode_event, EVENT_LEN};
use gridmon_core::{EventType, PQEvent};

use crate::StoreError;

const ENTRY_LEN: usize = EVENT_LEN + 4;

type EventKey = (u64, EventType, u8, u64);

/// Events indexed by point and start time. Identical
/// `(point, type, phase_mask, start, end)` tuples are stored once.
#[derive(Default)]
pub struct EventStore {
    log: Option<Mutex<File>>,
    index: RwLock<HashMap<u32, BTreeMap<EventKey, PQEvent>>>,
}

impl EventStore {
    pub fn in_memory() -> Self {
        Self::default()
    }

    /// Opens the log at `path`, replaying it into the index. A torn final
    /// entry is cut off; damage anywhere earlier is an error.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref();
        let mut file = OpenOptions::new().read(true).append(true).create(true).open(path)?;
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes)?;

        let store = EventStore::default();
        let mut good = 0usize;
        for (k, entry) in bytes.chunks(ENTRY_LEN).enumerate() {
            let is_last = (k + 1) * ENTRY_LEN >= bytes.len();
            let valid = entry.len() == ENTRY_LEN
                && crc32fast::hash(&entry[..EVENT_LEN]).to_be_bytes() == entry[EVENT_LEN..];
            if !valid {
                if is_last {
                    warn!(path = %path.display(), "dropping torn event log tail");
                    break;
                }
                return Err(StoreError::CorruptEventLog { offset: good as u64 });
            }
            let ev = decode_event(&entry[..EVENT_LEN]).map_err(|_| StoreError::CorruptEventLog { offset: good as u64 })?;
            store.index_insert(ev);
            good += ENTRY_LEN;
        }
        if good < bytes.len() {
            file.set_len(good as u64)?;
        }
        Ok(EventStore {
            log: Some(Mutex::new(file)),
            index: store.index,
        })
    }

    fn index_insert(&self, ev: PQEvent) -> bool {
        let key = (ev.start_ms, ev.event_type, ev.phase_mask, ev.end_ms);
        let mut idx = self.index.write();
        let per_point = idx.entry(ev.point_id).or_default();
        if per_point.contains_key(&key) {
            return false;
        }
        per_point.insert(key, ev);
        true
    }

    /// Returns `false` when an identical event was already stored.
    pub fn insert(&self, ev: PQEvent) -> Result<bool, StoreError> {
        if !self.index_insert(ev) {
            return Ok(false);
        }
        if let Some(log) = &self.log {
            let mut buf = Vec::with_capacity(ENTRY_LEN);
            encode_event(&ev, &mut buf);
            let crc = crc32fast::hash(&buf);
            buf.extend_from_slice(&crc.to_be_bytes());
            log.lock().write_all(&buf)?;
        }
        Ok(true)
    }

    pub fn sync(&self) -> Result<(), StoreError> {
        if let Some(log) = &self.log {
            log.lock().sync_data()?;
        }
        Ok(())
    }

    /// Events of `point_id` overlapping `[from_ms, to_ms)`, ordered by start.
    pub fn query(&self, point_id: u32, from_ms: u64, to_ms: u64, event_type: Option<EventType>) -> Vec<PQEvent> {
        let idx = self.index.read();
        let Some(per_point) = idx.get(&point_id) else {
            return Vec::new();
        };
        per_point
            .values()
            .take_while(|e| e.start_ms < to_ms)
            .filter(|e| e.overlaps(from_ms, to_ms))
            .filter(|e| event_type.is_none_or(|t| e.event_type == t))
            .copied()
            .collect()
    }

    pub fn len(&self) -> usize {
        self.index.read().values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}
