use std::collections::HashMap;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use gridmon_core::pq::aggregate_window;
use gridmon_core::wire::{
    decode_batch, decode_event_batch, encode_batch, seal_frame, DeviceKey, FrameHeader, FrameType,
    KeyRing, WireError, MAX_BATCH_RECORDS,
};
use gridmon_core::{validate_record, BaseRecord, PQEvent, PointRegistry, Rejection, Resolution};
use gridmon_store::{EventStore, TieredStore};
use parking_lot::Mutex;
use serde::Serialize;
use tracing::{debug, info, warn};

use crate::rollup::DirtyWindows;
use crate::session::SessionState;
use crate::txlease::TxLease;
use crate::wal::Wal;
use crate::IngestError;

const IMPORT_WAL: &str = "import.wal";
const CHECKPOINT: &str = "checkpoint";
/// Bytes a WAL entry adds around its payload.
const ENTRY_OVERHEAD: u64 = 17;

#[derive(Debug, Clone)]
pub struct CenterConfig {
    pub wal_dir: PathBuf,
    pub rollup_grace_ms: u64,
    /// fsync WAL groups before acking. Only tests turn this off.
    pub fsync: bool,
}

impl CenterConfig {
    pub fn new(wal_dir: impl Into<PathBuf>) -> Self {
        CenterConfig {
            wal_dir: wal_dir.into(),
            rollup_grace_ms: 30_000,
            fsync: true,
        }
    }
}

#[derive(Default)]
struct Counters {
    frames: AtomicU64,
    duplicates: AtomicU64,
    invalid_records: AtomicU64,
    decode_failures: AtomicU64,
    auth_failures: AtomicU64,
    records_inserted: AtomicU64,
    events_inserted: AtomicU64,
    rollups: AtomicU64,
    imported_records: AtomicU64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct CounterSnapshot {
    pub frames: u64,
    pub duplicates: u64,
    pub invalid_records: u64,
    pub decode_failures: u64,
    pub auth_failures: u64,
    pub records_inserted: u64,
    pub events_inserted: u64,
    pub rollups: u64,
    pub imported_records: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ReplayStats {
    pub devices: usize,
    pub entries: usize,
    pub records: usize,
    pub events: usize,
}

/// What the session should send back for one DATA/EVENT frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum FrameOutcome {
    Ack(u64),
    /// Payload did not decode; answer with ERR, do not ack.
    Rejected(WireError),
    /// Seq cannot be held right now (pending set full); the device retries.
    Deferred,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ImportReport {
    pub accepted: usize,
    /// (input index, reason)
    pub rejected: Vec<(usize, Rejection)>,
}

enum Decoded {
    Records(Vec<BaseRecord>),
    Events(Vec<PQEvent>),
}

struct DeviceLog {
    session: SessionState,
    wal: Wal,
    tx: Option<TxLease>,
}

/// Shared state behind every device session and the import path.
pub struct Center {
    cfg: CenterConfig,
    registry: Arc<PointRegistry>,
    keys: KeyRing,
    store: Arc<TieredStore>,
    events: Arc<EventStore>,
    devices: Mutex<HashMap<u32, Arc<Mutex<DeviceLog>>>>,
    import: Mutex<(Wal, u64)>,
    dirty: DirtyWindows,
    counters: Counters,
    checkpoint: Mutex<Checkpoint>,
}

/// Records older than `cutoff` in the first `offsets[file]` bytes of each
/// WAL are already in segments and are not replayed into the hot tier.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Checkpoint {
    cutoff: u64,
    offsets: HashMap<String, u64>,
}

impl Checkpoint {
    fn load(dir: &Path) -> Result<Self, IngestError> {
        let path = dir.join(CHECKPOINT);
        let text = match std::fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Checkpoint::default()),
            Err(e) => return Err(IngestError::WalIo(e)),
        };
        let bad = || IngestError::CorruptWal { path: path.clone(), offset: 0 };
        let mut lines = text.lines();
        let cutoff = lines
            .next()
            .and_then(|l| l.strip_prefix("cutoff "))
            .and_then(|v| v.parse().ok())
            .ok_or_else(bad)?;
        let mut offsets = HashMap::new();
        for line in lines.filter(|l| !l.is_empty()) {
            let (name, off) = line.split_once(' ').ok_or_else(bad)?;
            offsets.insert(name.to_string(), off.parse().map_err(|_| bad())?);
        }
        Ok(Checkpoint { cutoff, offsets })
    }

    fn store(&self, dir: &Path, fsync: bool) -> std::io::Result<()> {
        let mut names: Vec<_> = self.offsets.iter().collect();
        names.sort();
        let mut text = format!("cutoff {}\n", self.cutoff);
        for (name, off) in names {
            text.push_str(&format!("{name} {off}\n"));
        }
        let tmp = dir.join(format!("{CHECKPOINT}.tmp"));
        let mut f = File::create(&tmp)?;
        f.write_all(text.as_bytes())?;
        if fsync {
            f.sync_all()?;
        }
        std::fs::rename(&tmp, dir.join(CHECKPOINT))?;
        if fsync {
            File::open(dir)?.sync_all()?;
        }
        Ok(())
    }

    /// Drops records that an entry ending at `end` in `file` already
    /// handed to segments.
    fn filter(&self, file: &str, end: u64, decoded: Decoded) -> Decoded {
        let covered = self.offsets.get(file).is_some_and(|&off| end <= off);
        match decoded {
            Decoded::Records(mut rs) if covered => {
                rs.retain(|r| r.ts_ms >= self.cutoff);
                Decoded::Records(rs)
            }
            other => other,
        }
    }
}

impl Center {
    /// Replays every WAL under `cfg.wal_dir` into the store and rebuilds
    /// the per-device sessions. Must complete before sessions are served.
    pub fn open(
        cfg: CenterConfig,
        registry: Arc<PointRegistry>,
        keys: KeyRing,
        store: Arc<TieredStore>,
        events: Arc<EventStore>,
    ) -> Result<(Self, ReplayStats), IngestError> {
        std::fs::create_dir_all(&cfg.wal_dir).map_err(IngestError::WalIo)?;
        let checkpoint = Checkpoint::load(&cfg.wal_dir)?;
        let (import_wal, import_entries) = Wal::open(cfg.wal_dir.join(IMPORT_WAL), cfg.fsync)?;
        let center = Center {
            import: Mutex::new((import_wal, 0)),
            cfg,
            registry,
            keys,
            store,
            events,
            devices: Mutex::new(HashMap::new()),
            dirty: DirtyWindows::default(),
            counters: Counters::default(),
            checkpoint: Mutex::new(checkpoint.clone()),
        };
        let mut stats = ReplayStats::default();

        let mut last_import = 0;
        let mut end = 0;
        for e in import_entries {
            last_import = e.seq;
            end += ENTRY_OVERHEAD + e.payload.len() as u64;
            stats.entries += 1;
            let records = decode_batch(&e.payload).map_err(|_| IngestError::CorruptWal {
                path: center.cfg.wal_dir.join(IMPORT_WAL),
                offset: 0,
            })?;
            let decoded = checkpoint.filter(IMPORT_WAL, end, Decoded::Records(records));
            stats.records += center.apply(decoded, false).0;
        }
        center.import.lock().1 = last_import;

        let mut ids: Vec<u32> = std::fs::read_dir(&center.cfg.wal_dir)
            .map_err(IngestError::WalIo)?
            .filter_map(|e| e.ok())
            .filter_map(|e| {
                let name = e.file_name().into_string().ok()?;
                name.strip_suffix(".wal")?.parse().ok()
            })
            .collect();
        ids.sort_unstable();
        for id in ids {
            let path = center.wal_path(id);
            let (wal, entries) = Wal::open(&path, center.cfg.fsync)?;
            let mut session = SessionState::new(id);
            let name = format!("{id}.wal");
            let mut end = 0;
            for e in entries {
                stats.entries += 1;
                end += ENTRY_OVERHEAD + e.payload.len() as u64;
                let decoded = decode(e.frame_type, &e.payload).map_err(|_| IngestError::CorruptWal {
                    path: path.clone(),
                    offset: 0,
                })?;
                let decoded = checkpoint.filter(&name, end, decoded);
                let (r, ev) = center.apply(decoded, false);
                stats.records += r;
                stats.events += ev;
                session.accept(e.seq);
            }
            center.devices.lock().insert(
                id,
                Arc::new(Mutex::new(DeviceLog {
                    session,
                    wal,
                    tx: None,
                })),
            );
            stats.devices += 1;
        }
        info!(?stats, "wal replay complete");
        Ok((center, stats))
    }

    fn wal_path(&self, device_id: u32) -> PathBuf {
        self.cfg.wal_dir.join(format!("{device_id}.wal"))
    }

    pub fn registry(&self) -> &PointRegistry {
        &self.registry
    }

    pub fn store(&self) -> &Arc<TieredStore> {
        &self.store
    }

    pub fn events(&self) -> &Arc<EventStore> {
        &self.events
    }

    pub fn key(&self, device_id: u32) -> Option<DeviceKey> {
        self.keys.get(device_id)
    }

    pub fn note_auth_failure(&self) {
        self.counters.auth_failures.fetch_add(1, Ordering::Relaxed);
    }

    pub fn counters(&self) -> CounterSnapshot {
        let c = &self.counters;
        let g = |a: &AtomicU64| a.load(Ordering::Relaxed);
        CounterSnapshot {
            frames: g(&c.frames),
            duplicates: g(&c.duplicates),
            invalid_records: g(&c.invalid_records),
            decode_failures: g(&c.decode_failures),
            auth_failures: g(&c.auth_failures),
            records_inserted: g(&c.records_inserted),
            events_inserted: g(&c.events_inserted),
            rollups: g(&c.rollups),
            imported_records: g(&c.imported_records),
        }
    }

    pub fn pending_rollups(&self) -> usize {
        self.dirty.len()
    }

    fn device(&self, device_id: u32) -> Result<Arc<Mutex<DeviceLog>>, IngestError> {
        let mut devices = self.devices.lock();
        if let Some(d) = devices.get(&device_id) {
            return Ok(d.clone());
        }
        if self.keys.get(device_id).is_none() {
            return Err(IngestError::UnknownDevice(device_id));
        }
        let (wal, _) = Wal::open(self.wal_path(device_id), self.cfg.fsync)?;
        let log = Arc::new(Mutex::new(DeviceLog {
            session: SessionState::new(device_id),
            wal,
            tx: None,
        }));
        devices.insert(device_id, log.clone());
        Ok(log)
    }

    /// Current cumulative ack for a device; the reply to its HELLO.
    pub fn hello(&self, device_id: u32) -> Result<u64, IngestError> {
        Ok(self.device(device_id)?.lock().session.cum_seq())
    }

    pub fn cum_seq(&self, device_id: u32) -> Option<u64> {
        self.devices
            .lock()
            .get(&device_id)
            .map(|d| d.lock().session.cum_seq())
    }

    /// Processes one authenticated frame and returns the ack to send.
    pub fn process_frame(&self, header: FrameHeader, payload: &[u8]) -> Result<u64, IngestError> {
        let out = self.process_frames(header.device_id, &[(header, payload.to_vec())])?;
        match out.into_iter().next() {
            Some(FrameOutcome::Ack(c)) => Ok(c),
            Some(FrameOutcome::Rejected(e)) => Err(IngestError::DecodeFailed(e)),
            _ => Err(IngestError::SeqRejected(header.seq)),
        }
    }

    /// Processes a group of authenticated frames from one device with a
    /// single WAL sync. Acks in the result are only valid once this returns
    /// `Ok`; on `WalIo` nothing from the group was accepted.
    pub fn process_frames(
        &self,
        device_id: u32,
        frames: &[(FrameHeader, Vec<u8>)],
    ) -> Result<Vec<FrameOutcome>, IngestError> {
        let dev = self.device(device_id)?;
        let mut d = dev.lock();
        let before = d.session.clone();
        let mut outcomes = Vec::with_capacity(frames.len());
        let mut staged = Vec::new();
        for (h, payload) in frames {
            if h.device_id != device_id {
                return Err(IngestError::UnknownDevice(h.device_id));
            }
            if !matches!(h.frame_type, FrameType::Data | FrameType::Event) {
                return Err(IngestError::UnexpectedFrame(h.frame_type));
            }
            self.counters.frames.fetch_add(1, Ordering::Relaxed);
            if d.session.is_duplicate(h.seq) {
                self.counters.duplicates.fetch_add(1, Ordering::Relaxed);
                outcomes.push(FrameOutcome::Ack(d.session.cum_seq()));
                continue;
            }
            if !d.session.can_accept(h.seq) {
                outcomes.push(FrameOutcome::Deferred);
                continue;
            }
            match decode(h.frame_type, payload) {
                Ok(decoded) => {
                    d.wal.append(h.seq, h.frame_type, payload);
                    outcomes.push(FrameOutcome::Ack(d.session.accept(h.seq)));
                    staged.push(decoded);
                }
                Err(e) => {
                    self.counters.decode_failures.fetch_add(1, Ordering::Relaxed);
                    outcomes.push(FrameOutcome::Rejected(e));
                }
            }
        }
        if let Err(e) = d.wal.commit() {
            warn!(device_id, error = %e, "wal commit failed");
            d.session = before;
            return Err(IngestError::WalIo(e));
        }
        // inserts happen under the device lock so a device's writes land in
        // seq order (last write wins on repeated keys)
        for decoded in staged {
            self.apply(decoded, true);
        }
        Ok(outcomes)
    }

    /// Validates and inserts; returns (records, events) inserted.
    fn apply(&self, decoded: Decoded, count: bool) -> (usize, usize) {
        match decoded {
            Decoded::Records(records) => {
                let n_in = records.len();
                let valid: Vec<BaseRecord> = records
                    .into_iter()
                    .filter(|r| match validate_record(r, &self.registry) {
                        Ok(()) => true,
                        Err(reason) => {
                            if count {
                                debug!(point = r.point_id, ts = r.ts_ms, %reason, "dropping invalid record");
                            }
                            false
                        }
                    })
                    .collect();
                if count {
                    self.counters
                        .invalid_records
                        .fetch_add((n_in - valid.len()) as u64, Ordering::Relaxed);
                    self.counters
                        .records_inserted
                        .fetch_add(valid.len() as u64, Ordering::Relaxed);
                }
                let n = valid.len();
                self.insert_valid(valid);
                (n, 0)
            }
            Decoded::Events(events) => {
                let mut n = 0;
                for ev in events {
                    if !self.registry.contains(ev.point_id) || ev.end_ms < ev.start_ms {
                        if count {
                            self.counters.invalid_records.fetch_add(1, Ordering::Relaxed);
                        }
                        continue;
                    }
                    // the WAL is the durable copy; the event log is a cache
                    match self.events.insert(ev) {
                        Ok(_) => n += 1,
                        Err(e) => warn!(error = %e, "event log append failed"),
                    }
                }
                if count {
                    self.counters.events_inserted.fetch_add(n as u64, Ordering::Relaxed);
                }
                (0, n)
            }
        }
    }

    fn insert_valid(&self, valid: Vec<BaseRecord>) {
        let marks: Vec<(u32, u64)> = valid
            .iter()
            .filter(|r| r.resolution == Resolution::R3S)
            .map(|r| (r.point_id, r.ts_ms))
            .collect();
        self.store.insert_many(valid);
        self.dirty.mark_many(marks);
    }

    /// Bulk import of externally supplied records. Valid records are logged
    /// and inserted through the same path as device data; each invalid one
    /// is reported by input index.
    pub fn import_records(&self, records: &[BaseRecord]) -> Result<ImportReport, IngestError> {
        let mut report = ImportReport::default();
        let mut valid = Vec::new();
        for (i, r) in records.iter().enumerate() {
            match validate_record(r, &self.registry) {
                Ok(()) => valid.push(*r),
                Err(reason) => report.rejected.push((i, reason)),
            }
        }
        if valid.is_empty() {
            return Ok(report);
        }
        let mut guard = self.import.lock();
        let (wal, seq) = &mut *guard;
        for chunk in valid.chunks(MAX_BATCH_RECORDS) {
            *seq += 1;
            let payload = encode_batch(chunk).expect("chunk within batch limit");
            wal.append(*seq, FrameType::Data, &payload);
        }
        if let Err(e) = wal.commit() {
            *seq -= valid.len().div_ceil(MAX_BATCH_RECORDS) as u64;
            return Err(IngestError::WalIo(e));
        }
        report.accepted = valid.len();
        self.counters
            .imported_records
            .fetch_add(valid.len() as u64, Ordering::Relaxed);
        self.insert_valid(valid);
        Ok(report)
    }

    /// Rolls every changed 10-minute window that closed at least the grace
    /// period before `now_ms` up from its R3S records. Returns the R10MIN
    /// records written.
    pub fn rollup_tick(&self, now_ms: u64) -> Vec<BaseRecord> {
        let cutoff = now_ms.saturating_sub(self.cfg.rollup_grace_ms);
        let span = Resolution::R10Min.duration_ms();
        let mut out = Vec::new();
        for (window, point) in self.dirty.take_closed(cutoff) {
            let inputs = match self.store.query_range(point, Resolution::R3S, window, window + span) {
                Ok(v) => v,
                Err(e) => {
                    warn!(point, window, error = %e, "rollup query failed");
                    continue;
                }
            };
            if inputs.is_empty() {
                continue;
            }
            match aggregate_window(&inputs, Resolution::R10Min) {
                Ok(r) => out.push(r),
                Err(e) => warn!(point, window, error = %e, "rollup failed"),
            }
        }
        if out.is_empty() {
            return out;
        }
        // logged like imports so a demotion checkpoint cannot lose them
        let mut guard = self.import.lock();
        let (wal, seq) = &mut *guard;
        let first = *seq;
        for chunk in out.chunks(MAX_BATCH_RECORDS) {
            *seq += 1;
            wal.append(*seq, FrameType::Data, &encode_batch(chunk).expect("chunk within batch limit"));
        }
        if let Err(e) = wal.commit() {
            *seq = first;
            warn!(error = %e, "rollup wal commit failed; windows stay pending");
            self.dirty.mark_many(out.iter().map(|r| (r.point_id, r.ts_ms)));
            return Vec::new();
        }
        self.store.insert_many(out.clone());
        drop(guard);
        self.counters.rollups.fetch_add(out.len() as u64, Ordering::Relaxed);
        out
    }

    /// Moves hot records older than `cutoff_ms` into segments and records a
    /// checkpoint so WAL replay does not load them into the hot tier again.
    pub fn demote(&self, cutoff_ms: u64) -> Result<Vec<PathBuf>, IngestError> {
        let mut cp = self.checkpoint.lock();
        let mut logs: Vec<(u32, Arc<Mutex<DeviceLog>>)> =
            self.devices.lock().iter().map(|(id, d)| (*id, d.clone())).collect();
        logs.sort_unstable_by_key(|(id, _)| *id);
        // every entry below these offsets has already reached the store
        let mut offsets = HashMap::new();
        {
            let guards: Vec<_> = logs.iter().map(|(id, d)| (*id, d.lock())).collect();
            let import = self.import.lock();
            offsets.insert(IMPORT_WAL.to_string(), import.0.len());
            for (id, g) in &guards {
                offsets.insert(format!("{id}.wal"), g.wal.len());
            }
        }
        let paths = self.store.demote(cutoff_ms)?;
        // a lower cutoff would not cover what the previous checkpoint skips
        if cutoff_ms >= cp.cutoff {
            let next = Checkpoint { cutoff: cutoff_ms, offsets };
            next.store(&self.cfg.wal_dir, self.cfg.fsync).map_err(IngestError::WalIo)?;
            *cp = next;
        }
        Ok(paths)
    }

    /// Seals a center-to-device frame under a never-reused seq.
    pub fn seal_to_device(
        &self,
        device_id: u32,
        frame_type: FrameType,
        payload: &[u8],
    ) -> Result<Vec<u8>, IngestError> {
        let key = self
            .keys
            .get(device_id)
            .ok_or(IngestError::UnknownDevice(device_id))?;
        let dev = self.device(device_id)?;
        let mut d = dev.lock();
        if d.tx.is_none() {
            let path = self.cfg.wal_dir.join(format!("{device_id}.tx"));
            d.tx = Some(TxLease::open(&path).map_err(IngestError::WalIo)?);
        }
        let seq = d.tx.as_mut().unwrap().next().map_err(IngestError::WalIo)?;
        Ok(seal_frame(FrameHeader::new(frame_type, device_id, seq), payload, &key))
    }
}

fn decode(frame_type: FrameType, payload: &[u8]) -> Result<Decoded, WireError> {
    match frame_type {
        FrameType::Data => decode_batch(payload).map(Decoded::Records),
        FrameType::Event => decode_event_batch(payload).map(Decoded::Events),
        other => Err(WireError::BadFrameType(other.code())),
    }
}
