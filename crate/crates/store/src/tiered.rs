//! Memory-resident hot tier in front of an immutable segment disk tier.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::ops::Bound;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Mutex, MutexGuard, RwLock};
use tracing::{debug, info, warn};

use gridmon_core::{BaseRecord, Resolution};

use crate::segment::{parse_segment_seq, segment_file_name, segment_write, Segment};
use crate::StoreError;

pub const DAY_MS: u64 = 86_400_000;

type PartitionKey = (u32, Resolution);

#[derive(Default)]
struct State {
    hot: HashMap<PartitionKey, BTreeMap<u64, BaseRecord>>,
    hot_len: usize,
    /// Per resolution, ordered by segment sequence; later segments win.
    cold: BTreeMap<Resolution, Vec<(u64, Arc<Segment>)>>,
}

/// Two-tier store keyed by `(point, resolution, ts)`.
///
/// Readers take a shared lock for the whole query, so a demotion (which
/// swaps records from hot to cold under the exclusive lock) is never observed
/// half-done. On timestamp collisions the hot tier wins over disk, and newer
/// segments win over older ones.
pub struct TieredStore {
    root: PathBuf,
    points: Option<HashSet<u32>>,
    state: RwLock<State>,
    next_segment: AtomicU64,
    demotion: Mutex<()>,
}

impl TieredStore {
    /// Opens (or creates) a store rooted at `root`, loading every segment
    /// found under `root/segments/<resolution>/`. When `points` is given,
    /// queries for other points fail with [`StoreError::UnknownPoint`].
    pub fn open(root: impl AsRef<Path>, points: Option<HashSet<u32>>) -> Result<Self, StoreError> {
        let root = root.as_ref().to_path_buf();
        let mut state = State::default();
        let mut max_seq = 0u64;
        for res in Resolution::ALL {
            let dir = root.join("segments").join(res.label());
            fs::create_dir_all(&dir)?;
            let mut segs = Vec::new();
            for entry in fs::read_dir(&dir)? {
                let path = entry?.path();
                let name = path.file_name().and_then(|n| n.to_str()).unwrap_or_default().to_string();
                if name.ends_with(".tmp") {
                    warn!(path = %path.display(), "removing incomplete segment");
                    fs::remove_file(&path)?;
                    continue;
                }
                let Some(seq) = parse_segment_seq(&name) else { continue };
                let seg = Segment::open(&path).map_err(|e| StoreError::Segment {
                    path: path.clone(),
                    source: Box::new(e),
                })?;
                max_seq = max_seq.max(seq);
                segs.push((seq, Arc::new(seg)));
            }
            segs.sort_by_key(|(s, _)| *s);
            if !segs.is_empty() {
                info!(resolution = %res, segments = segs.len(), "loaded segment catalog");
                state.cold.insert(res, segs);
            }
        }
        Ok(TieredStore {
            root,
            points,
            state: RwLock::new(state),
            next_segment: AtomicU64::new(max_seq + 1),
            demotion: Mutex::new(()),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Inserts or overwrites the record at `(point, resolution, ts)`.
    pub fn insert(&self, r: BaseRecord) {
        let mut st = self.state.write();
        Self::insert_locked(&mut st, r);
    }

    pub fn insert_many<I: IntoIterator<Item = BaseRecord>>(&self, records: I) {
        let mut st = self.state.write();
        for r in records {
            Self::insert_locked(&mut st, r);
        }
    }

    fn insert_locked(st: &mut State, r: BaseRecord) {
        let part = st.hot.entry((r.point_id, r.resolution)).or_default();
        if part.insert(r.ts_ms, r).is_none() {
            st.hot_len += 1;
        }
    }

    /// Records with `from_ms <= ts < to_ms`, ascending, merged across tiers.
    pub fn query_range(
        &self,
        point_id: u32,
        resolution: Resolution,
        from_ms: u64,
        to_ms: u64,
    ) -> Result<Vec<BaseRecord>, StoreError> {
        if let Some(points) = &self.points {
            if !points.contains(&point_id) {
                return Err(StoreError::UnknownPoint(point_id));
            }
        }
        if from_ms >= to_ms {
            return Ok(Vec::new());
        }
        let st = self.state.read();
        let hot = st.hot.get(&(point_id, resolution));
        let hot_range = || {
            hot.into_iter()
                .flat_map(|p| p.range((Bound::Included(from_ms), Bound::Excluded(to_ms))))
        };

        let segments: Vec<&Arc<Segment>> = st
            .cold
            .get(&resolution)
            .into_iter()
            .flatten()
            .map(|(_, s)| s)
            .filter(|s| s.min_ts() < to_ms && s.max_ts() >= from_ms)
            .filter(|s| s.span(point_id).is_some_and(|sp| sp.min_ts < to_ms && sp.max_ts >= from_ms))
            .collect();
        if segments.is_empty() {
            return Ok(hot_range().map(|(_, r)| *r).collect());
        }

        let mut merged = BTreeMap::new();
        for seg in segments {
            for r in seg.read(point_id, from_ms, to_ms)? {
                merged.insert(r.ts_ms, r);
            }
        }
        for (ts, r) in hot_range() {
            merged.insert(*ts, *r);
        }
        Ok(merged.into_values().collect())
    }

    /// Writes every hot record older than `cutoff_ms` to new segments (one per
    /// resolution) and drops them from memory.
    pub fn demote(&self, cutoff_ms: u64) -> Result<Vec<PathBuf>, StoreError> {
        Ok(self.prepare_demotion(cutoff_ms)?.commit())
    }

    /// First half of a demotion: segments are written and fsynced but not yet
    /// visible, and the hot tier is untouched. Dropping the result without
    /// [`PendingDemotion::commit`] models a crash between the two halves;
    /// the files are picked up on the next [`TieredStore::open`].
    pub fn prepare_demotion(&self, cutoff_ms: u64) -> Result<PendingDemotion<'_>, StoreError> {
        let guard = self.demotion.lock();
        let mut snapshot: BTreeMap<Resolution, Vec<BaseRecord>> = BTreeMap::new();
        {
            let st = self.state.read();
            for ((_, res), part) in st.hot.iter() {
                let old = part.range(..cutoff_ms).map(|(_, r)| *r);
                snapshot.entry(*res).or_default().extend(old);
            }
        }
        let mut written: Vec<(Resolution, u64, Arc<Segment>, Vec<BaseRecord>)> = Vec::new();
        for (res, mut rows) in snapshot {
            if rows.is_empty() {
                continue;
            }
            rows.sort_by_key(|r| (r.point_id, r.ts_ms));
            let seq = self.next_segment.fetch_add(1, Ordering::SeqCst);
            let min_ts = rows.iter().map(|r| r.ts_ms).min().unwrap_or(0);
            let path = self
                .root
                .join("segments")
                .join(res.label())
                .join(segment_file_name(res, min_ts, seq));
            let result = segment_write(&path, res, &rows).and_then(|_| Segment::open(&path));
            match result {
                Ok(seg) => written.push((res, seq, Arc::new(seg), rows)),
                Err(e) => {
                    // all-or-nothing: discard what this run already wrote
                    for (_, _, seg, _) in &written {
                        let _ = fs::remove_file(seg.path());
                    }
                    let _ = fs::remove_file(&path);
                    let _ = fs::remove_file(path.with_extension("tmp"));
                    return Err(e);
                }
            }
        }
        Ok(PendingDemotion {
            store: self,
            written,
            _guard: guard,
        })
    }

    /// Deletes whole segments whose newest row is older than
    /// `now_ms - keep_days` days. Segments straddling the cutoff stay.
    pub fn retention_purge(&self, keep_days: u32, now_ms: u64) -> Result<Vec<PathBuf>, StoreError> {
        if keep_days == 0 {
            return Err(StoreError::InvalidRetention);
        }
        let cutoff = now_ms.saturating_sub(keep_days as u64 * DAY_MS);
        let expired: Vec<Arc<Segment>> = {
            let mut st = self.state.write();
            let mut out = Vec::new();
            for segs in st.cold.values_mut() {
                segs.retain(|(_, s)| {
                    let keep = s.max_ts() >= cutoff;
                    if !keep {
                        out.push(Arc::clone(s));
                    }
                    keep
                });
            }
            st.cold.retain(|_, v| !v.is_empty());
            out
        };
        let mut deleted = Vec::new();
        for seg in expired {
            fs::remove_file(seg.path())?;
            debug!(path = %seg.path().display(), "retention removed segment");
            deleted.push(seg.path().to_path_buf());
        }
        Ok(deleted)
    }

    pub fn hot_record_count(&self) -> usize {
        self.state.read().hot_len
    }

    pub fn segment_count(&self) -> usize {
        self.state.read().cold.values().map(Vec::len).sum()
    }

    pub fn segment_paths(&self) -> Vec<PathBuf> {
        self.state
            .read()
            .cold
            .values()
            .flatten()
            .map(|(_, s)| s.path().to_path_buf())
            .collect()
    }

    /// Oldest timestamp held in memory for a partition.
    pub fn hot_watermark(&self, point_id: u32, resolution: Resolution) -> Option<u64> {
        self.state
            .read()
            .hot
            .get(&(point_id, resolution))
            .and_then(|p| p.keys().next().copied())
    }

    /// Oldest timestamp held in memory across all partitions.
    pub fn oldest_hot_ts(&self) -> Option<u64> {
        self.state
            .read()
            .hot
            .values()
            .filter_map(|p| p.keys().next().copied())
            .min()
    }
}

/// Segments written by [`TieredStore::prepare_demotion`], awaiting the
/// visibility swap.
pub struct PendingDemotion<'a> {
    store: &'a TieredStore,
    written: Vec<(Resolution, u64, Arc<Segment>, Vec<BaseRecord>)>,
    _guard: MutexGuard<'a, ()>,
}

impl PendingDemotion<'_> {
    pub fn paths(&self) -> Vec<PathBuf> {
        self.written.iter().map(|(_, _, s, _)| s.path().to_path_buf()).collect()
    }

    /// Publishes the segments and removes the demoted records from memory in
    /// one exclusive section. A record overwritten after the snapshot stays
    /// hot, where it keeps precedence over the stale copy on disk.
    pub fn commit(self) -> Vec<PathBuf> {
        let paths = self.paths();
        let mut st = self.store.state.write();
        let st = &mut *st;
        for (res, seq, seg, rows) in self.written {
            let list = st.cold.entry(res).or_default();
            list.push((seq, seg));
            list.sort_by_key(|(s, _)| *s);
            for r in rows {
                let key = (r.point_id, r.resolution);
                let Some(part) = st.hot.get_mut(&key) else { continue };
                if part.get(&r.ts_ms).is_some_and(|cur| cur.bit_eq(&r)) {
                    part.remove(&r.ts_ms);
                    st.hot_len -= 1;
                    if part.is_empty() {
                        st.hot.remove(&key);
                    }
                }
            }
        }
        paths
    }
}
