//! Per-device store-and-forward journal.
//!
//! `journal/<id>.log` holds sealed frames as
//! `len u32 | seq u64 | frame bytes | crc32`. An entry with seq 0 is a trim
//! marker whose body is the acknowledged boundary. `journal/<id>.meta` holds
//! the counters that must survive the log being compacted to nothing.

use std::collections::VecDeque;
use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use gridmon_core::wire::HELLO_SEQ_BIT;
use tracing::warn;

use crate::SimError;

const COMPACT_EVERY: u32 = 64;
const META_LEN: usize = 24;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct JournalEntry {
    pub seq: u64,
    pub frame: Vec<u8>,
}

pub struct Journal {
    log_path: PathBuf,
    meta_path: PathBuf,
    log: File,
    entries: VecDeque<JournalEntry>,
    next_seq: u64,
    acked: u64,
    hello_counter: u64,
    trims: u32,
    fsync: bool,
}

fn encode_entry(seq: u64, frame: &[u8], out: &mut Vec<u8>) {
    let start = out.len();
    out.extend_from_slice(&((8 + frame.len()) as u32).to_be_bytes());
    out.extend_from_slice(&seq.to_be_bytes());
    out.extend_from_slice(frame);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_be_bytes());
}

fn parse_entry(b: &[u8]) -> Option<(JournalEntry, usize)> {
    let len = u32::from_be_bytes(b.get(..4)?.try_into().ok()?) as usize;
    if len < 8 {
        return None;
    }
    let raw = b.get(..len + 8)?;
    let crc = u32::from_be_bytes(raw[4 + len..].try_into().ok()?);
    if crc32fast::hash(&raw[..4 + len]) != crc {
        return None;
    }
    let seq = u64::from_be_bytes(raw[4..12].try_into().ok()?);
    Some((
        JournalEntry {
            seq,
            frame: raw[12..4 + len].to_vec(),
        },
        len + 8,
    ))
}

fn sync_dir(path: &Path) -> std::io::Result<()> {
    match path.parent() {
        Some(dir) => File::open(dir)?.sync_all(),
        None => Ok(()),
    }
}

impl Journal {
    pub fn open(dir: impl AsRef<Path>, device_id: u32, fsync: bool) -> Result<Self, SimError> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        let log_path = dir.join(format!("{device_id}.log"));
        let meta_path = dir.join(format!("{device_id}.meta"));

        let (mut next_seq, mut acked, hello_counter) = match std::fs::read(&meta_path) {
            Ok(b) => {
                let ok = b.len() == META_LEN + 4
                    && crc32fast::hash(&b[..META_LEN]).to_be_bytes() == b[META_LEN..];
                if !ok {
                    return Err(SimError::CorruptJournal {
                        path: meta_path,
                        offset: 0,
                    });
                }
                let word = |k: usize| u64::from_be_bytes(b[k * 8..k * 8 + 8].try_into().unwrap());
                (word(0), word(1), word(2))
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => (1, 0, 0),
            Err(e) => return Err(e.into()),
        };

        let mut log = OpenOptions::new()
            .read(true)
            .append(true)
            .create(true)
            .open(&log_path)?;
        let mut bytes = Vec::new();
        log.read_to_end(&mut bytes)?;
        let mut entries = VecDeque::new();
        let mut off = 0;
        while off < bytes.len() {
            match parse_entry(&bytes[off..]) {
                Some((e, used)) => {
                    off += used;
                    if e.seq == 0 {
                        if let Ok(b) = <[u8; 8]>::try_from(e.frame.as_slice()) {
                            acked = acked.max(u64::from_be_bytes(b));
                        }
                        continue;
                    }
                    next_seq = next_seq.max(e.seq + 1);
                    entries.push_back(e);
                }
                None => {
                    let rest = &bytes[off..];
                    let declared = rest
                        .get(..4)
                        .map(|b| u32::from_be_bytes(b.try_into().unwrap()) as usize + 8);
                    if declared.is_some_and(|n| n < rest.len()) {
                        return Err(SimError::CorruptJournal {
                            path: log_path,
                            offset: off as u64,
                        });
                    }
                    warn!(path = %log_path.display(), "dropping torn journal tail");
                    log.set_len(off as u64)?;
                    break;
                }
            }
        }
        entries.retain(|e| e.seq > acked);
        Ok(Journal {
            log_path,
            meta_path,
            log,
            entries,
            next_seq: next_seq.max(1),
            acked,
            hello_counter,
            trims: 0,
            fsync,
        })
    }

    /// Seq the next append will get.
    pub fn next_seq(&self) -> u64 {
        self.next_seq
    }

    pub fn last_seq(&self) -> u64 {
        self.next_seq - 1
    }

    pub fn acked(&self) -> u64 {
        self.acked
    }

    pub fn unacked(&self) -> usize {
        self.entries.len()
    }

    /// Assigns the next seq, builds the frame for it and makes it durable.
    pub fn append_with(&mut self, build: impl FnOnce(u64) -> Vec<u8>) -> Result<u64, SimError> {
        let seq = self.next_seq;
        let frame = build(seq);
        let mut buf = Vec::with_capacity(frame.len() + 16);
        encode_entry(seq, &frame, &mut buf);
        self.log.write_all(&buf)?;
        if self.fsync {
            self.log.sync_data()?;
        }
        self.next_seq += 1;
        self.entries.push_back(JournalEntry { seq, frame });
        Ok(seq)
    }

    /// Entries with seq greater than `from_seq`, in order.
    pub fn replay(&self, from_seq: u64) -> impl Iterator<Item = &JournalEntry> {
        self.entries.iter().filter(move |e| e.seq > from_seq)
    }

    /// Forgets every entry with seq at or below `cum_seq`.
    pub fn trim(&mut self, cum_seq: u64) -> Result<usize, SimError> {
        let cum = cum_seq.min(self.last_seq());
        if cum <= self.acked {
            return Ok(0);
        }
        let mut n = 0;
        while self.entries.front().is_some_and(|e| e.seq <= cum) {
            self.entries.pop_front();
            n += 1;
        }
        self.acked = cum;
        // not synced: losing a marker only causes harmless resends
        let mut marker = Vec::with_capacity(24);
        encode_entry(0, &cum.to_be_bytes(), &mut marker);
        self.log.write_all(&marker)?;
        self.trims += 1;
        if self.trims >= COMPACT_EVERY {
            self.compact()?;
        }
        Ok(n)
    }

    /// The center holds more than this journal ever wrote (the journal was
    /// lost or reset): continue numbering after the center's boundary.
    pub fn skip_to(&mut self, cum_seq: u64) -> Result<(), SimError> {
        if cum_seq >= self.next_seq {
            self.next_seq = cum_seq + 1;
            self.entries.clear();
            self.acked = cum_seq;
            self.write_meta()?;
        }
        Ok(())
    }

    /// Seq for a HELLO frame; never reused, even across restarts.
    pub fn next_hello_seq(&mut self) -> Result<u64, SimError> {
        self.hello_counter += 1;
        self.write_meta()?;
        Ok(HELLO_SEQ_BIT | self.hello_counter)
    }

    /// Rewrites the log with only the unacked suffix.
    pub fn compact(&mut self) -> Result<(), SimError> {
        self.write_meta()?;
        let tmp = self.log_path.with_extension("log.tmp");
        let mut buf = Vec::new();
        for e in &self.entries {
            encode_entry(e.seq, &e.frame, &mut buf);
        }
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&buf)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &self.log_path)?;
        sync_dir(&self.log_path)?;
        self.log = OpenOptions::new().append(true).open(&self.log_path)?;
        self.trims = 0;
        Ok(())
    }

    fn write_meta(&self) -> Result<(), SimError> {
        let mut b = Vec::with_capacity(META_LEN + 4);
        b.extend_from_slice(&self.next_seq.to_be_bytes());
        b.extend_from_slice(&self.acked.to_be_bytes());
        b.extend_from_slice(&self.hello_counter.to_be_bytes());
        let crc = crc32fast::hash(&b);
        b.extend_from_slice(&crc.to_be_bytes());
        let tmp = self.meta_path.with_extension("meta.tmp");
        {
            let mut f = File::create(&tmp)?;
            f.write_all(&b)?;
            f.sync_all()?;
        }
        std::fs::rename(&tmp, &self.meta_path)?;
        sync_dir(&self.meta_path)?;
        Ok(())
    }
}
