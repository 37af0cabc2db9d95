//! Per-stream write-ahead log.
//!
//! Entry layout: `len u32 | seq u64 | frame_type u8 | payload | crc32`, where
//! `len` counts `seq..payload` and the CRC covers everything before it.

use std::fs::{File, OpenOptions};
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use gridmon_core::wire::{FrameType, MAX_PAYLOAD_LEN};
use tracing::warn;

use crate::IngestError;

const MIN_BODY: usize = 9;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WalEntry {
    pub seq: u64,
    pub frame_type: FrameType,
    pub payload: Vec<u8>,
}

pub fn encode_entry(seq: u64, frame_type: FrameType, payload: &[u8], out: &mut Vec<u8>) {
    let start = out.len();
    out.extend_from_slice(&((MIN_BODY + payload.len()) as u32).to_be_bytes());
    out.extend_from_slice(&seq.to_be_bytes());
    out.push(frame_type.code());
    out.extend_from_slice(payload);
    let crc = crc32fast::hash(&out[start..]);
    out.extend_from_slice(&crc.to_be_bytes());
}

/// Outcome of scanning raw log bytes.
#[derive(Debug, PartialEq, Eq)]
pub enum Scan {
    /// All entries valid; `valid_len` may be shorter than the input if the
    /// final entry was torn.
    Ok { entries: Vec<WalEntry>, valid_len: usize },
    Corrupt { offset: usize },
}

pub fn scan(bytes: &[u8]) -> Scan {
    let mut entries = Vec::new();
    let mut off = 0;
    while off < bytes.len() {
        let rest = &bytes[off..];
        match parse_entry(rest) {
            Some((entry, used)) => {
                entries.push(entry);
                off += used;
            }
            None => {
                // a bad entry is a torn tail only if nothing valid can follow it
                let declared = rest
                    .get(..4)
                    .map(|b| u32::from_be_bytes(b.try_into().unwrap()) as usize + 8);
                let reaches_end = match declared {
                    None => true,
                    Some(n) => n >= rest.len(),
                };
                if reaches_end {
                    return Scan::Ok { entries, valid_len: off };
                }
                return Scan::Corrupt { offset: off };
            }
        }
    }
    Scan::Ok { entries, valid_len: off }
}

fn parse_entry(b: &[u8]) -> Option<(WalEntry, usize)> {
    let len = u32::from_be_bytes(b.get(..4)?.try_into().ok()?) as usize;
    if !(MIN_BODY..=MIN_BODY + MAX_PAYLOAD_LEN as usize).contains(&len) {
        return None;
    }
    let total = 4 + len + 4;
    let raw = b.get(..total)?;
    let crc = u32::from_be_bytes(raw[4 + len..].try_into().ok()?);
    if crc32fast::hash(&raw[..4 + len]) != crc {
        return None;
    }
    let seq = u64::from_be_bytes(raw[4..12].try_into().ok()?);
    let frame_type = FrameType::from_code(raw[12])?;
    Some((
        WalEntry {
            seq,
            frame_type,
            payload: raw[13..4 + len].to_vec(),
        },
        total,
    ))
}

/// An open log. Appends are buffered until [`Wal::commit`], which writes and
/// (optionally) fsyncs them as one group.
pub struct Wal {
    path: PathBuf,
    file: File,
    buf: Vec<u8>,
    len: u64,
    fsync: bool,
}

impl Wal {
    /// Opens or creates the log and returns its valid entries. A torn final
    /// entry is truncated away; damage before the tail is `CorruptWal`.
    pub fn open(path: impl AsRef<Path>, fsync: bool) -> Result<(Wal, Vec<WalEntry>), IngestError> {
        let path = path.as_ref().to_path_buf();
        let existed = path.exists();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(&path)
            .map_err(IngestError::WalIo)?;
        if !existed && fsync {
            if let Some(dir) = path.parent() {
                File::open(dir).and_then(|d| d.sync_all()).map_err(IngestError::WalIo)?;
            }
        }
        let mut bytes = Vec::new();
        file.read_to_end(&mut bytes).map_err(IngestError::WalIo)?;
        let (entries, valid_len) = match scan(&bytes) {
            Scan::Ok { entries, valid_len } => (entries, valid_len),
            Scan::Corrupt { offset } => {
                return Err(IngestError::CorruptWal {
                    path,
                    offset: offset as u64,
                })
            }
        };
        if valid_len < bytes.len() {
            warn!(path = %path.display(), dropped = bytes.len() - valid_len, "truncating torn wal tail");
            file.set_len(valid_len as u64).map_err(IngestError::WalIo)?;
            file.sync_all().map_err(IngestError::WalIo)?;
        }
        use std::io::Seek;
        file.seek(std::io::SeekFrom::Start(valid_len as u64))
            .map_err(IngestError::WalIo)?;
        Ok((
            Wal {
                path,
                file,
                buf: Vec::new(),
                len: valid_len as u64,
                fsync,
            },
            entries,
        ))
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Durable length in bytes.
    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0 && self.buf.is_empty()
    }

    pub fn append(&mut self, seq: u64, frame_type: FrameType, payload: &[u8]) {
        encode_entry(seq, frame_type, payload, &mut self.buf);
    }

    /// Writes buffered entries and syncs them. On failure the file is cut
    /// back to its last durable length and the buffer discarded.
    pub fn commit(&mut self) -> std::io::Result<()> {
        if self.buf.is_empty() {
            return Ok(());
        }
        let res = self.file.write_all(&self.buf).and_then(|_| {
            if self.fsync {
                self.file.sync_data()
            } else {
                Ok(())
            }
        });
        match res {
            Ok(()) => {
                self.len += self.buf.len() as u64;
                self.buf.clear();
                Ok(())
            }
            Err(e) => {
                self.buf.clear();
                use std::io::Seek;
                let _ = self.file.set_len(self.len);
                let _ = self.file.seek(std::io::SeekFrom::Start(self.len));
                Err(e)
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(seq: u64, n: usize) -> WalEntry {
        WalEntry {
            seq,
            frame_type: FrameType::Data,
            payload: vec![seq as u8; n],
        }
    }

    fn write(path: &Path, entries: &[WalEntry]) {
        let (mut w, _) = Wal::open(path, true).unwrap();
        for e in entries {
            w.append(e.seq, e.frame_type, &e.payload);
        }
        w.commit().unwrap();
    }

    #[test]
    fn empty_wal_is_empty_state() {
        let d = tempfile::tempdir().unwrap();
        let (w, entries) = Wal::open(d.path().join("1.wal"), true).unwrap();
        assert!(entries.is_empty());
        assert!(w.is_empty());
    }

    #[test]
    fn round_trip_and_append_after_reopen() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("1.wal");
        write(&p, &[entry(1, 10), entry(2, 0)]);
        write(&p, &[entry(3, 5)]);
        let (_, got) = Wal::open(&p, true).unwrap();
        assert_eq!(got, vec![entry(1, 10), entry(2, 0), entry(3, 5)]);
    }

    #[test]
    fn every_truncation_point_drops_only_the_final_entry() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("1.wal");
        let all = [entry(1, 7), entry(2, 30), entry(3, 12)];
        write(&p, &all);
        let full = std::fs::read(&p).unwrap();
        let mut sizes = Vec::new();
        let mut buf = Vec::new();
        for e in &all {
            encode_entry(e.seq, e.frame_type, &e.payload, &mut buf);
            sizes.push(buf.len());
        }
        for cut in sizes[1]..full.len() {
            std::fs::write(&p, &full[..cut]).unwrap();
            let (w, got) = Wal::open(&p, true).unwrap();
            assert_eq!(got, all[..2].to_vec(), "cut at {cut}");
            assert_eq!(w.len(), sizes[1] as u64);
            assert_eq!(std::fs::metadata(&p).unwrap().len(), sizes[1] as u64);
        }
    }

    #[test]
    fn flipped_tail_byte_is_torn_but_flipped_middle_is_corrupt() {
        let d = tempfile::tempdir().unwrap();
        let p = d.path().join("1.wal");
        write(&p, &[entry(1, 7), entry(2, 7), entry(3, 7)]);
        let full = std::fs::read(&p).unwrap();

        let mut tail = full.clone();
        *tail.last_mut().unwrap() ^= 1;
        std::fs::write(&p, &tail).unwrap();
        assert_eq!(Wal::open(&p, true).unwrap().1.len(), 2);

        let mut mid = full.clone();
        mid[10] ^= 1;
        std::fs::write(&p, &mid).unwrap();
        assert!(matches!(
            Wal::open(&p, true),
            Err(IngestError::CorruptWal { offset: 0, .. })
        ));
    }
}
