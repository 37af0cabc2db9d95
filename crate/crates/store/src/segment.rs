//! Immutable, checksummed segment files for the disk tier.
//!
//! ```text
//! header : "EMSG" | version u8 = 1 | resolution u8 | min_ts u64 | max_ts u64 | point_count u32
//! body   : records sorted by (point_id, ts_ms), each in the wire record layout
//! footer : point_count × (point_id u32 | byte_offset u64 | row_count u32)
//!          | footer_offset u64 | crc32 u32 (over every preceding byte)
//! ```

use std::collections::HashMap;
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::os::unix::fs::FileExt;
use std::path::{Path, PathBuf};

use gridmon_core::wire::{decode_record, encode_record, record_ts, RECORD_LEN};
use gridmon_core::{BaseRecord, Resolution};

use crate::StoreError;

pub const SEGMENT_MAGIC: [u8; 4] = *b"EMSG";
pub const SEGMENT_VERSION: u8 = 1;
const HEADER_LEN: u64 = 4 + 1 + 1 + 8 + 8 + 4;
const INDEX_ENTRY_LEN: u64 = 4 + 8 + 4;
const TRAILER_LEN: u64 = 8 + 4;

/// Location of one point's rows inside a segment body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PointSpan {
    pub byte_offset: u64,
    pub row_count: u32,
    pub min_ts: u64,
    pub max_ts: u64,
}

/// Writes `rows` (sorted by point then timestamp, all at `resolution`) to
/// `path` and fsyncs it. The file appears under its final name only once
/// complete.
pub fn segment_write(path: &Path, resolution: Resolution, rows: &[BaseRecord]) -> Result<(), StoreError> {
    if rows.is_empty() {
        return Err(StoreError::EmptySegment);
    }
    debug_assert!(rows
        .windows(2)
        .all(|w| (w[0].point_id, w[0].ts_ms) < (w[1].point_id, w[1].ts_ms)));
    let min_ts = rows.iter().map(|r| r.ts_ms).min().unwrap_or(0);
    let max_ts = rows.iter().map(|r| r.ts_ms).max().unwrap_or(0);

    let mut index: Vec<(u32, u64, u32)> = Vec::new();
    let mut offset = HEADER_LEN;
    for r in rows {
        match index.last_mut() {
            Some((p, _, n)) if *p == r.point_id => *n += 1,
            _ => index.push((r.point_id, offset, 1)),
        }
        offset += RECORD_LEN as u64;
    }

    let tmp = path.with_extension("tmp");
    let file = File::create(&tmp)?;
    let mut crc = crc32fast::Hasher::new();
    let mut w = BufWriter::new(file);
    let mut put = |w: &mut BufWriter<File>, bytes: &[u8]| -> std::io::Result<()> {
        crc.update(bytes);
        w.write_all(bytes)
    };

    let mut head = Vec::with_capacity(HEADER_LEN as usize);
    head.extend_from_slice(&SEGMENT_MAGIC);
    head.push(SEGMENT_VERSION);
    head.push(resolution.code());
    head.extend_from_slice(&min_ts.to_be_bytes());
    head.extend_from_slice(&max_ts.to_be_bytes());
    head.extend_from_slice(&(index.len() as u32).to_be_bytes());
    put(&mut w, &head)?;

    let mut buf = Vec::with_capacity(RECORD_LEN);
    for r in rows {
        buf.clear();
        encode_record(r, &mut buf);
        put(&mut w, &buf)?;
    }
    let footer_offset = offset;
    let mut footer = Vec::with_capacity(index.len() * INDEX_ENTRY_LEN as usize + 8);
    for (p, off, n) in &index {
        footer.extend_from_slice(&p.to_be_bytes());
        footer.extend_from_slice(&off.to_be_bytes());
        footer.extend_from_slice(&n.to_be_bytes());
    }
    footer.extend_from_slice(&footer_offset.to_be_bytes());
    put(&mut w, &footer)?;
    let sum = crc.finalize();
    w.write_all(&sum.to_be_bytes())?;
    let file = w.into_inner().map_err(|e| e.into_error())?;
    file.sync_all()?;
    drop(file);
    fs::rename(&tmp, path)?;
    if let Some(dir) = path.parent() {
        File::open(dir)?.sync_all()?;
    }
    Ok(())
}

/// An opened, verified segment. Only the footer index is held in memory;
/// rows are read from disk on demand.
#[derive(Debug)]
pub struct Segment {
    path: PathBuf,
    file: File,
    resolution: Resolution,
    min_ts: u64,
    max_ts: u64,
    index: HashMap<u32, PointSpan>,
    rows: u64,
}

impl Segment {
    /// Opens `path`, verifying magic, checksum and footer consistency.
    pub fn open(path: &Path) -> Result<Self, StoreError> {
        let file = File::open(path)?;
        let len = file.metadata()?.len();
        if len < HEADER_LEN + TRAILER_LEN {
            return Err(StoreError::BadFooter);
        }

        let mut head = [0u8; HEADER_LEN as usize];
        file.read_exact_at(&mut head, 0)?;
        if head[0..4] != SEGMENT_MAGIC {
            return Err(StoreError::BadMagic);
        }

        // Checksum first: every later parse step trusts the bytes.
        let mut crc = crc32fast::Hasher::new();
        let mut reader = BufReader::with_capacity(1 << 16, (&file).take(len - 4));
        let mut chunk = vec![0u8; 1 << 16];
        loop {
            let n = reader.read(&mut chunk)?;
            if n == 0 {
                break;
            }
            crc.update(&chunk[..n]);
        }
        let mut stored = [0u8; 4];
        file.read_exact_at(&mut stored, len - 4)?;
        if crc.finalize() != u32::from_be_bytes(stored) {
            return Err(StoreError::CrcMismatch);
        }

        if head[4] != SEGMENT_VERSION {
            return Err(StoreError::UnsupportedVersion(head[4]));
        }
        let resolution = Resolution::from_code(head[5]).ok_or(StoreError::BadFooter)?;
        let min_ts = u64::from_be_bytes(head[6..14].try_into().unwrap());
        let max_ts = u64::from_be_bytes(head[14..22].try_into().unwrap());
        let point_count = u32::from_be_bytes(head[22..26].try_into().unwrap()) as u64;

        let mut fo = [0u8; 8];
        file.read_exact_at(&mut fo, len - TRAILER_LEN)?;
        let footer_offset = u64::from_be_bytes(fo);
        let body_len = footer_offset.checked_sub(HEADER_LEN).ok_or(StoreError::BadFooter)?;
        if footer_offset + point_count * INDEX_ENTRY_LEN + TRAILER_LEN != len
            || body_len % RECORD_LEN as u64 != 0
        {
            return Err(StoreError::BadFooter);
        }

        let mut footer = vec![0u8; (point_count * INDEX_ENTRY_LEN) as usize];
        file.read_exact_at(&mut footer, footer_offset)?;
        let mut index = HashMap::with_capacity(point_count as usize);
        let mut expected_offset = HEADER_LEN;
        let mut ts = [0u8; RECORD_LEN];
        for e in footer.chunks_exact(INDEX_ENTRY_LEN as usize) {
            let point = u32::from_be_bytes(e[0..4].try_into().unwrap());
            let byte_offset = u64::from_be_bytes(e[4..12].try_into().unwrap());
            let row_count = u32::from_be_bytes(e[12..16].try_into().unwrap());
            if byte_offset != expected_offset || row_count == 0 {
                return Err(StoreError::BadFooter);
            }
            expected_offset += row_count as u64 * RECORD_LEN as u64;
            if expected_offset > footer_offset {
                return Err(StoreError::BadFooter);
            }
            file.read_exact_at(&mut ts, byte_offset)?;
            let first = record_ts(&ts);
            file.read_exact_at(&mut ts, expected_offset - RECORD_LEN as u64)?;
            let last = record_ts(&ts);
            let span = PointSpan {
                byte_offset,
                row_count,
                min_ts: first,
                max_ts: last,
            };
            if index.insert(point, span).is_some() {
                return Err(StoreError::BadFooter);
            }
        }
        if expected_offset != footer_offset {
            return Err(StoreError::BadFooter);
        }

        Ok(Segment {
            path: path.to_path_buf(),
            file,
            resolution,
            min_ts,
            max_ts,
            index,
            rows: body_len / RECORD_LEN as u64,
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn min_ts(&self) -> u64 {
        self.min_ts
    }

    pub fn max_ts(&self) -> u64 {
        self.max_ts
    }

    pub fn row_count(&self) -> u64 {
        self.rows
    }

    pub fn span(&self, point_id: u32) -> Option<PointSpan> {
        self.index.get(&point_id).copied()
    }

    pub fn points(&self) -> impl Iterator<Item = u32> + '_ {
        self.index.keys().copied()
    }

    /// Rows of `point_id` with `from_ms <= ts < to_ms`, ascending.
    pub fn read(&self, point_id: u32, from_ms: u64, to_ms: u64) -> Result<Vec<BaseRecord>, StoreError> {
        let Some(span) = self.index.get(&point_id) else {
            return Ok(Vec::new());
        };
        if from_ms >= to_ms || span.max_ts < from_ms || span.min_ts >= to_ms {
            return Ok(Vec::new());
        }
        let mut block = vec![0u8; span.row_count as usize * RECORD_LEN];
        self.file.read_exact_at(&mut block, span.byte_offset)?;
        let rows: Vec<&[u8]> = block.chunks_exact(RECORD_LEN).collect();
        let start = rows.partition_point(|r| record_ts(r) < from_ms);
        rows[start..]
            .iter()
            .take_while(|r| record_ts(r) < to_ms)
            .map(|r| decode_record(r).map_err(|_| StoreError::BadFooter))
            .collect()
    }

    /// Every row in file order.
    pub fn read_all(&self) -> Result<Vec<BaseRecord>, StoreError> {
        let mut spans: Vec<(u32, PointSpan)> = self.index.iter().map(|(p, s)| (*p, *s)).collect();
        spans.sort_by_key(|(_, s)| s.byte_offset);
        let mut out = Vec::with_capacity(self.rows as usize);
        for (p, _) in spans {
            out.extend(self.read(p, 0, u64::MAX)?);
        }
        Ok(out)
    }
}

/// File name for the `seq`-th segment at `resolution`.
pub fn segment_file_name(resolution: Resolution, min_ts: u64, seq: u64) -> String {
    format!("seg-{}-{}-{}.emsg", resolution.label(), min_ts, seq)
}

/// Extracts the sequence number from a segment file name.
pub fn parse_segment_seq(name: &str) -> Option<u64> {
    let stem = name.strip_prefix("seg-")?.strip_suffix(".emsg")?;
    stem.rsplit('-').next()?.parse().ok()
}
