//! Storage for power-quality records and events.
//!
//! Recent data lives in memory ([`TieredStore`]'s hot tier); older data is
//! demoted into immutable, checksummed segment files on disk. Both tiers sit
//! behind one query interface. Durability of not-yet-demoted data is the
//! caller's job (the ingest write-ahead log).

mod events;
pub mod segment;
mod tiered;

use std::path::PathBuf;

pub use events::EventStore;
pub use segment::{segment_write, Segment};
pub use tiered::{PendingDemotion, TieredStore, DAY_MS};

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("store io: {0}")]
    Io(#[from] std::io::Error),
    #[error("segment magic mismatch")]
    BadMagic,
    #[error("segment checksum mismatch")]
    CrcMismatch,
    #[error("segment footer is inconsistent")]
    BadFooter,
    #[error("unsupported segment version {0}")]
    UnsupportedVersion(u8),
    #[error("segment {}: {source}", path.display())]
    Segment {
        path: PathBuf,
        source: Box<StoreError>,
    },
    #[error("refusing to write an empty segment")]
    EmptySegment,
    #[error("unknown point {0}")]
    UnknownPoint(u32),
    #[error("retention must keep at least one day")]
    InvalidRetention,
    #[error("event log corrupt at byte {offset}")]
    CorruptEventLog { offset: u64 },
}
