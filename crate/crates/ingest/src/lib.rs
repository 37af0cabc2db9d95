//! Center-side ingestion: device sessions, cumulative acknowledgement,
//! write-ahead logging and 10-minute rollups.

mod center;
mod rollup;
pub mod server;
mod session;
mod txlease;
pub mod wal;

use std::path::PathBuf;

use gridmon_core::wire::{FrameType, WireError};
use gridmon_store::StoreError;

pub use center::{Center, CenterConfig, CounterSnapshot, FrameOutcome, ImportReport, ReplayStats};
pub use session::{SessionState, MAX_PENDING};
pub use wal::{Wal, WalEntry};

/// ERR frame code for a payload that authenticated but did not decode.
pub const ERR_DECODE_FAILED: u8 = 1;

pub const DEFAULT_INGEST_PORT: u16 = 7450;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("wal io: {0}")]
    WalIo(#[source] std::io::Error),
    #[error("corrupt wal {} at byte {offset}", path.display())]
    CorruptWal { path: PathBuf, offset: u64 },
    #[error("payload decode failed: {0}")]
    DecodeFailed(WireError),
    #[error("unknown device {0}")]
    UnknownDevice(u32),
    #[error("frame type {0:?} is not accepted here")]
    UnexpectedFrame(FrameType),
    #[error("seq {0} outside the acceptance window")]
    SeqRejected(u64),
    #[error(transparent)]
    Store(#[from] StoreError),
}
