//! Device/center wire protocol.
//!
//! A frame is a 22-byte plaintext header followed by an AES-128-GCM sealed
//! payload. The header travels in clear so routing fields can be read before
//! decryption, and it is bound as associated data so it cannot be altered.
//!
//! ```text
//! magic "EMON" | version u8 | type u8 | device_id u32 | seq u64 | payload_len u32 | ciphertext‖tag
//! ```
//!
//! Nonces are `device_id ‖ seq`. Three disjoint sequence namespaces share a
//! device key: data/event frames (`seq < 2^62`), device HELLOs (bit 62 set)
//! and center-to-device frames (bit 63 set).

mod batch;
mod frame;
#[cfg(feature = "async")]
mod io;
mod keys;

pub use batch::{
    decode_batch, decode_err, decode_event, decode_event_batch, decode_record, decode_u64,
    encode_batch, encode_err, encode_event, encode_event_batch, encode_record, encode_u64,
    record_ts, EVENT_LEN, MAX_BATCH_RECORDS, RECORD_LEN,
};
pub use frame::{
    frame_nonce, open_frame, seal_frame, FrameHeader, FrameType, CENTER_SEQ_BIT, DATA_SEQ_LIMIT,
    HEADER_LEN, HELLO_SEQ_BIT, MAGIC, MAX_PAYLOAD_LEN, TAG_LEN, VERSION,
};
#[cfg(feature = "async")]
pub use io::{buffered_frame_len, read_frame, ReadFrameError};
pub use keys::{DeviceKey, KeyFileError, KeyRing};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum WireError {
    #[error("bad magic")]
    BadMagic,
    #[error("unsupported version {0}")]
    BadVersion(u8),
    #[error("unknown frame type {0}")]
    BadFrameType(u8),
    #[error("frame length {0} out of range")]
    BadLength(u32),
    #[error("unknown device {0}")]
    UnknownDevice(u32),
    #[error("authentication failed")]
    AuthFailed,
    #[error("truncated input")]
    Truncated,
    #[error("bad resolution code {0}")]
    BadResolutionCode(u8),
    #[error("bad event type {0}")]
    BadEventType(u8),
    #[error("declared count does not match payload length")]
    CountMismatch,
    #[error("batch of {0} items exceeds the limit")]
    BatchTooLarge(usize),
}
