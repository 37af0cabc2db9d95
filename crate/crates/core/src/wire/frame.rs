use aes_gcm::aead::{Aead, KeyInit, Payload};
use aes_gcm::{Aes128Gcm, Nonce};

use super::{DeviceKey, WireError};

pub const MAGIC: [u8; 4] = *b"EMON";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 22;
pub const TAG_LEN: usize = 16;
/// Upper bound on a sealed payload; anything larger is treated as garbage.
pub const MAX_PAYLOAD_LEN: u32 = 4 << 20;

/// Device-to-center stream frames (DATA, EVENT) use sequences below this.
pub const DATA_SEQ_LIMIT: u64 = 1 << 62;
/// Namespace bit for device HELLO frames, which live outside the data stream.
pub const HELLO_SEQ_BIT: u64 = 1 << 62;
/// Namespace bit for center-to-device frames sealed with the same key.
pub const CENTER_SEQ_BIT: u64 = 1 << 63;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrameType {
    Hello = 1,
    Data = 2,
    Event = 3,
    Ack = 4,
    Err = 5,
}

impl FrameType {
    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            1 => FrameType::Hello,
            2 => FrameType::Data,
            3 => FrameType::Event,
            4 => FrameType::Ack,
            5 => FrameType::Err,
            _ => return None,
        })
    }

    pub fn code(self) -> u8 {
        self as u8
    }
}

/// Plaintext, authenticated frame header.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FrameHeader {
    pub frame_type: FrameType,
    pub device_id: u32,
    pub seq: u64,
    /// Ciphertext length including the 16-byte tag.
    pub payload_len: u32,
}

impl FrameHeader {
    pub fn new(frame_type: FrameType, device_id: u32, seq: u64) -> Self {
        FrameHeader {
            frame_type,
            device_id,
            seq,
            payload_len: TAG_LEN as u32,
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut b = [0u8; HEADER_LEN];
        b[0..4].copy_from_slice(&MAGIC);
        b[4] = VERSION;
        b[5] = self.frame_type.code();
        b[6..10].copy_from_slice(&self.device_id.to_be_bytes());
        b[10..18].copy_from_slice(&self.seq.to_be_bytes());
        b[18..22].copy_from_slice(&self.payload_len.to_be_bytes());
        b
    }

    /// Parses and range-checks a header without touching the payload.
    pub fn parse(b: &[u8]) -> Result<Self, WireError> {
        if b.len() < HEADER_LEN {
            return Err(WireError::Truncated);
        }
        if b[0..4] != MAGIC {
            return Err(WireError::BadMagic);
        }
        if b[4] != VERSION {
            return Err(WireError::BadVersion(b[4]));
        }
        let frame_type = FrameType::from_code(b[5]).ok_or(WireError::BadFrameType(b[5]))?;
        let payload_len = u32::from_be_bytes(b[18..22].try_into().unwrap());
        if !(TAG_LEN as u32..=MAX_PAYLOAD_LEN).contains(&payload_len) {
            return Err(WireError::BadLength(payload_len));
        }
        Ok(FrameHeader {
            frame_type,
            device_id: u32::from_be_bytes(b[6..10].try_into().unwrap()),
            seq: u64::from_be_bytes(b[10..18].try_into().unwrap()),
            payload_len,
        })
    }

    /// Total sealed frame size.
    pub fn frame_len(&self) -> usize {
        HEADER_LEN + self.payload_len as usize
    }
}

/// 96-bit nonce: device id then sequence, both big-endian.
pub fn frame_nonce(device_id: u32, seq: u64) -> [u8; 12] {
    let mut n = [0u8; 12];
    n[0..4].copy_from_slice(&device_id.to_be_bytes());
    n[4..12].copy_from_slice(&seq.to_be_bytes());
    n
}

/// Seals `payload` under `key`. The header's `payload_len` is set from the
/// payload; the whole header is bound as associated data.
///
/// The caller owns nonce freshness: `(device_id, seq)` must never repeat
/// under one key.
pub fn seal_frame(header: FrameHeader, payload: &[u8], key: &DeviceKey) -> Vec<u8> {
    let mut header = header;
    header.payload_len = u32::try_from(payload.len() + TAG_LEN).expect("payload exceeds u32");
    let head = header.to_bytes();
    let cipher = Aes128Gcm::new(&key.0.into());
    let nonce = frame_nonce(header.device_id, header.seq);
    let sealed = cipher
        .encrypt(
            &Nonce::from(nonce),
            Payload {
                msg: payload,
                aad: &head,
            },
        )
        .expect("AES-GCM encryption of a bounded payload cannot fail");
    let mut out = Vec::with_capacity(HEADER_LEN + sealed.len());
    out.extend_from_slice(&head);
    out.extend_from_slice(&sealed);
    out
}

/// Parses and authenticates one complete frame. `bytes` must hold exactly
/// one frame.
pub fn open_frame<F>(bytes: &[u8], key_lookup: F) -> Result<(FrameHeader, Vec<u8>), WireError>
where
    F: FnOnce(u32) -> Option<DeviceKey>,
{
    let header = FrameHeader::parse(bytes)?;
    if bytes.len() < header.frame_len() {
        return Err(WireError::Truncated);
    }
    if bytes.len() > header.frame_len() {
        return Err(WireError::BadLength(header.payload_len));
    }
    let key = key_lookup(header.device_id).ok_or(WireError::UnknownDevice(header.device_id))?;
    let cipher = Aes128Gcm::new(&key.0.into());
    let nonce = frame_nonce(header.device_id, header.seq);
    let plain = cipher
        .decrypt(
            &Nonce::from(nonce),
            Payload {
                msg: &bytes[HEADER_LEN..],
                aad: &bytes[..HEADER_LEN],
            },
        )
        .map_err(|_| WireError::AuthFailed)?;
    Ok((header, plain))
}
