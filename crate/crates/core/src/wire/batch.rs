//! Payload codecs. Everything is big-endian and fixed-width.

use crate::model::{BaseRecord, EventType, PQEvent, RecordFlags, Resolution, PARAM_COUNT};

use super::WireError;

/// point_id u32 | ts_ms u64 | resolution u8 | flags u8 | values f64 × 15.
pub const RECORD_LEN: usize = 4 + 8 + 1 + 1 + 8 * PARAM_COUNT;
/// point_id u32 | type u8 | phase_mask u8 | start u64 | end u64 | extreme f64.
pub const EVENT_LEN: usize = 30;
pub const MAX_BATCH_RECORDS: usize = 500;

pub fn encode_record(r: &BaseRecord, out: &mut Vec<u8>) {
    out.extend_from_slice(&r.point_id.to_be_bytes());
    out.extend_from_slice(&r.ts_ms.to_be_bytes());
    out.push(r.resolution.code());
    out.push(r.flags.bits());
    for v in r.values() {
        out.extend_from_slice(&v.to_be_bytes());
    }
}

/// Decodes one record from the first [`RECORD_LEN`] bytes of `b`.
pub fn decode_record(b: &[u8]) -> Result<BaseRecord, WireError> {
    if b.len() < RECORD_LEN {
        return Err(WireError::Truncated);
    }
    let resolution = Resolution::from_code(b[12]).ok_or(WireError::BadResolutionCode(b[12]))?;
    let mut r = BaseRecord::zeroed(
        u32::from_be_bytes(b[0..4].try_into().unwrap()),
        u64::from_be_bytes(b[4..12].try_into().unwrap()),
        resolution,
    );
    r.flags = RecordFlags::from_bits_retain(b[13]);
    let values: [f64; PARAM_COUNT] =
        std::array::from_fn(|i| f64::from_be_bytes(b[14 + 8 * i..22 + 8 * i].try_into().unwrap()));
    r.set_values(&values);
    Ok(r)
}

/// Timestamp of an encoded record, read without decoding the rest.
pub fn record_ts(b: &[u8]) -> u64 {
    u64::from_be_bytes(b[4..12].try_into().unwrap())
}

pub fn encode_batch(records: &[BaseRecord]) -> Result<Vec<u8>, WireError> {
    if records.len() > MAX_BATCH_RECORDS {
        return Err(WireError::BatchTooLarge(records.len()));
    }
    let mut out = Vec::with_capacity(2 + RECORD_LEN * records.len());
    out.extend_from_slice(&(records.len() as u16).to_be_bytes());
    for r in records {
        encode_record(r, &mut out);
    }
    Ok(out)
}

pub fn decode_batch(b: &[u8]) -> Result<Vec<BaseRecord>, WireError> {
    let count = read_count(b)?;
    if count > MAX_BATCH_RECORDS {
        return Err(WireError::CountMismatch);
    }
    let body = &b[2..];
    match body.len().cmp(&(count * RECORD_LEN)) {
        std::cmp::Ordering::Less => return Err(WireError::Truncated),
        std::cmp::Ordering::Greater => return Err(WireError::CountMismatch),
        std::cmp::Ordering::Equal => {}
    }
    body.chunks_exact(RECORD_LEN).map(decode_record).collect()
}

pub fn encode_event(e: &PQEvent, out: &mut Vec<u8>) {
    out.extend_from_slice(&e.point_id.to_be_bytes());
    out.push(e.event_type.code());
    out.push(e.phase_mask);
    out.extend_from_slice(&e.start_ms.to_be_bytes());
    out.extend_from_slice(&e.end_ms.to_be_bytes());
    out.extend_from_slice(&e.extreme_pu.to_be_bytes());
}

pub fn decode_event(b: &[u8]) -> Result<PQEvent, WireError> {
    if b.len() < EVENT_LEN {
        return Err(WireError::Truncated);
    }
    Ok(PQEvent {
        point_id: u32::from_be_bytes(b[0..4].try_into().unwrap()),
        event_type: EventType::from_code(b[4]).ok_or(WireError::BadEventType(b[4]))?,
        phase_mask: b[5],
        start_ms: u64::from_be_bytes(b[6..14].try_into().unwrap()),
        end_ms: u64::from_be_bytes(b[14..22].try_into().unwrap()),
        extreme_pu: f64::from_be_bytes(b[22..30].try_into().unwrap()),
    })
}

pub fn encode_event_batch(events: &[PQEvent]) -> Result<Vec<u8>, WireError> {
    let count = u16::try_from(events.len()).map_err(|_| WireError::BatchTooLarge(events.len()))?;
    let mut out = Vec::with_capacity(2 + EVENT_LEN * events.len());
    out.extend_from_slice(&count.to_be_bytes());
    for e in events {
        encode_event(e, &mut out);
    }
    Ok(out)
}

pub fn decode_event_batch(b: &[u8]) -> Result<Vec<PQEvent>, WireError> {
    let count = read_count(b)?;
    let body = &b[2..];
    match body.len().cmp(&(count * EVENT_LEN)) {
        std::cmp::Ordering::Less => return Err(WireError::Truncated),
        std::cmp::Ordering::Greater => return Err(WireError::CountMismatch),
        std::cmp::Ordering::Equal => {}
    }
    body.chunks_exact(EVENT_LEN).map(decode_event).collect()
}

fn read_count(b: &[u8]) -> Result<usize, WireError> {
    let head: [u8; 2] = b.get(..2).ok_or(WireError::Truncated)?.try_into().unwrap();
    Ok(u16::from_be_bytes(head) as usize)
}

/// HELLO and ACK payloads are a single big-endian u64.
pub fn encode_u64(v: u64) -> Vec<u8> {
    v.to_be_bytes().to_vec()
}

pub fn decode_u64(b: &[u8]) -> Result<u64, WireError> {
    let arr: [u8; 8] = b.try_into().map_err(|_| {
        if b.len() < 8 {
            WireError::Truncated
        } else {
            WireError::CountMismatch
        }
    })?;
    Ok(u64::from_be_bytes(arr))
}

/// ERR payload: rejected seq u64 | reason code u8.
pub fn encode_err(seq: u64, code: u8) -> Vec<u8> {
    let mut v = seq.to_be_bytes().to_vec();
    v.push(code);
    v
}

pub fn decode_err(b: &[u8]) -> Result<(u64, u8), WireError> {
    if b.len() != 9 {
        return Err(WireError::Truncated);
    }
    Ok((u64::from_be_bytes(b[..8].try_into().unwrap()), b[8]))
}
