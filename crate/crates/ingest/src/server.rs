//! TCP front end: one task per device connection.

use std::sync::Arc;

use gridmon_core::wire::{
    buffered_frame_len, encode_err, encode_u64, open_frame, read_frame, FrameHeader, FrameType,
    WireError,
};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tracing::{debug, warn};

use crate::{Center, FrameOutcome, ERR_DECODE_FAILED};

/// Frames drained from the socket buffer into one WAL group.
const MAX_GROUP: usize = 64;

/// Accepts device connections until the task is dropped.
pub async fn serve(listener: TcpListener, center: Arc<Center>) -> std::io::Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let _ = stream.set_nodelay(true);
        let center = center.clone();
        tokio::spawn(async move {
            if let Err(e) = handle_connection(stream, center).await {
                debug!(%peer, error = %e, "session closed");
            }
        });
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SessionError {
    #[error(transparent)]
    Read(#[from] gridmon_core::wire::ReadFrameError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("frame rejected: {0}")]
    Wire(#[from] WireError),
    #[error("session bound to device {bound}, got frame for {got}")]
    DeviceMismatch { bound: u32, got: u32 },
    #[error(transparent)]
    Ingest(#[from] crate::IngestError),
}

pub async fn handle_connection(stream: TcpStream, center: Arc<Center>) -> Result<(), SessionError> {
    let (rd, mut wr) = stream.into_split();
    let mut rd = BufReader::with_capacity(256 * 1024, rd);
    let mut bound: Option<u32> = None;

    while let Some(first) = read_frame(&mut rd).await? {
        let mut raw = vec![first];
        while raw.len() < MAX_GROUP {
            let Some(n) = buffered_frame_len(rd.buffer()) else { break };
            raw.push(rd.buffer()[..n].to_vec());
            rd.consume(n);
        }

        let mut replies = Vec::new();
        let mut batch: Vec<(FrameHeader, Vec<u8>)> = Vec::new();
        for bytes in raw {
            let (h, payload) = match open_frame(&bytes, |id| center.key(id)) {
                Ok(v) => v,
                Err(e) => {
                    center.note_auth_failure();
                    warn!(error = %e, "closing session on unauthenticated frame");
                    flush_batch(&center, &mut batch, &mut replies).await?;
                    wr.write_all(&replies).await?;
                    return Err(e.into());
                }
            };
            let device = *bound.get_or_insert(h.device_id);
            if h.device_id != device {
                return Err(SessionError::DeviceMismatch {
                    bound: device,
                    got: h.device_id,
                });
            }
            match h.frame_type {
                FrameType::Hello => {
                    flush_batch(&center, &mut batch, &mut replies).await?;
                    let c = center.clone();
                    let reply = tokio::task::spawn_blocking(move || -> Result<Vec<u8>, crate::IngestError> {
                        let cum = c.hello(device)?;
                        c.seal_to_device(device, FrameType::Ack, &encode_u64(cum))
                    })
                    .await
                    .expect("hello task")?;
                    replies.extend_from_slice(&reply);
                }
                FrameType::Data | FrameType::Event => batch.push((h, payload)),
                FrameType::Ack | FrameType::Err => {
                    debug!(device, "ignoring center-bound {:?}", h.frame_type);
                }
            }
        }
        flush_batch(&center, &mut batch, &mut replies).await?;
        if !replies.is_empty() {
            wr.write_all(&replies).await?;
        }
    }
    Ok(())
}

async fn flush_batch(
    center: &Arc<Center>,
    batch: &mut Vec<(FrameHeader, Vec<u8>)>,
    replies: &mut Vec<u8>,
) -> Result<(), SessionError> {
    if batch.is_empty() {
        return Ok(());
    }
    let frames = std::mem::take(batch);
    let c = center.clone();
    let out = tokio::task::spawn_blocking(move || -> Result<Vec<u8>, crate::IngestError> {
        let device = frames[0].0.device_id;
        let outcomes = c.process_frames(device, &frames)?;
        let mut out = Vec::new();
        for ((h, _), o) in frames.iter().zip(outcomes) {
            match o {
                FrameOutcome::Ack(cum) => {
                    out.extend(c.seal_to_device(device, FrameType::Ack, &encode_u64(cum))?)
                }
                FrameOutcome::Rejected(_) => out.extend(c.seal_to_device(
                    device,
                    FrameType::Err,
                    &encode_err(h.seq, ERR_DECODE_FAILED),
                )?),
                FrameOutcome::Deferred => {}
            }
        }
        Ok(out)
    })
    .await
    .expect("ingest task")?;
    replies.extend(out);
    Ok(())
}
