use std::net::SocketAddr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use gridmon_core::wire::{
    decode_err, decode_u64, open_frame, read_frame, seal_frame, FrameHeader, FrameType, CENTER_SEQ_BIT,
};
use tokio::io::AsyncWriteExt;
use tokio::net::tcp::OwnedWriteHalf;
use tokio::net::TcpStream;
use tokio::sync::watch;
use tokio::task::JoinHandle;
use tracing::{debug, warn};

use crate::device::Device;
use crate::SimError;

const HELLO_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LinkStats {
    pub connects: u64,
    pub failed_connects: u64,
    pub frames_sent: u64,
    /// Frames sent again after a reconnect.
    pub frames_resent: u64,
    pub err_frames: u64,
    /// HELLO replies below an ack this device had already seen. Any
    /// nonzero value means the center lost acknowledged data.
    pub hello_regressions: u64,
    pub max_ack_seen: u64,
}

impl std::ops::AddAssign for LinkStats {
    fn add_assign(&mut self, o: Self) {
        self.connects += o.connects;
        self.failed_connects += o.failed_connects;
        self.frames_sent += o.frames_sent;
        self.frames_resent += o.frames_resent;
        self.err_frames += o.err_frames;
        self.hello_regressions += o.hello_regressions;
        self.max_ack_seen = self.max_ack_seen.max(o.max_ack_seen);
    }
}

struct Conn {
    writer: OwnedWriteHalf,
    acks: watch::Receiver<u64>,
    reader: JoinHandle<()>,
}

impl Drop for Conn {
    fn drop(&mut self) {
        self.reader.abort();
    }
}

/// A device's connection to the center. Owns nothing durable: everything
/// it sends comes from the device journal, so it can be dropped any time.
pub struct DeviceLink {
    addr: SocketAddr,
    conn: Option<Conn>,
    sent_upto: u64,
    errs: Arc<AtomicU64>,
    stats: LinkStats,
}

impl DeviceLink {
    pub fn new(addr: SocketAddr) -> Self {
        DeviceLink {
            addr,
            conn: None,
            sent_upto: 0,
            errs: Arc::new(AtomicU64::new(0)),
            stats: LinkStats::default(),
        }
    }

    pub fn stats(&self) -> LinkStats {
        let mut s = self.stats;
        s.err_frames = self.errs.load(Ordering::Relaxed);
        s
    }

    pub fn is_connected(&self) -> bool {
        self.conn.as_ref().is_some_and(|c| !c.reader.is_finished())
    }

    pub fn disconnect(&mut self) {
        self.conn = None;
    }

    /// Connects, exchanges HELLO, trims the journal to the center's answer
    /// and resends everything above it. Returns `Ok(false)` when the center
    /// could not be reached.
    pub async fn connect(&mut self, dev: &mut Device) -> Result<bool, SimError> {
        self.conn = None;
        let stream = match TcpStream::connect(self.addr).await {
            Ok(s) => s,
            Err(e) => {
                debug!(device = dev.id(), error = %e, "connect failed");
                self.stats.failed_connects += 1;
                return Ok(false);
            }
        };
        let _ = stream.set_nodelay(true);
        let (mut rd, mut wr) = stream.into_split();
        let hello_seq = dev.journal_mut().next_hello_seq()?;
        let hello = seal_frame(FrameHeader::new(FrameType::Hello, dev.id(), hello_seq), &[], &dev.key());
        if wr.write_all(&hello).await.is_err() {
            self.stats.failed_connects += 1;
            return Ok(false);
        }
        let key = dev.key();
        let reply = tokio::time::timeout(HELLO_TIMEOUT, read_frame(&mut rd)).await;
        let cum = match reply {
            Ok(Ok(Some(bytes))) => match open_frame(&bytes, |_| Some(key)) {
                Ok((h, p)) if h.frame_type == FrameType::Ack && h.seq & CENTER_SEQ_BIT != 0 => {
                    decode_u64(&p).ok()
                }
                _ => None,
            },
            _ => None,
        };
        let Some(cum) = cum else {
            self.stats.failed_connects += 1;
            return Ok(false);
        };
        self.stats.connects += 1;
        if cum < self.stats.max_ack_seen {
            warn!(device = dev.id(), cum, seen = self.stats.max_ack_seen, "center forgot acknowledged frames");
            self.stats.hello_regressions += 1;
        }
        self.note_ack(dev, cum)?;
        dev.journal_mut().skip_to(cum)?;

        let (tx, acks) = watch::channel(cum);
        let errs = self.errs.clone();
        let device_id = dev.id();
        let reader = tokio::spawn(async move {
            while let Ok(Some(bytes)) = read_frame(&mut rd).await {
                let Ok((h, p)) = open_frame(&bytes, |_| Some(key)) else {
                    warn!(device = device_id, "unauthenticated frame from center");
                    return;
                };
                if h.seq & CENTER_SEQ_BIT == 0 {
                    return;
                }
                match h.frame_type {
                    FrameType::Ack => {
                        if let Ok(c) = decode_u64(&p) {
                            tx.send_if_modified(|v| {
                                let bigger = c > *v;
                                if bigger {
                                    *v = c;
                                }
                                bigger
                            });
                        }
                    }
                    FrameType::Err => {
                        errs.fetch_add(1, Ordering::Relaxed);
                        if let Ok((seq, code)) = decode_err(&p) {
                            warn!(device = device_id, seq, code, "center rejected frame");
                        }
                    }
                    _ => {}
                }
            }
        });
        self.conn = Some(Conn {
            writer: wr,
            acks,
            reader,
        });

        // everything above the center's boundary goes out again
        self.sent_upto = cum;
        let before = self.stats.frames_sent;
        self.send_pending(dev).await;
        self.stats.frames_resent += self.stats.frames_sent - before;
        Ok(true)
    }

    fn note_ack(&mut self, dev: &mut Device, cum: u64) -> Result<(), SimError> {
        self.stats.max_ack_seen = self.stats.max_ack_seen.max(cum);
        dev.journal_mut().trim(cum)?;
        Ok(())
    }

    /// Applies the latest ack from the reader task to the journal.
    pub fn absorb_acks(&mut self, dev: &mut Device) -> Result<(), SimError> {
        let latest = match &self.conn {
            Some(c) => *c.acks.borrow(),
            None => return Ok(()),
        };
        if latest > dev.journal().acked() {
            self.note_ack(dev, latest)?;
        }
        Ok(())
    }

    /// Sends journal entries not yet written on this connection.
    pub async fn send_pending(&mut self, dev: &mut Device) {
        let Some(conn) = &mut self.conn else { return };
        let mut buf = Vec::new();
        let mut last = self.sent_upto;
        let mut n = 0;
        for e in dev.journal().replay(self.sent_upto) {
            buf.extend_from_slice(&e.frame);
            last = e.seq;
            n += 1;
        }
        if n == 0 {
            return;
        }
        match conn.writer.write_all(&buf).await {
            Ok(()) => {
                self.sent_upto = last;
                self.stats.frames_sent += n;
            }
            Err(e) => {
                debug!(device = dev.id(), error = %e, "send failed");
                self.conn = None;
            }
        }
    }

    /// Waits until every journaled frame is acknowledged, reconnecting as
    /// needed.
    pub async fn drain(&mut self, dev: &mut Device, timeout: Duration, backoff: Duration) -> Result<(), SimError> {
        let deadline = tokio::time::Instant::now() + timeout;
        loop {
            self.absorb_acks(dev)?;
            if dev.journal().unacked() == 0 {
                return Ok(());
            }
            if tokio::time::Instant::now() >= deadline {
                return Err(SimError::DrainTimeout(dev.id()));
            }
            if !self.is_connected() {
                if !self.connect(dev).await? {
                    tokio::time::sleep(backoff).await;
                }
                continue;
            }
            self.send_pending(dev).await;
            let conn = self.conn.as_mut().expect("connected");
            let _ = tokio::time::timeout(backoff, conn.acks.changed()).await;
        }
    }
}
