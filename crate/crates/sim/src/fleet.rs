use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gridmon_core::clock::VirtualClock;
use gridmon_core::wire::KeyRing;
use tokio::sync::{mpsc, watch};
use tracing::info;

use crate::device::Device;
use crate::link::{DeviceLink, LinkStats};
use crate::scenario::Scenario;
use crate::SimError;

/// How simulated seconds map to real time.
#[derive(Clone)]
pub enum Pacing {
    /// Seconds advance as fast as every device can step; the shared clock is
    /// moved to the end of each simulated second.
    Virtual(Arc<VirtualClock>),
    /// `speed` simulated seconds per wall second.
    Wall { speed: f64 },
}

#[derive(Clone)]
pub struct FleetConfig {
    pub server: SocketAddr,
    pub keys: KeyRing,
    pub journal_dir: PathBuf,
    pub pacing: Pacing,
    pub fsync: bool,
    pub drain_timeout: Duration,
    pub reconnect_backoff: Duration,
}

impl FleetConfig {
    pub fn new(server: SocketAddr, keys: KeyRing, journal_dir: impl Into<PathBuf>, pacing: Pacing) -> Self {
        FleetConfig {
            server,
            keys,
            journal_dir: journal_dir.into(),
            pacing,
            fsync: true,
            drain_timeout: Duration::from_secs(30),
            reconnect_backoff: Duration::from_millis(50),
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct FleetReport {
    pub devices: usize,
    pub frames_journaled: u64,
    pub link: LinkStats,
    /// Frames still unacknowledged per device after draining (all zero on
    /// success).
    pub unacked: Vec<(u32, usize)>,
    pub wall: Duration,
}

/// Runs every device of the scenario to completion against `cfg.server`,
/// then waits for each journal to drain.
pub async fn run_fleet(scenario: Arc<Scenario>, cfg: FleetConfig) -> Result<FleetReport, SimError> {
    let started = Instant::now();
    let mut devices = Vec::new();
    for d in &scenario.devices {
        let key = cfg.keys.get(d.point_id).ok_or(SimError::NoKey(d.point_id))?;
        devices.push(Device::new(scenario.clone(), d.point_id, key, &cfg.journal_dir, cfg.fsync)?);
    }
    let n = devices.len();
    let (tick_tx, tick_rx) = watch::channel::<Option<u64>>(None);
    let (done_tx, mut done_rx) = mpsc::unbounded_channel::<u64>();

    let mut tasks = Vec::new();
    for mut dev in devices {
        let scenario = scenario.clone();
        let mut tick = tick_rx.clone();
        let done = done_tx.clone();
        let cfg = cfg.clone();
        tasks.push(tokio::spawn(async move {
            let mut link = DeviceLink::new(cfg.server);
            let mut journaled = 0u64;
            let mut failure = None;
            for t in 0..scenario.duration_s {
                if tick.wait_for(|v| v.is_some_and(|v| v >= t)).await.is_err() {
                    break;
                }
                if failure.is_none() {
                    match step_once(&scenario, &mut dev, &mut link, t).await {
                        Ok(n) => journaled += n,
                        Err(e) => failure = Some(e),
                    }
                }
                // a failed device still ticks so the others are not held up
                let _ = done.send(t);
            }
            if let Some(e) = failure {
                return Err(e);
            }
            drop(done);
            let drained = link.drain(&mut dev, cfg.drain_timeout, cfg.reconnect_backoff).await;
            let unacked = dev.journal().unacked();
            if let Err(e) = &drained {
                tracing::warn!(device = dev.id(), error = %e, "drain incomplete");
            }
            Ok::<_, SimError>((dev.id(), journaled, link.stats(), unacked))
        }));
    }
    drop(done_tx);

    let wall_start = tokio::time::Instant::now();
    for t in 0..scenario.duration_s {
        match &cfg.pacing {
            Pacing::Virtual(clock) => clock.advance_to(scenario.record_ts(t + 1)),
            Pacing::Wall { speed } => {
                let at = wall_start + Duration::from_secs_f64(t as f64 / speed.max(1e-6));
                tokio::time::sleep_until(at).await;
            }
        }
        let _ = tick_tx.send(Some(t));
        // lockstep: every device finishes second t before t + 1 starts
        let mut got = 0;
        while got < n {
            match done_rx.recv().await {
                Some(_) => got += 1,
                None => break,
            }
        }
    }

    let mut report = FleetReport {
        devices: n,
        ..Default::default()
    };
    for task in tasks {
        let (id, journaled, stats, unacked) = task.await.expect("device task panicked")?;
        report.frames_journaled += journaled;
        report.link += stats;
        report.unacked.push((id, unacked));
    }
    report.wall = started.elapsed();
    info!(devices = n, frames = report.frames_journaled, wall_ms = report.wall.as_millis() as u64, "fleet finished");
    Ok(report)
}

async fn step_once(scenario: &Scenario, dev: &mut Device, link: &mut DeviceLink, t: u64) -> Result<u64, SimError> {
    let n = dev.step(t)?.len() as u64;
    link.absorb_acks(dev)?;
    if scenario.in_outage(dev.id(), t) {
        link.disconnect();
    } else {
        if !link.is_connected() {
            link.connect(dev).await?;
        }
        link.send_pending(dev).await;
    }
    Ok(n)
}
