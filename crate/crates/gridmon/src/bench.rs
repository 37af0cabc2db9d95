//! In-process benchmark: a fleet on a virtual clock against a fresh center,
//! then range-query latency through the store and over HTTP.

use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use gridmon_core::clock::VirtualClock;
use gridmon_core::wire::KeyRing;
use gridmon_core::Resolution;
use gridmon_sim::{run_fleet, FleetConfig, Pacing, SimError};
use rand::Rng;
use serde::Serialize;
use tokio::net::TcpListener;

use crate::client::{ApiClient, ClientError};
use crate::config::{Config, ConfigError};
use crate::demo::{demo_scenario, write_demo, DemoOptions};
use crate::service::{Service, ServiceError};

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Service(#[from] ServiceError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("fleet left {0} frames unacknowledged")]
    Unacked(usize),
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Percentiles {
    pub p50_ms: f64,
    pub p90_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
}

impl Percentiles {
    pub fn from_samples(mut d: Vec<Duration>) -> Self {
        d.sort_unstable();
        let at = |q: f64| {
            let i = ((d.len() as f64 - 1.0) * q).round() as usize;
            d.get(i).map_or(0.0, |x| x.as_secs_f64() * 1e3)
        };
        Percentiles {
            p50_ms: at(0.5),
            p90_ms: at(0.9),
            p99_ms: at(0.99),
            max_ms: at(1.0),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct BenchReport {
    pub devices: u32,
    pub simulated_minutes: u64,
    pub records_ingested: u64,
    pub frames: u64,
    pub ingest_wall_s: f64,
    pub records_per_s: f64,
    pub store_last_hour_query: Percentiles,
    pub http_last_hour_query: Percentiles,
}

pub async fn run_bench(devices: u32, minutes: u64, dir: &Path) -> Result<BenchReport, BenchError> {
    let layout = write_demo(
        dir,
        &DemoOptions {
            devices,
            duration_s: minutes * 60,
            ..Default::default()
        },
    )?;
    let cfg = Config::load(&layout.config)?;
    let mut scenario = demo_scenario(devices, minutes * 60);
    scenario.injected.clear();
    let clock = Arc::new(VirtualClock::new(scenario.start_ms));
    let (svc, _) = Service::open(&cfg, clock.clone())?;
    let svc = Arc::new(svc);
    let ingest = TcpListener::bind("127.0.0.1:0").await?;
    let http = TcpListener::bind("127.0.0.1:0").await?;
    let running = svc.start(ingest, http, Duration::from_millis(50))?;

    let keys = KeyRing::load(&layout.keys).map_err(ServiceError::from)?;
    let fleet_cfg = FleetConfig::new(
        running.ingest_addr,
        keys,
        dir.join("journal"),
        Pacing::Virtual(clock.clone()),
    );
    let started = Instant::now();
    let report = run_fleet(Arc::new(scenario.clone()), fleet_cfg).await?;
    let wall = started.elapsed().as_secs_f64();
    let unacked: usize = report.unacked.iter().map(|(_, n)| n).sum();
    if unacked > 0 {
        return Err(BenchError::Unacked(unacked));
    }
    let counters = svc.center().counters();

    let end = scenario.record_ts(scenario.duration_s);
    let from = end.saturating_sub(3_600_000);
    let mut rng = rand::rng();
    let mut store_samples = Vec::new();
    for _ in 0..1000 {
        let p = rng.random_range(1..=devices);
        let t = Instant::now();
        let r = svc.center().store().query_range(p, Resolution::R3S, from, end);
        store_samples.push(t.elapsed());
        drop(r);
    }
    let client = ApiClient::new(running.http_addr.to_string(), layout.admin_token.clone());
    let (f, e) = (from.to_string(), end.to_string());
    let mut http_samples = Vec::new();
    for _ in 0..200 {
        let p = rng.random_range(1..=devices);
        let t = Instant::now();
        client.series(p, "vrms_pu_0", "3s", &f, &e).await?;
        http_samples.push(t.elapsed());
    }
    running.abort();

    Ok(BenchReport {
        devices,
        simulated_minutes: minutes,
        records_ingested: counters.records_inserted,
        frames: counters.frames,
        ingest_wall_s: wall,
        records_per_s: counters.records_inserted as f64 / wall.max(1e-9),
        store_last_hour_query: Percentiles::from_samples(store_samples),
        http_last_hour_query: Percentiles::from_samples(http_samples),
    })
}
