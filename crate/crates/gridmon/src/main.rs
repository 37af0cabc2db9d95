use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use gridmon::bench::run_bench;
use gridmon::client::ApiClient;
use gridmon::demo::{write_demo, DemoOptions};
use gridmon::{Config, Service};
use gridmon_core::clock::{Clock, SystemClock, VirtualClock};
use gridmon_core::wire::KeyRing;
use gridmon_sim::{run_fleet, FleetConfig, Pacing, Scenario};
use tokio::net::TcpListener;

#[derive(Parser)]
#[command(name = "gridmon", version, about = "Power-quality monitoring center and tools")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run the center: device ingest over TCP plus the HTTP API.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a simulated device fleet against a center.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Ingest address of the center, host:port.
        #[arg(long)]
        endpoint: String,
        /// Device key file (device_id<TAB>hex key).
        #[arg(long)]
        keys: PathBuf,
        #[arg(long, default_value = "journal")]
        journal_dir: PathBuf,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0, conflicts_with = "fast")]
        speed: f64,
        /// Step as fast as the center acknowledges.
        #[arg(long)]
        fast: bool,
        /// Shift the scenario start to the current time.
        #[arg(long)]
        start_now: bool,
        /// Skip fsync on the device journals.
        #[arg(long)]
        no_fsync: bool,
    },
    /// Fetch one parameter of a point as CSV (ts_ms,value,flags).
    Query {
        #[arg(long)]
        server: String,
        #[arg(long, env = "GRIDMON_TOKEN")]
        token: String,
        #[arg(long)]
        point: u32,
        #[arg(long)]
        param: String,
        #[arg(long, default_value = "3s")]
        res: String,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Demote hot data older than the cutoff into segment files.
    Demote {
        #[arg(long)]
        server: String,
        #[arg(long, env = "GRIDMON_TOKEN")]
        token: String,
        #[arg(long)]
        cutoff: String,
    },
    /// Measure ingest throughput and query latency in-process.
    Bench {
        #[arg(long, default_value_t = 100)]
        devices: u32,
        #[arg(long, default_value_t = 10)]
        minutes: u64,
        /// Working directory (a temporary one by default).
        #[arg(long)]
        dir: Option<PathBuf>,
    },
    /// Write a demo config, registry, keys, tokens and scenario.
    Init {
        #[arg(long)]
        dir: PathBuf,
        #[arg(long, default_value_t = 3)]
        devices: u32,
        #[arg(long, default_value = "127.0.0.1:7450")]
        ingest_listen: SocketAddr,
        #[arg(long, default_value = "127.0.0.1:8080")]
        http_listen: SocketAddr,
    },
}

#[tokio::main]
async fn main() -> Result<()> {
    tracing_subscriber::fmt()
        .with_writer(std::io::stderr)
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_default_env()
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info")),
        )
        .init();
    match Cli::parse().cmd {
        Cmd::Serve { config } => serve(config).await,
        Cmd::Simulate { scenario, endpoint, keys, journal_dir, speed, fast, start_now, no_fsync } => {
            simulate(scenario, endpoint, keys, journal_dir, speed, fast, start_now, !no_fsync).await
        }
        Cmd::Query { server, token, point, param, res, from, to } => {
            let data = ApiClient::new(server, token).series(point, &param, &res, &from, &to).await?;
            let mut out = String::from("ts_ms,value,flags\n");
            for (ts, v, f) in data.values {
                out.push_str(&format!("{ts},{v},{f}\n"));
            }
            print!("{out}");
            Ok(())
        }
        Cmd::Demote { server, token, cutoff } => {
            let v = ApiClient::new(server, token).demote(&cutoff).await?;
            println!("{}", serde_json::to_string_pretty(&v)?);
            Ok(())
        }
        Cmd::Bench { devices, minutes, dir } => {
            let tmp = tempfile::tempdir()?;
            let dir = dir.unwrap_or_else(|| tmp.path().to_path_buf());
            let report = run_bench(devices, minutes, &dir).await?;
            println!("{}", serde_json::to_string_pretty(&report)?);
            Ok(())
        }
        Cmd::Init { dir, devices, ingest_listen, http_listen } => {
            let layout = write_demo(
                &dir,
                &DemoOptions { devices, ingest_listen, http_listen, ..Default::default() },
            )?;
            println!("config:       {}", layout.config.display());
            println!("scenario:     {}", layout.scenario.display());
            println!("keys:         {}", layout.keys.display());
            println!("admin token:  {}", layout.admin_token);
            println!("reader token: {}", layout.reader_token);
            Ok(())
        }
    }
}

async fn serve(config: PathBuf) -> Result<()> {
    let cfg = Config::load(&config).with_context(|| format!("loading {}", config.display()))?;
    let (svc, replay) = Service::open(&cfg, Arc::new(SystemClock))?;
    tracing::info!(?replay, "state recovered");
    let svc = Arc::new(svc);
    let ingest = TcpListener::bind(cfg.ingest_listen)
        .await
        .with_context(|| format!("binding ingest {}", cfg.ingest_listen))?;
    let http = TcpListener::bind(cfg.http_listen)
        .await
        .with_context(|| format!("binding http {}", cfg.http_listen))?;
    let running = svc.start(ingest, http, Duration::from_millis(500))?;
    println!("ingest listening on {}", running.ingest_addr);
    println!("http listening on {}", running.http_addr);
    tokio::signal::ctrl_c().await?;
    tracing::info!("shutting down");
    running.abort();
    Ok(())
}

#[allow(clippy::too_many_arguments)]
async fn simulate(
    scenario: PathBuf,
    endpoint: String,
    keys: PathBuf,
    journal_dir: PathBuf,
    speed: f64,
    fast: bool,
    start_now: bool,
    fsync: bool,
) -> Result<()> {
    let mut sc = Scenario::load(&scenario).with_context(|| format!("loading {}", scenario.display()))?;
    if start_now {
        let now = SystemClock.now_ms();
        sc.start_ms = now - now % 3000;
    }
    let keys = KeyRing::load(&keys)?;
    let server = tokio::net::lookup_host(&endpoint)
        .await?
        .next()
        .with_context(|| format!("cannot resolve {endpoint}"))?;
    if speed.is_nan() || speed <= 0.0 {
        bail!("--speed must be positive");
    }
    let pacing = if fast {
        Pacing::Virtual(Arc::new(VirtualClock::new(sc.start_ms)))
    } else {
        Pacing::Wall { speed }
    };
    let mut cfg = FleetConfig::new(server, keys, journal_dir, pacing);
    cfg.fsync = fsync;
    let report = run_fleet(Arc::new(sc), cfg).await?;
    println!(
        "devices={} frames={} resent={} connects={} failed_connects={} hello_regressions={} wall_s={:.3}",
        report.devices,
        report.frames_journaled,
        report.link.frames_resent,
        report.link.connects,
        report.link.failed_connects,
        report.link.hello_regressions,
        report.wall.as_secs_f64()
    );
    let unacked: usize = report.unacked.iter().map(|(_, n)| n).sum();
    if unacked > 0 {
        bail!("{unacked} frames still unacknowledged");
    }
    Ok(())
}
