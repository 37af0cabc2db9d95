use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use gridmon_core::clock::Clock;
use gridmon_core::wire::{KeyFileError, KeyRing};
use gridmon_core::registry::RegistryError;
use gridmon_core::PointRegistry;
use gridmon_ingest::{server, Center, CenterConfig, IngestError, ReplayStats};
use gridmon_store::{EventStore, StoreError, TieredStore};
use parking_lot::Mutex;
use serde::Serialize;
use tokio::net::TcpListener;
use tokio::task::JoinHandle;
use tracing::{info, warn};

use crate::config::Config;
use crate::import::{parse_import, ImportError, LineRejection};
use crate::tokens::{TokenFileError, TokenTable};

const HOUR_MS: u64 = 3_600_000;

#[derive(Debug, thiserror::Error)]
pub enum ServiceError {
    #[error("points registry: {0}")]
    Registry(#[from] RegistryError),
    #[error("device keys: {0}")]
    Keys(#[from] KeyFileError),
    #[error("tokens: {0}")]
    Tokens(#[from] TokenFileError),
    #[error("store: {0}")]
    Store(#[from] StoreError),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Serialize)]
pub struct ImportResult {
    pub accepted: usize,
    pub rejected: Vec<LineRejection>,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct MaintenanceReport {
    pub rollups: usize,
    pub demoted_segments: usize,
    pub purged_segments: usize,
}

struct MaintState {
    last_rollup: u64,
    last_demote: u64,
}

/// The running center: ingest state, stores, tokens and maintenance policy.
pub struct Service {
    center: Arc<Center>,
    tokens: TokenTable,
    clock: Arc<dyn Clock>,
    hot_window_ms: u64,
    retention_days: Option<u32>,
    rollup_every_ms: u64,
    demote_every_ms: u64,
    watch_dir: Option<PathBuf>,
    maint: Mutex<MaintState>,
}

pub struct Running {
    pub ingest_addr: SocketAddr,
    pub http_addr: SocketAddr,
    tasks: Vec<JoinHandle<()>>,
}

impl Running {
    pub fn abort(&self) {
        for t in &self.tasks {
            t.abort();
        }
    }
}

impl Drop for Running {
    fn drop(&mut self) {
        self.abort();
    }
}

impl Service {
    /// Loads registry, keys and tokens, opens the stores and replays the WAL.
    pub fn open(cfg: &Config, clock: Arc<dyn Clock>) -> Result<(Self, ReplayStats), ServiceError> {
        let registry = PointRegistry::load(&cfg.points_file)?;
        let keys = KeyRing::load(&cfg.keys_file)?;
        let tokens = TokenTable::load(&cfg.tokens_file)?;
        std::fs::create_dir_all(&cfg.data_dir)?;
        let store = TieredStore::open(&cfg.data_dir, Some(registry.ids().collect()))?;
        let events = EventStore::open(cfg.data_dir.join("events.log"))?;
        let ccfg = CenterConfig {
            wal_dir: cfg.wal_dir.clone(),
            rollup_grace_ms: cfg.rollup_grace_s * 1000,
            fsync: cfg.fsync,
        };
        let (center, stats) = Center::open(ccfg, Arc::new(registry), keys, Arc::new(store), Arc::new(events))?;
        let now = clock.now_ms();
        Ok((
            Service {
                center: Arc::new(center),
                tokens,
                clock,
                hot_window_ms: cfg.hot_window_hours * HOUR_MS,
                retention_days: cfg.retention_days,
                rollup_every_ms: cfg.rollup_interval_s * 1000,
                demote_every_ms: cfg.demote_interval_s * 1000,
                watch_dir: cfg.watch_dir.clone(),
                maint: Mutex::new(MaintState {
                    last_rollup: now,
                    last_demote: now,
                }),
            },
            stats,
        ))
    }

    pub fn center(&self) -> &Arc<Center> {
        &self.center
    }

    pub fn tokens(&self) -> &TokenTable {
        &self.tokens
    }

    pub fn now_ms(&self) -> u64 {
        self.clock.now_ms()
    }

    /// Imports a bulk CSV body; `authorize` filters points per caller.
    pub fn import_csv(
        &self,
        body: &[u8],
        resolution: gridmon_core::Resolution,
        authorize: impl Fn(u32) -> bool,
    ) -> Result<ImportResult, ImportErrorKind> {
        let parsed = parse_import(body, resolution, self.center.registry(), authorize)?;
        let records: Vec<_> = parsed.records.iter().map(|(r, _)| *r).collect();
        let report = self.center.import_records(&records)?;
        let refused: std::collections::HashSet<usize> = report.rejected.iter().map(|(i, _)| *i).collect();
        let mut rejected = parsed.rejected;
        for (idx, reason) in &report.rejected {
            rejected.extend(parsed.records[*idx].1.iter().map(|&line| LineRejection {
                line,
                reason: reason.to_string(),
            }));
        }
        rejected.sort_by_key(|r| r.line);
        let accepted = parsed
            .records
            .iter()
            .enumerate()
            .filter(|(i, _)| !refused.contains(i))
            .map(|(_, (_, lines))| lines.len())
            .sum();
        Ok(ImportResult { accepted, rejected })
    }

    /// Runs whichever periodic jobs are due at `now_ms`: rollups every
    /// rollup interval, demotion of data older than the hot window every
    /// demote interval (followed by retention).
    pub fn maintenance(&self, now_ms: u64) -> Result<MaintenanceReport, IngestError> {
        let mut report = MaintenanceReport::default();
        let (do_rollup, do_demote) = {
            let mut m = self.maint.lock();
            let r = now_ms >= m.last_rollup + self.rollup_every_ms;
            let d = now_ms >= m.last_demote + self.demote_every_ms;
            if r {
                m.last_rollup = now_ms;
            }
            if d {
                m.last_demote = now_ms;
            }
            (r, d)
        };
        if do_rollup {
            report.rollups = self.center.rollup_tick(now_ms).len();
        }
        if do_demote {
            report.demoted_segments = self.demote(now_ms.saturating_sub(self.hot_window_ms))?.len();
            if let Some(days) = self.retention_days {
                report.purged_segments = self.center.store().retention_purge(days, now_ms)?.len();
            }
        }
        Ok(report)
    }

    pub fn demote(&self, cutoff_ms: u64) -> Result<Vec<PathBuf>, IngestError> {
        let paths = self.center.demote(cutoff_ms)?;
        if !paths.is_empty() {
            info!(cutoff_ms, segments = paths.len(), "demoted hot records");
        }
        Ok(paths)
    }

    /// Binds nothing itself: serves device ingest and HTTP on the given
    /// listeners and starts maintenance (polling the clock every `poll`).
    pub fn start(self: &Arc<Self>, ingest: TcpListener, http: TcpListener, poll: Duration) -> std::io::Result<Running> {
        let ingest_addr = ingest.local_addr()?;
        let http_addr = http.local_addr()?;
        let mut tasks = Vec::new();

        let center = self.center.clone();
        tasks.push(tokio::spawn(async move {
            if let Err(e) = server::serve(ingest, center).await {
                warn!(error = %e, "ingest listener stopped");
            }
        }));

        let router = crate::api::router(self.clone());
        tasks.push(tokio::spawn(async move {
            if let Err(e) = axum::serve(http, router).await {
                warn!(error = %e, "http listener stopped");
            }
        }));

        let svc = self.clone();
        tasks.push(tokio::spawn(async move {
            loop {
                tokio::time::sleep(poll).await;
                let s = svc.clone();
                let res = tokio::task::spawn_blocking(move || s.maintenance(s.now_ms())).await;
                match res {
                    Ok(Err(e)) => warn!(error = %e, "maintenance failed"),
                    Err(e) => warn!(error = %e, "maintenance task panicked"),
                    Ok(Ok(_)) => {}
                }
            }
        }));

        if let Some(dir) = self.watch_dir.clone() {
            let svc = self.clone();
            tasks.push(tokio::spawn(async move {
                loop {
                    let s = svc.clone();
                    let d = dir.clone();
                    let _ = tokio::task::spawn_blocking(move || s.scan_watch_dir(&d)).await;
                    tokio::time::sleep(Duration::from_secs(2)).await;
                }
            }));
        }

        Ok(Running {
            ingest_addr,
            http_addr,
            tasks,
        })
    }

    /// Imports every `*.csv` in `dir`, writing `<file>.report.json` and
    /// renaming the input to `<file>.done`.
    pub fn scan_watch_dir(&self, dir: &std::path::Path) {
        let Ok(entries) = std::fs::read_dir(dir) else { return };
        let mut files: Vec<PathBuf> = entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        files.sort();
        for path in files {
            let Ok(body) = std::fs::read(&path) else { continue };
            let report = match self.import_csv(&body, gridmon_core::Resolution::R3S, |_| true) {
                Ok(r) => serde_json::to_string_pretty(&r).unwrap_or_default(),
                Err(e) => serde_json::json!({ "error": e.to_string() }).to_string(),
            };
            let name = path.file_name().unwrap_or_default().to_string_lossy().into_owned();
            let _ = std::fs::write(dir.join(format!("{name}.report.json")), report);
            if let Err(e) = std::fs::rename(&path, dir.join(format!("{name}.done"))) {
                warn!(path = %path.display(), error = %e, "could not retire imported file");
            }
            info!(file = %name, "imported watched file");
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ImportErrorKind {
    #[error(transparent)]
    Parse(#[from] ImportError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
}
