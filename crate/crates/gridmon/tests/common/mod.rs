#![allow(dead_code)]

use std::sync::Arc;
use std::time::Duration;

use gridmon::demo::{write_demo, DemoLayout, DemoOptions};
use gridmon::{Config, Running, Service};
use gridmon_core::clock::VirtualClock;
use gridmon_core::wire::KeyRing;
use gridmon_sim::{run_fleet, FleetConfig, FleetReport, Pacing, Scenario, DEFAULT_START_MS};
use tokio::net::TcpListener;

pub struct Harness {
    pub svc: Arc<Service>,
    pub running: Running,
    pub layout: DemoLayout,
    pub clock: Arc<VirtualClock>,
    pub base: String,
    pub http: reqwest::Client,
    _dir: tempfile::TempDir,
}

impl Harness {
    pub async fn start(devices: u32) -> Harness {
        Self::start_with_tokens(devices, "").await
    }

    /// `extra_tokens` is appended to the generated tokens file.
    pub async fn start_with_tokens(devices: u32, extra_tokens: &str) -> Harness {
        let dir = tempfile::tempdir().unwrap();
        let layout = write_demo(
            dir.path(),
            &DemoOptions { devices, fsync: false, ..Default::default() },
        )
        .unwrap();
        let tokens = dir.path().join("tokens.tsv");
        let mut t = std::fs::read_to_string(&tokens).unwrap();
        t.push_str(extra_tokens);
        std::fs::write(&tokens, t).unwrap();
        let cfg = Config::load(&layout.config).unwrap();
        let clock = Arc::new(VirtualClock::new(DEFAULT_START_MS));
        let (svc, _) = Service::open(&cfg, clock.clone()).unwrap();
        let svc = Arc::new(svc);
        let ingest = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let http = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let running = svc.start(ingest, http, Duration::from_millis(50)).unwrap();
        let base = format!("http://{}", running.http_addr);
        Harness { svc, running, layout, clock, base, http: reqwest::Client::new(), _dir: dir }
    }

    pub async fn run(&self, sc: &Scenario) -> FleetReport {
        let mut cfg = FleetConfig::new(
            self.running.ingest_addr,
            KeyRing::load(&self.layout.keys).unwrap(),
            self.layout.dir.join("journal"),
            Pacing::Virtual(self.clock.clone()),
        );
        cfg.fsync = false;
        let report = run_fleet(Arc::new(sc.clone()), cfg).await.unwrap();
        assert!(report.unacked.iter().all(|(_, n)| *n == 0));
        report
    }

    /// GET with an optional bearer token; returns status and body text.
    pub async fn get(&self, path: &str, token: Option<&str>) -> (u16, String) {
        let mut req = self.http.get(format!("{}{path}", self.base));
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        (resp.status().as_u16(), resp.text().await.unwrap())
    }

    pub async fn post(&self, path: &str, token: Option<&str>, body: &str) -> (u16, String) {
        let mut req = self.http.post(format!("{}{path}", self.base)).body(body.to_string());
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().await.unwrap();
        (resp.status().as_u16(), resp.text().await.unwrap())
    }

    pub fn admin(&self) -> &str {
        &self.layout.admin_token
    }

    pub fn reader(&self) -> &str {
        &self.layout.reader_token
    }
}
