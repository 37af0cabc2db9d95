//! Generates a self-contained working directory: config, point registry,
//! device keys, API tokens and a demo scenario.

use std::fmt::Write as _;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use gridmon_core::wire::{DeviceKey, KeyRing};
use gridmon_sim::{DeviceSpec, Injection, InjectionKind, Scenario, DEFAULT_START_MS};
use rand::Rng;

#[derive(Debug, Clone)]
pub struct DemoLayout {
    pub dir: PathBuf,
    pub config: PathBuf,
    pub scenario: PathBuf,
    pub keys: PathBuf,
    /// All scopes, all points.
    pub admin_token: String,
    /// READ on the first point only.
    pub reader_token: String,
}

pub struct DemoOptions {
    pub devices: u32,
    pub ingest_listen: SocketAddr,
    pub http_listen: SocketAddr,
    pub duration_s: u64,
    pub fsync: bool,
}

impl Default for DemoOptions {
    fn default() -> Self {
        DemoOptions {
            devices: 3,
            ingest_listen: ([127, 0, 0, 1], 7450).into(),
            http_listen: ([127, 0, 0, 1], 8080).into(),
            duration_s: 600,
            fsync: true,
        }
    }
}

fn random_hex(rng: &mut impl Rng, bytes: usize) -> String {
    let b: Vec<u8> = (0..bytes).map(|_| rng.random()).collect();
    hex::encode(b)
}

/// The scenario written by [`write_demo`]: devices `1..=n`, a sag on the
/// first device and a 30 s link outage on the last.
pub fn demo_scenario(devices: u32, duration_s: u64) -> Scenario {
    let mut sc = Scenario {
        seed: 2025,
        duration_s,
        start_ms: DEFAULT_START_MS,
        devices: (1..=devices).map(DeviceSpec::new).collect(),
        injected: Vec::new(),
    };
    if devices > 0 && duration_s >= 60 {
        sc.injected.push(Injection {
            kind: InjectionKind::Sag,
            point_id: 1,
            start_s: 20,
            duration_s: 4,
            depth_pu: 0.7,
            phase_mask: 0b001,
        });
        sc.injected.push(Injection {
            kind: InjectionKind::LinkOutage,
            point_id: devices,
            start_s: 30,
            duration_s: 30,
            depth_pu: 0.0,
            phase_mask: 0b111,
        });
    }
    sc
}

pub fn write_demo(dir: &Path, opts: &DemoOptions) -> std::io::Result<DemoLayout> {
    std::fs::create_dir_all(dir)?;
    let mut rng = rand::rng();

    let mut points = String::from("point_id,name,nominal_voltage_v,nominal_frequency_hz\n");
    let mut keys = KeyRing::new();
    for id in 1..=opts.devices {
        let _ = writeln!(points, "{id},feeder-{id},230,50");
        keys.insert(id, DeviceKey(rng.random()));
    }
    let admin_token = random_hex(&mut rng, 16);
    let reader_token = random_hex(&mut rng, 16);
    let tokens = format!(
        "# token\tscopes\tpoints\n{admin_token}\tREAD,EXPORT,IMPORT,ADMIN\t*\n{reader_token}\tREAD\t1\n"
    );
    let config = format!(
        "ingest_listen = \"{}\"\nhttp_listen = \"{}\"\ndata_dir = \"data\"\nwal_dir = \"wal\"\n\
         points_file = \"points.csv\"\nkeys_file = \"keys.tsv\"\n\
         tokens_file = \"tokens.tsv\"\nhot_window_hours = 48\nrollup_grace_s = 30\nfsync = {}\n",
        opts.ingest_listen, opts.http_listen, opts.fsync
    );
    let scenario = demo_scenario(opts.devices, opts.duration_s);

    let layout = DemoLayout {
        dir: dir.to_path_buf(),
        config: dir.join("gridmon.toml"),
        scenario: dir.join("scenario.json"),
        keys: dir.join("keys.tsv"),
        admin_token,
        reader_token,
    };
    std::fs::write(dir.join("points.csv"), points)?;
    std::fs::write(&layout.keys, keys.to_tsv())?;
    std::fs::write(dir.join("tokens.tsv"), tokens)?;
    std::fs::write(&layout.config, config)?;
    std::fs::write(
        &layout.scenario,
        serde_json::to_string_pretty(&scenario).expect("scenario serializes"),
    )?;
    Ok(layout)
}
