//! Acceptance suite. Runs every criterion and prints one PASS/FAIL line each;
//! exits nonzero if any fails.
//!
//! `cargo test -p gridmon --test acceptance` (add `--release` for realistic
//! timings). Pass criterion numbers as arguments to run a subset.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::{BufRead, BufReader};
use std::net::{SocketAddr, TcpListener as StdListener};
use std::panic::AssertUnwindSafe;
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::sync::Arc;
use std::time::{Duration, Instant};

use gridmon::client::ApiClient;
use gridmon::demo::{write_demo, DemoLayout, DemoOptions};
use gridmon::{Config, Service};
use gridmon_core::clock::VirtualClock;
use gridmon_core::pq::{
    aggregate_window, power_triplet, symmetrical_unbalance, thd, EventDetector, EventDetectorConfig, Phasor,
};
use gridmon_core::wire::{frame_nonce, open_frame, seal_frame, DeviceKey, FrameHeader, FrameType, KeyRing};
use gridmon_core::{
    window_align, BaseRecord, EventType, PQEvent, RecordFlags, Resolution, PARAM_COUNT,
};
use gridmon_sim::{
    expected_output, run_fleet, Device, FleetConfig, Injection, InjectionKind, Pacing, Scenario,
};
use gridmon_store::TieredStore;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tokio::net::TcpListener;
use tokio::runtime::Runtime;

type Outcome = Result<String, String>;
type Criterion = (usize, &'static str, fn(&Runtime) -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn main() {
    let only: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().unwrap();
    let criteria: [Criterion; 9] = [
        (1, "end-to-end fidelity, 100 devices x 10 min", c1_end_to_end),
        (2, "loss-free outage recovery", c2_outage),
        (3, "aggregation matches one-pass oracle", c3_aggregation),
        (4, "tiered store equals flat reference map", c4_store_oracle),
        (5, "streaming detector equals whole-trace oracle", c5_events),
        (6, "protocol round trip, tamper rejection, nonce uniqueness", c6_protocol),
        (7, "crash safety under kill -9", c7_crash),
        (8, "last-hour query latency with 1e6 hot records", c8_latency),
        (9, "PQ kernel golden values", c9_golden),
    ];
    let mut failed = 0;
    for (n, name, f) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        let started = Instant::now();
        let outcome = match std::panic::catch_unwind(AssertUnwindSafe(|| f(&rt))) {
            Ok(o) => o,
            Err(p) => Err(format!(
                "panicked: {}",
                p.downcast_ref::<String>()
                    .cloned()
                    .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                    .unwrap_or_default()
            )),
        };
        let secs = started.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {n}. {name} ({detail}; {secs:.1}s)"),
            Err(why) => {
                failed += 1;
                println!("FAIL  {n}. {name}: {why} ({secs:.1}s)");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

struct InProcess {
    svc: Arc<Service>,
    running: gridmon::Running,
    layout: DemoLayout,
    clock: Arc<VirtualClock>,
    _dir: tempfile::TempDir,
}

fn start_in_process(rt: &Runtime, devices: u32, start_ms: u64) -> InProcess {
    let dir = tempfile::tempdir().unwrap();
    let layout = write_demo(dir.path(), &DemoOptions { devices, ..Default::default() }).unwrap();
    let cfg = Config::load(&layout.config).unwrap();
    let clock = Arc::new(VirtualClock::new(start_ms));
    let (svc, _) = Service::open(&cfg, clock.clone()).unwrap();
    let svc = Arc::new(svc);
    let running = rt.block_on(async {
        let ingest = TcpListener::bind("127.0.0.1:0").await.unwrap();
        let http = TcpListener::bind("127.0.0.1:0").await.unwrap();
        svc.start(ingest, http, Duration::from_millis(50)).unwrap()
    });
    InProcess { svc, running, layout, clock, _dir: dir }
}

fn fleet_config(p: &InProcess) -> FleetConfig {
    let keys = KeyRing::load(&p.layout.keys).unwrap();
    FleetConfig::new(
        p.running.ingest_addr,
        keys,
        p.layout.dir.join("journal"),
        Pacing::Virtual(p.clock.clone()),
    )
}

/// Store contents for every scenario device must equal the simulator's
/// deterministic output, field for field, with no duplicate timestamps.
fn compare_store(svc: &Service, sc: &Scenario, check_10min: bool) -> Result<(usize, usize, usize), String> {
    let exp = expected_output(sc);
    let store = svc.center().store();
    let (mut n3, mut n10, mut nev) = (0, 0, 0);
    for d in &sc.devices {
        let p = d.point_id;
        let mut pairs = vec![(Resolution::R3S, &exp.r3s[&p])];
        if check_10min {
            pairs.push((Resolution::R10Min, &exp.r10min[&p]));
        }
        for (res, want) in pairs {
            let got = store.query_range(p, res, 0, u64::MAX).map_err(|e| e.to_string())?;
            ensure!(
                got.windows(2).all(|w| w[0].ts_ms < w[1].ts_ms),
                "point {p} {res}: duplicate or unordered timestamps"
            );
            ensure!(got.len() == want.len(), "point {p} {res}: {} records, expected {}", got.len(), want.len());
            for (g, w) in got.iter().zip(want.iter()) {
                ensure!(g.bit_eq(w), "point {p} {res} ts {}: record differs from simulator output", w.ts_ms);
            }
            match res {
                Resolution::R3S => n3 += got.len(),
                _ => n10 += got.len(),
            }
        }
        let got_ev = svc.center().events().query(p, 0, u64::MAX, None);
        let mut want_ev = exp.events[&p].clone();
        want_ev.sort_by_key(|e| (e.start_ms, e.phase_mask));
        let mut got_sorted = got_ev.clone();
        got_sorted.sort_by_key(|e| (e.start_ms, e.phase_mask));
        ensure!(got_sorted == want_ev, "point {p}: events {got_sorted:?} expected {want_ev:?}");
        nev += got_ev.len();
    }
    Ok((n3, n10, nev))
}

fn c1_end_to_end(rt: &Runtime) -> Outcome {
    let sc = Scenario::uniform(7, 600, 1, 100);
    let p = start_in_process(rt, 100, sc.start_ms);
    let started = Instant::now();
    let report = rt.block_on(run_fleet(Arc::new(sc.clone()), fleet_config(&p))).map_err(|e| e.to_string())?;
    let unacked: usize = report.unacked.iter().map(|(_, n)| n).sum();
    ensure!(unacked == 0, "{unacked} frames unacknowledged");
    // close the last 10-minute windows once their grace period has passed
    let after = sc.record_ts(sc.duration_s) + 31_000;
    p.clock.advance_to(after);
    p.svc.center().rollup_tick(after);
    let wall = started.elapsed().as_secs_f64();
    let (n3, n10, _) = compare_store(&p.svc, &sc, true)?;
    ensure!(n3 == 100 * 200, "{n3} 3 s records");
    ensure!(n10 == 100, "{n10} 10 min records");
    ensure!(wall < 60.0, "took {wall:.1}s");
    p.running.abort();
    Ok(format!("{n3} R3S + {n10} R10MIN records bit-equal, wall {wall:.1}s"))
}

fn c2_outage(rt: &Runtime) -> Outcome {
    let mut sc = Scenario::uniform(11, 600, 1, 20);
    for i in 0..20u32 {
        let start = 30 + 15 * i as u64;
        sc.injected.push(Injection {
            kind: InjectionKind::LinkOutage,
            point_id: i + 1,
            start_s: start,
            duration_s: 30,
            depth_pu: 0.0,
            phase_mask: 0b111,
        });
        // an event that closes while the link is down
        sc.injected.push(Injection {
            kind: InjectionKind::Sag,
            point_id: i + 1,
            start_s: start + 5,
            duration_s: 6,
            depth_pu: 0.6,
            phase_mask: 0b011,
        });
    }
    sc.validate().map_err(|e| e.to_string())?;
    let p = start_in_process(rt, 20, sc.start_ms);
    let report = rt.block_on(run_fleet(Arc::new(sc.clone()), fleet_config(&p))).map_err(|e| e.to_string())?;
    let unacked: usize = report.unacked.iter().map(|(_, n)| n).sum();
    ensure!(unacked == 0, "{unacked} frames unacknowledged");
    let (n3, _, nev) = compare_store(&p.svc, &sc, false)?;
    ensure!(n3 == 20 * 200, "{n3} records");
    ensure!(nev > 0, "no events stored");
    let c = p.svc.center().counters();
    p.running.abort();
    Ok(format!(
        "{n3} records, {nev} events, 0 missing, 0 visible duplicates; {} resent, {} duplicate deliveries",
        report.link.frames_resent, c.duplicates
    ))
}

const RMS: [usize; 6] = [1, 2, 3, 4, 5, 6];

#[derive(Default, Clone)]
struct Acc {
    sum: [f64; PARAM_COUNT],
    comp: [f64; PARAM_COUNT],
    abs: [f64; PARAM_COUNT],
    n: usize,
    flags: u8,
}

impl Acc {
    // Neumaier-compensated sums, so the oracle does not share the kernel's
    // rounding.
    fn add(&mut self, r: &BaseRecord) {
        for (i, v) in r.values().iter().enumerate() {
            let x = if RMS.contains(&i) { v * v } else { *v };
            let t = self.sum[i] + x;
            if self.sum[i].abs() >= x.abs() {
                self.comp[i] += (self.sum[i] - t) + x;
            } else {
                self.comp[i] += (x - t) + self.sum[i];
            }
            self.sum[i] = t;
            self.abs[i] += v.abs();
        }
        self.n += 1;
        self.flags |= r.flags.bits();
    }
}

fn random_record(rng: &mut ChaCha8Rng, point: u32, ts: u64, res: Resolution) -> BaseRecord {
    let mut r = BaseRecord::zeroed(point, ts, res);
    let mut v = [0.0; PARAM_COUNT];
    v[0] = rng.random_range(49.5..50.5);
    for x in &mut v[1..4] {
        *x = rng.random_range(0.0..1.5);
    }
    for x in &mut v[4..7] {
        *x = rng.random_range(0.0..2000.0);
    }
    v[7] = rng.random_range(-1e6..1e6);
    v[8] = rng.random_range(-1e6..1e6);
    v[9] = rng.random_range(0.0..2e6);
    for x in &mut v[10..13] {
        *x = rng.random_range(0.0..0.2);
    }
    v[13] = rng.random_range(0.0..0.1);
    v[14] = rng.random_range(0.0..3.0);
    r.set_values(&v);
    if rng.random_bool(0.05) {
        r.flags = RecordFlags::CLOCK_UNSYNCED;
    }
    r
}

fn c3_aggregation(_: &Runtime) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let windows = 10_000u64;
    // all base records of all windows, in one shuffled stream
    let mut base: Vec<(Resolution, BaseRecord)> = Vec::new();
    for w in 0..windows {
        let point = rng.random_range(1..=50);
        let (target, source) = if w % 2 == 0 {
            (Resolution::R3S, Resolution::R1S)
        } else {
            (Resolution::R10Min, Resolution::R3S)
        };
        let start = 1_735_689_600_000 + w * 3_600_000 + rng.random_range(0..5) * target.duration_ms();
        let slots = target.duration_ms() / source.duration_ms();
        let full = rng.random_bool(0.5);
        for k in 0..slots {
            if full || rng.random_bool(0.6) || k == 0 {
                base.push((target, random_record(&mut rng, point, start + k * source.duration_ms(), source)));
            }
        }
    }
    for i in (1..base.len()).rev() {
        base.swap(i, rng.random_range(0..=i));
    }

    let mut oracle: HashMap<(u32, Resolution, u64), Acc> = HashMap::new();
    let mut groups: HashMap<(u32, Resolution, u64), Vec<BaseRecord>> = HashMap::new();
    for (target, r) in &base {
        let key = (r.point_id, *target, window_align(r.ts_ms, *target));
        oracle.entry(key).or_default().add(r);
        groups.entry(key).or_default().push(*r);
    }
    ensure!(groups.len() == windows as usize, "generated {} windows", groups.len());

    let mut worst = 0.0f64;
    for (key, mut inputs) in groups {
        inputs.sort_by_key(|r| r.ts_ms);
        let got = aggregate_window(&inputs, key.1).map_err(|e| e.to_string())?;
        let acc = &oracle[&key];
        let slots = key.1.duration_ms() / inputs[0].resolution.duration_ms();
        let mut flags = acc.flags;
        if (acc.n as u64) < slots {
            flags |= RecordFlags::INCOMPLETE.bits();
        }
        ensure!(got.ts_ms == key.2 && got.point_id == key.0 && got.resolution == key.1, "key mismatch {key:?}");
        ensure!(got.flags.bits() == flags, "flags mismatch at {key:?}");
        let n = acc.n as f64;
        for i in 0..PARAM_COUNT {
            let mean = (acc.sum[i] + acc.comp[i]) / n;
            let want = if RMS.contains(&i) { mean.sqrt() } else { mean };
            let scale = want.abs().max(acc.abs[i] / n);
            let err = if scale == 0.0 { (got.value(i) - want).abs() } else { (got.value(i) - want).abs() / scale };
            worst = worst.max(err);
            ensure!(err <= 1e-9, "{key:?} field {i}: {} vs {want} (rel {err:e})", got.value(i));
        }
    }
    Ok(format!("{windows} windows, {} base records, worst rel err {worst:.2e}", base.len()))
}

fn c4_store_oracle(_: &Runtime) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let dir = tempfile::tempdir().unwrap();
    let store = TieredStore::open(dir.path(), None).map_err(|e| e.to_string())?;
    let mut flat: BTreeMap<(u32, Resolution, u64), BaseRecord> = BTreeMap::new();
    let ops = 100_000;
    let (mut inserts, mut demotes, mut queries, mut returned) = (0, 0, 0, 0usize);
    let encode = |rs: &[BaseRecord]| {
        let mut out = Vec::new();
        for r in rs {
            gridmon_core::wire::encode_record(r, &mut out);
        }
        out
    };
    // time advances so demotions see a moving frontier, with some late inserts
    let mut frontier = 0u64;
    for op in 0..ops {
        let roll = rng.random_range(0..1000);
        let point = rng.random_range(0..8);
        let res = if rng.random_bool(0.85) { Resolution::R3S } else { Resolution::R10Min };
        let d = res.duration_ms();
        if roll < 2 {
            let cutoff = frontier.saturating_sub(rng.random_range(0..200) * 3000);
            store.demote(cutoff).map_err(|e| e.to_string())?;
            demotes += 1;
        } else if roll < 700 {
            frontier += rng.random_range(0..2) * 3000;
            let ts_base = if rng.random_bool(0.9) {
                frontier
            } else {
                rng.random_range(0..=frontier)
            };
            let r = random_record(&mut rng, point, ts_base / d * d, res);
            store.insert(r);
            flat.insert((point, res, r.ts_ms), r);
            inserts += 1;
        } else {
            let from = rng.random_range(0..=frontier + 60_000);
            let to = from + rng.random_range(0..400) * 3000;
            let got = store.query_range(point, res, from, to).map_err(|e| e.to_string())?;
            let want: Vec<BaseRecord> = flat.range((point, res, from)..(point, res, to)).map(|(_, r)| *r).collect();
            ensure!(encode(&got) == encode(&want), "op {op}: query {point} {res} [{from},{to}) differs");
            queries += 1;
            returned += got.len();
        }
    }
    // full sweep at the end
    for point in 0..8 {
        for res in [Resolution::R3S, Resolution::R10Min] {
            let got = store.query_range(point, res, 0, u64::MAX).map_err(|e| e.to_string())?;
            let want: Vec<BaseRecord> = flat.range((point, res, 0)..=(point, res, u64::MAX)).map(|(_, r)| *r).collect();
            ensure!(encode(&got) == encode(&want), "final sweep {point} {res} differs");
        }
    }
    Ok(format!(
        "{ops} ops: {inserts} inserts, {demotes} demotes, {queries} queries ({returned} records), {} segments",
        store.segment_count()
    ))
}

fn classify(v: f64) -> Option<EventType> {
    if v < 0.1 {
        Some(EventType::Interruption)
    } else if v < 0.9 {
        Some(EventType::Sag)
    } else if v > 1.1 {
        Some(EventType::Swell)
    } else {
        None
    }
}

#[allow(clippy::manual_range_contains)]
fn recovered(kind: EventType, v: f64) -> bool {
    match kind {
        EventType::Sag => v >= 0.9 + 0.02 || v < 0.1,
        EventType::Swell => v <= 1.1 - 0.02,
        EventType::Interruption => v >= 0.1 + 0.02,
    }
}

/// Whole-trace oracle: find each event's entering sample, search forward for
/// its recovery sample, take the extreme over the span, and resume the search
/// at the recovery sample.
fn oracle_events(trace: &[[f64; 3]], ts: &[u64]) -> Vec<PQEvent> {
    let mut out = Vec::new();
    for phase in 0..3 {
        let v: Vec<f64> = trace.iter().map(|s| s[phase]).collect();
        let mut i = 0;
        while i < v.len() {
            let Some(kind) = classify(v[i]) else {
                i += 1;
                continue;
            };
            let Some(j) = (i + 1..v.len()).find(|&j| recovered(kind, v[j])) else {
                break;
            };
            let span = &v[i..j];
            let extreme = match kind {
                EventType::Swell => span.iter().copied().fold(f64::MIN, f64::max),
                _ => span.iter().copied().fold(f64::MAX, f64::min),
            };
            out.push(PQEvent {
                point_id: 1,
                event_type: kind,
                phase_mask: 1 << phase,
                start_ms: ts[i],
                end_ms: ts[j],
                extreme_pu: extreme,
            });
            i = j;
        }
    }
    out.sort_by_key(|e| (e.end_ms, e.phase_mask));
    out
}

fn random_level(rng: &mut ChaCha8Rng) -> f64 {
    const EDGES: [f64; 8] = [0.0, 0.1, 0.1 + 0.02, 0.9, 0.9 + 0.02, 1.1, 1.1 - 0.02, 1.0];
    match rng.random_range(0..10) {
        0 => EDGES[rng.random_range(0..EDGES.len())],
        1 => rng.random_range(0.0..0.1),
        2 => rng.random_range(0.08..0.14),
        3 | 4 => rng.random_range(0.1..0.9),
        5 => rng.random_range(0.88..0.94),
        6 => rng.random_range(1.06..1.12),
        7 => rng.random_range(1.1..1.6),
        _ => rng.random_range(0.93..1.07),
    }
}

fn c5_events(_: &Runtime) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut total, mut kinds) = (0usize, [0usize; 3]);
    for trace_no in 0..1000 {
        let len = rng.random_range(20..400);
        let mut trace = vec![[1.0f64; 3]; len];
        for phase in 0..3 {
            let mut k = 0;
            while k < len {
                let run = rng.random_range(1..25).min(len - k);
                let episode = rng.random_bool(0.4);
                let base = if episode { random_level(&mut rng) } else { rng.random_range(0.93..1.07) };
                for s in &mut trace[k..k + run] {
                    s[phase] = if rng.random_bool(0.7) { base } else { random_level(&mut rng) };
                }
                k += run;
            }
        }
        let ts: Vec<u64> = (0..len as u64).map(|k| 1_000_000 + k * 1000).collect();
        let mut det = EventDetector::new(1, EventDetectorConfig::default()).unwrap();
        let mut got = Vec::new();
        for (s, t) in trace.iter().zip(&ts) {
            got.extend(det.step(*t, *s).map_err(|e| e.to_string())?);
        }
        let want = oracle_events(&trace, &ts);
        let mut got_sorted = got.clone();
        got_sorted.sort_by_key(|e| (e.end_ms, e.phase_mask));
        ensure!(got == got_sorted, "trace {trace_no}: detector output not in close order");
        ensure!(got == want, "trace {trace_no}: detector {got:?}\noracle {want:?}");
        total += got.len();
        for e in &got {
            kinds[e.event_type.code() as usize % 3] += 1;
        }
    }
    ensure!(kinds.iter().all(|&k| k > 0), "not every event type exercised: {kinds:?}");
    Ok(format!("1000 traces, {total} events identical"))
}

fn c6_protocol(_: &Runtime) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let types = [FrameType::Data, FrameType::Event, FrameType::Ack, FrameType::Hello, FrameType::Err];
    let mut flips = 0u64;
    for i in 0..10_000 {
        let key = DeviceKey(rng.random());
        let device = rng.random();
        let seq = rng.random();
        let ty = types[rng.random_range(0..types.len())];
        let len = rng.random_range(0..=64);
        let payload: Vec<u8> = (0..len).map(|_| rng.random()).collect();
        let frame = seal_frame(FrameHeader::new(ty, device, seq), &payload, &key);
        let (h, p) = open_frame(&frame, |_| Some(key)).map_err(|e| format!("frame {i}: {e}"))?;
        ensure!(h.device_id == device && h.seq == seq && h.frame_type == ty && p == payload, "frame {i}: round trip differs");
        let mut m = frame.clone();
        for bit in 0..frame.len() * 8 {
            m[bit / 8] ^= 1 << (bit % 8);
            ensure!(open_frame(&m, |_| Some(key)).is_err(), "frame {i}: flip of bit {bit} accepted");
            m[bit / 8] ^= 1 << (bit % 8);
            flips += 1;
        }
    }

    // nonce log across device and center restarts
    let dir = tempfile::tempdir().unwrap();
    let layout = write_demo(dir.path(), &DemoOptions { devices: 2, fsync: false, ..Default::default() }).unwrap();
    let keys = KeyRing::load(&layout.keys).unwrap();
    let mut sc = Scenario::uniform(6, 60, 1, 2);
    sc.injected.push(Injection {
        kind: InjectionKind::Swell,
        point_id: 1,
        start_s: 10,
        duration_s: 5,
        depth_pu: 1.3,
        phase_mask: 0b111,
    });
    let sc = Arc::new(sc);
    let mut log: Vec<(u32, [u8; 12])> = Vec::new();
    let jdir = dir.path().join("journal");
    for id in 1..=2u32 {
        for (lo, hi) in [(0, 30), (0, 30)] {
            // a fresh process each round: the journal is reopened from disk
            let mut dev = Device::new(sc.clone(), id, keys.get(id).unwrap(), &jdir, false).map_err(|e| e.to_string())?;
            for t in lo..hi {
                dev.step(t).map_err(|e| e.to_string())?;
            }
            for _ in 0..3 {
                let s = dev.journal_mut().next_hello_seq().map_err(|e| e.to_string())?;
                log.push((id, frame_nonce(id, s)));
            }
        }
        let dev = Device::new(sc.clone(), id, keys.get(id).unwrap(), &jdir, false).map_err(|e| e.to_string())?;
        for e in dev.journal().replay(0) {
            let h = FrameHeader::parse(&e.frame).map_err(|e| e.to_string())?;
            log.push((id, frame_nonce(h.device_id, h.seq)));
        }
    }
    let cfg = Config::load(&layout.config).unwrap();
    for _restart in 0..3 {
        let (svc, _) = Service::open(&cfg, Arc::new(VirtualClock::new(0))).map_err(|e| e.to_string())?;
        for id in 1..=2u32 {
            for _ in 0..5 {
                let f = svc.center().seal_to_device(id, FrameType::Ack, &[0; 8]).map_err(|e| e.to_string())?;
                let h = FrameHeader::parse(&f).map_err(|e| e.to_string())?;
                log.push((id, frame_nonce(h.device_id, h.seq)));
            }
        }
    }
    let unique: HashSet<_> = log.iter().collect();
    ensure!(unique.len() == log.len(), "{} duplicate (key, nonce) pairs in {}", log.len() - unique.len(), log.len());
    Ok(format!("10000 frames, {flips} bit flips rejected, {} nonces unique", log.len()))
}

fn free_port() -> u16 {
    StdListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

struct Server {
    child: Child,
}

impl Server {
    fn spawn(config: &Path) -> Result<Server, String> {
        let mut child = Command::new(env!("CARGO_BIN_EXE_gridmon"))
            .args(["serve", "--config"])
            .arg(config)
            .env("RUST_LOG", "warn")
            .stdout(Stdio::piped())
            .stderr(Stdio::null())
            .spawn()
            .map_err(|e| e.to_string())?;
        let mut out = BufReader::new(child.stdout.take().unwrap());
        let mut line = String::new();
        // ready once both listeners are announced
        for _ in 0..2 {
            line.clear();
            if out.read_line(&mut line).map_err(|e| e.to_string())? == 0 {
                let _ = child.kill();
                return Err("server exited before listening".into());
            }
        }
        Ok(Server { child })
    }

    fn kill9(self) {}
}

impl Drop for Server {
    fn drop(&mut self) {
        // SIGKILL: no shutdown path runs
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}

fn c7_crash(rt: &Runtime) -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let ingest: SocketAddr = ([127, 0, 0, 1], free_port()).into();
    let http: SocketAddr = ([127, 0, 0, 1], free_port()).into();
    let layout = write_demo(
        dir.path(),
        &DemoOptions { devices: 5, ingest_listen: ingest, http_listen: http, ..Default::default() },
    )
    .unwrap();
    let sc = Scenario::uniform(17, 1800, 1, 5);
    let mut fleet = FleetConfig::new(
        ingest,
        KeyRing::load(&layout.keys).unwrap(),
        dir.path().join("device-journal"),
        Pacing::Wall { speed: 120.0 },
    );
    fleet.drain_timeout = Duration::from_secs(60);
    fleet.reconnect_backoff = Duration::from_millis(20);

    let mut server = Server::spawn(&layout.config)?;
    let fleet_task = rt.spawn(run_fleet(Arc::new(sc.clone()), fleet));
    let client = ApiClient::new(http.to_string(), layout.admin_token.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut kills = 0;
    let mut acked_before_kill = 0u64;
    while kills < 20 {
        // wait until this incarnation has acknowledged something, then kill
        // it at a random moment
        let deadline = Instant::now() + Duration::from_secs(5);
        loop {
            let frames = rt
                .block_on(client.status())
                .ok()
                .and_then(|v| v["frames"].as_u64())
                .unwrap_or(0);
            if frames > 0 {
                acked_before_kill += frames;
                break;
            }
            if Instant::now() > deadline {
                break;
            }
            std::thread::sleep(Duration::from_millis(10));
        }
        std::thread::sleep(Duration::from_millis(rng.random_range(0..400)));
        server.kill9();
        kills += 1;
        server = Server::spawn(&layout.config)?;
    }
    let report = rt
        .block_on(fleet_task)
        .map_err(|e| e.to_string())?
        .map_err(|e| e.to_string())?;
    let unacked: usize = report.unacked.iter().map(|(_, n)| n).sum();
    ensure!(unacked == 0, "{unacked} frames unacknowledged after drain");
    ensure!(
        report.link.hello_regressions == 0,
        "{} HELLO replies regressed below an earlier ack (acked data lost)",
        report.link.hello_regressions
    );

    // one more crash after the run: everything must come back from the WAL
    server.kill9();
    let _server = Server::spawn(&layout.config)?;
    let exp = expected_output(&sc);
    let mut total = 0;
    for d in &sc.devices {
        let p = d.point_id;
        let csv = rt
            .block_on(client.export(p, "3s", "0", &u64::MAX.to_string()))
            .map_err(|e| e.to_string())?;
        let lines: Vec<&str> = csv.lines().skip(1).collect();
        let want: Vec<String> = exp.r3s[&p]
            .iter()
            .map(|r| {
                let mut s = format!("{},{},3s,{}", r.point_id, r.ts_ms, r.flags.bits());
                for v in r.values() {
                    s.push_str(&format!(",{v}"));
                }
                s
            })
            .collect();
        ensure!(lines.len() == want.len(), "point {p}: {} records exported, expected {}", lines.len(), want.len());
        for (g, w) in lines.iter().zip(&want) {
            ensure!(*g == w, "point {p}: exported `{g}` expected `{w}`");
        }
        total += lines.len();
    }
    Ok(format!(
        "{kills} kills (+1 after drain), {acked_before_kill} acked frames observed before kills, {total} records recovered, {} resent, 0 hello regressions",
        report.link.frames_resent
    ))
}

fn median_ms(mut d: Vec<Duration>) -> f64 {
    d.sort_unstable();
    d[d.len() / 2].as_secs_f64() * 1e3
}

fn c8_latency(rt: &Runtime) -> Outcome {
    let start = 1_735_689_600_000u64;
    let p = start_in_process(rt, 100, start);
    let store = p.svc.center().store().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for point in 1..=100u32 {
        let batch: Vec<BaseRecord> = (0..10_000u64)
            .map(|k| random_record(&mut rng, point, start + k * 3000, Resolution::R3S))
            .collect();
        store.insert_many(batch);
    }
    ensure!(store.hot_record_count() == 1_000_000, "{} hot records", store.hot_record_count());
    let end = start + 10_000 * 3000;
    let from = end - 3_600_000;
    let mut direct = Vec::new();
    for _ in 0..501 {
        let point = rng.random_range(1..=100);
        let t = Instant::now();
        let r = store.query_range(point, Resolution::R3S, from, end).map_err(|e| e.to_string())?;
        direct.push(t.elapsed());
        ensure!(r.len() == 1200, "last hour returned {} records", r.len());
    }
    let client = ApiClient::new(p.running.http_addr.to_string(), p.layout.admin_token.clone());
    let (f, e) = (from.to_string(), end.to_string());
    let mut http = Vec::new();
    for _ in 0..101 {
        let point = rng.random_range(1..=100);
        let t = Instant::now();
        let s = rt.block_on(client.series(point, "frequency_hz", "3s", &f, &e)).map_err(|e| e.to_string())?;
        http.push(t.elapsed());
        ensure!(s.values.len() == 1200, "http returned {} values", s.values.len());
    }
    let (d, h) = (median_ms(direct), median_ms(http));
    p.running.abort();
    ensure!(d < 10.0, "store median {d:.3} ms");
    ensure!(h < 10.0, "http median {h:.3} ms");
    Ok(format!("1e6 hot records; median store {d:.3} ms, http {h:.3} ms"))
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn c9_golden(_: &Runtime) -> Outcome {
    let s = symmetrical_unbalance(Phasor::new(1.0, 0.0), Phasor::new(1.0, -120.0), Phasor::new(0.0, 0.0))
        .map_err(|e| e.to_string())?;
    ensure!(rel(s.unbalance, 0.5) <= 1e-9, "unbalance {}", s.unbalance);
    let t = thd(100.0, &[(3, 3.0), (4, 4.0)]).map_err(|e| e.to_string())?;
    ensure!(rel(t, 0.05) <= 1e-9, "thd {t}");
    let pt = power_triplet(&[(230.0, 0.0), (0.0, 0.0), (0.0, 0.0)], &[(10.0, -60.0), (0.0, 0.0), (0.0, 0.0)]);
    ensure!(rel(pt.p_w, 1150.0) <= 1e-9, "p {}", pt.p_w);
    ensure!(rel(pt.q_var, 1991.858428704209) <= 1e-9, "q {}", pt.q_var);
    ensure!(rel(pt.s_va, 2300.0) <= 1e-9, "s {}", pt.s_va);
    Ok(format!("u2={} thd={t} P/Q/S=({}, {}, {})", s.unbalance, pt.p_w, pt.q_var, pt.s_va))
}
