//! Devices against a real ingest server over loopback.

use std::net::SocketAddr;
use std::sync::Arc;
use std::time::Duration;

use gridmon_core::clock::VirtualClock;
use gridmon_core::wire::{encode_record, DeviceKey, FrameType, KeyRing};
use gridmon_core::{BaseRecord, MeasurementPoint, PointRegistry, Resolution};
use gridmon_ingest::{server, Center, CenterConfig};
use gridmon_sim::{
    expected_output, run_fleet, Device, DeviceLink, FleetConfig, Injection, InjectionKind, Pacing,
    Scenario,
};
use gridmon_store::{EventStore, TieredStore};
use tokio::net::TcpListener;

fn keys(ids: impl IntoIterator<Item = u32>) -> KeyRing {
    let mut k = KeyRing::new();
    for id in ids {
        let mut b = [0u8; 16];
        b[..4].copy_from_slice(&id.to_be_bytes());
        b[15] = 0x5a;
        k.insert(id, DeviceKey(b));
    }
    k
}

async fn center(dir: &std::path::Path, sc: &Scenario) -> (SocketAddr, Arc<Center>) {
    let ids: Vec<u32> = sc.devices.iter().map(|d| d.point_id).collect();
    let registry = PointRegistry::new(ids.iter().map(|&id| MeasurementPoint {
        point_id: id,
        name: format!("p{id}"),
        nominal_voltage_v: 230.0,
        nominal_frequency_hz: 50.0,
    }))
    .unwrap();
    let store = Arc::new(TieredStore::open(dir.join("data"), None).unwrap());
    let (c, _) = Center::open(
        CenterConfig::new(dir.join("wal")),
        Arc::new(registry),
        keys(ids),
        store,
        Arc::new(EventStore::in_memory()),
    )
    .unwrap();
    let c = Arc::new(c);
    let l = TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = l.local_addr().unwrap();
    tokio::spawn(server::serve(l, c.clone()));
    (addr, c)
}

fn bytes(rs: &[BaseRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in rs {
        encode_record(r, &mut out);
    }
    out
}

#[tokio::test(flavor = "multi_thread", worker_threads = 2)]
async fn outages_lose_nothing_and_duplicate_nothing() {
    let d = tempfile::tempdir().unwrap();
    let mut sc = Scenario::uniform(11, 120, 1, 3);
    for (point, start) in [(2, 10), (3, 0), (3, 90)] {
        sc.injected.push(Injection {
            kind: InjectionKind::LinkOutage,
            point_id: point,
            start_s: start,
            duration_s: 30,
            depth_pu: 0.0,
            phase_mask: 7,
        });
    }
    sc.injected.push(Injection {
        kind: InjectionKind::Swell,
        point_id: 2,
        start_s: 20,
        duration_s: 4,
        depth_pu: 1.2,
        phase_mask: 0b100,
    });
    let (addr, c) = center(d.path(), &sc).await;
    let clock = Arc::new(VirtualClock::new(sc.start_ms));
    let cfg = FleetConfig::new(addr, keys(1..=3), d.path().join("journal"), Pacing::Virtual(clock));
    let report = run_fleet(Arc::new(sc.clone()), cfg).await.unwrap();
    assert!(report.unacked.iter().all(|(_, n)| *n == 0), "{:?}", report.unacked);
    assert!(report.link.frames_resent > 0 || report.link.connects > 3);
    assert_eq!(report.link.hello_regressions, 0);

    let want = expected_output(&sc);
    for p in 1..=3 {
        let got = c.store().query_range(p, Resolution::R3S, 0, u64::MAX).unwrap();
        assert_eq!(got.len(), 40);
        assert_eq!(bytes(&got), bytes(&want.r3s[&p]), "point {p}");
    }
    let ev = c.events().query(2, 0, u64::MAX, None);
    assert_eq!(ev, want.events[&2]);
    assert_eq!(ev.len(), 1);
}

#[tokio::test]
async fn frames_during_outage_are_journaled_not_sent() {
    let d = tempfile::tempdir().unwrap();
    let sc = Scenario::uniform(5, 30, 7, 1);
    let (addr, c) = center(d.path(), &sc).await;
    let key = keys([7]).get(7).unwrap();
    let mut dev = Device::new(Arc::new(sc.clone()), 7, key, &d.path().join("j"), false).unwrap();
    let mut link = DeviceLink::new(addr);

    // offline: 9 steps journal three frames
    let mut seqs = Vec::new();
    for t in 0..9 {
        seqs.extend(dev.step(t).unwrap());
    }
    assert_eq!(seqs, vec![1, 2, 3]);
    assert_eq!(dev.journal().unacked(), 3);
    assert_eq!(c.cum_seq(7), None);

    // back online: the backlog goes out and is acked
    assert!(link.connect(&mut dev).await.unwrap());
    link.drain(&mut dev, Duration::from_secs(5), Duration::from_millis(20)).await.unwrap();
    assert_eq!(c.cum_seq(7), Some(3));
    assert_eq!(link.stats().frames_resent, 3);
    assert_eq!(dev.journal().unacked(), 0);
}

#[test]
fn two_runs_produce_identical_frames() {
    let sc = Arc::new(Scenario::uniform(77, 60, 1, 2));
    let run = || {
        let d = tempfile::tempdir().unwrap();
        let mut dev = Device::new(sc.clone(), 2, DeviceKey([3; 16]), d.path(), false).unwrap();
        for t in 0..60 {
            dev.step(t).unwrap();
        }
        dev.journal().replay(0).map(|e| e.frame.clone()).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 20);
    assert_eq!(a, b);
    let types: Vec<u8> = a.iter().map(|f| f[5]).collect();
    assert!(types.iter().all(|&t| t == FrameType::Data.code()));
}
