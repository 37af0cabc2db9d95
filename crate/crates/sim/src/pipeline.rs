use std::collections::BTreeMap;
use std::sync::Arc;

use gridmon_core::pq::{aggregate_window, EventDetector, EventDetectorConfig};
use gridmon_core::{window_align, BaseRecord, PQEvent, Resolution};

use crate::scenario::Scenario;
use crate::synth::synthesize_base_record;

/// What one simulated second produced for the uplink.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct StepOutput {
    /// Set on every third second.
    pub r3s: Option<BaseRecord>,
    /// Events closed since the previous emission; only set alongside `r3s`.
    pub events: Vec<PQEvent>,
}

/// The device-local measurement chain without any I/O: synthesis, event
/// detection on 1 s voltages and 3 s aggregation.
pub struct DevicePipeline {
    scenario: Arc<Scenario>,
    point_id: u32,
    detector: EventDetector,
    window: Vec<BaseRecord>,
    closed: Vec<PQEvent>,
    next_t: u64,
}

impl DevicePipeline {
    pub fn new(scenario: Arc<Scenario>, point_id: u32) -> Self {
        DevicePipeline {
            scenario,
            point_id,
            detector: EventDetector::new(point_id, EventDetectorConfig::default())
                .expect("default thresholds are consistent"),
            window: Vec::with_capacity(3),
            closed: Vec::new(),
            next_t: 0,
        }
    }

    pub fn point_id(&self) -> u32 {
        self.point_id
    }

    pub fn next_t(&self) -> u64 {
        self.next_t
    }

    /// Advances by one second. Seconds must be stepped in order from 0.
    pub fn step(&mut self, t_s: u64) -> StepOutput {
        assert_eq!(t_s, self.next_t, "device steps must be consecutive");
        self.next_t += 1;
        let (r, vrms) = synthesize_base_record(&self.scenario, self.point_id, t_s);
        let closed = self
            .detector
            .step(r.ts_ms, vrms)
            .expect("timestamps increase by construction");
        self.closed.extend(closed);
        self.window.push(r);
        if !(t_s + 1).is_multiple_of(3) {
            return StepOutput::default();
        }
        let agg = aggregate_window(&self.window, Resolution::R3S).expect("window is one aligned 3 s slot");
        self.window.clear();
        StepOutput {
            r3s: Some(agg),
            events: std::mem::take(&mut self.closed),
        }
    }
}

/// Everything the center should end up holding for a scenario, computed
/// without a network.
#[derive(Debug, Clone, Default)]
pub struct ExpectedOutput {
    pub r3s: BTreeMap<u32, Vec<BaseRecord>>,
    pub r10min: BTreeMap<u32, Vec<BaseRecord>>,
    pub events: BTreeMap<u32, Vec<PQEvent>>,
}

pub fn expected_output(scenario: &Scenario) -> ExpectedOutput {
    let scenario = Arc::new(scenario.clone());
    let mut out = ExpectedOutput::default();
    for d in &scenario.devices {
        let mut p = DevicePipeline::new(scenario.clone(), d.point_id);
        let mut r3s = Vec::new();
        let mut events = Vec::new();
        for t in 0..scenario.duration_s {
            let s = p.step(t);
            r3s.extend(s.r3s);
            events.extend(s.events);
        }
        let mut by_window: BTreeMap<u64, Vec<BaseRecord>> = BTreeMap::new();
        for r in &r3s {
            by_window
                .entry(window_align(r.ts_ms, Resolution::R10Min))
                .or_default()
                .push(*r);
        }
        let r10: Vec<BaseRecord> = by_window
            .values()
            .map(|w| aggregate_window(w, Resolution::R10Min).expect("aligned window"))
            .collect();
        out.r3s.insert(d.point_id, r3s);
        out.r10min.insert(d.point_id, r10);
        out.events.insert(d.point_id, events);
    }
    out
}
