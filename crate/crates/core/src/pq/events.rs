use serde::{Deserialize, Serialize};

use super::PqError;
use crate::model::{EventType, PQEvent};

/// Detector thresholds in per-unit of nominal voltage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventDetectorConfig {
    pub sag_threshold_pu: f64,
    pub swell_threshold_pu: f64,
    pub interruption_threshold_pu: f64,
    pub hysteresis_pu: f64,
}

impl Default for EventDetectorConfig {
    fn default() -> Self {
        EventDetectorConfig {
            sag_threshold_pu: 0.9,
            swell_threshold_pu: 1.1,
            interruption_threshold_pu: 0.1,
            hysteresis_pu: 0.02,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("inconsistent detector thresholds: need interruption < sag - hysteresis, swell > sag, hysteresis > 0")]
pub struct DetectorConfigError;

impl EventDetectorConfig {
    pub fn validate(&self) -> Result<(), DetectorConfigError> {
        let ok = self.hysteresis_pu > 0.0
            && self.interruption_threshold_pu < self.sag_threshold_pu - self.hysteresis_pu
            && self.swell_threshold_pu > self.sag_threshold_pu;
        if ok {
            Ok(())
        } else {
            Err(DetectorConfigError)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum PhaseMode {
    #[default]
    Normal,
    InSag,
    InSwell,
    InInterruption,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct OpenEvent {
    kind: EventType,
    start_ms: u64,
    extreme_pu: f64,
}

/// Streaming per-point sag/swell/interruption detector.
///
/// Each phase runs an independent state machine. Entering a mode needs a
/// strict threshold crossing (interruption is checked before sag); leaving it
/// needs the voltage back past the threshold by the hysteresis margin. The
/// sample that closes an event is then re-examined as if the phase were
/// normal, so an interruption that recovers only into the sag band is closed
/// and followed by a sag starting at the same timestamp.
#[derive(Debug, Clone)]
pub struct EventDetector {
    point_id: u32,
    cfg: EventDetectorConfig,
    open: [Option<OpenEvent>; 3],
    last_ts: Option<u64>,
}

impl EventDetector {
    pub fn new(point_id: u32, cfg: EventDetectorConfig) -> Result<Self, DetectorConfigError> {
        cfg.validate()?;
        Ok(EventDetector {
            point_id,
            cfg,
            open: [None; 3],
            last_ts: None,
        })
    }

    pub fn mode(&self, phase: usize) -> PhaseMode {
        match self.open[phase].map(|o| o.kind) {
            None => PhaseMode::Normal,
            Some(EventType::Sag) => PhaseMode::InSag,
            Some(EventType::Swell) => PhaseMode::InSwell,
            Some(EventType::Interruption) => PhaseMode::InInterruption,
        }
    }

    /// Feeds one sample per phase and returns the events it closed, ordered
    /// by phase.
    pub fn step(&mut self, ts_ms: u64, vrms_pu: [f64; 3]) -> Result<Vec<PQEvent>, PqError> {
        if self.last_ts.is_some_and(|last| ts_ms <= last) {
            return Err(PqError::NonMonotonicTs);
        }
        self.last_ts = Some(ts_ms);
        let mut closed = Vec::new();
        for (phase, &v) in vrms_pu.iter().enumerate() {
            if let Some(mut ev) = self.open[phase] {
                if self.recovered(ev.kind, v) {
                    closed.push(PQEvent {
                        point_id: self.point_id,
                        event_type: ev.kind,
                        phase_mask: 1 << phase,
                        start_ms: ev.start_ms,
                        end_ms: ts_ms,
                        extreme_pu: ev.extreme_pu,
                    });
                    self.open[phase] = None;
                } else {
                    ev.extreme_pu = match ev.kind {
                        EventType::Swell => ev.extreme_pu.max(v),
                        _ => ev.extreme_pu.min(v),
                    };
                    self.open[phase] = Some(ev);
                    continue;
                }
            }
            self.open[phase] = self.classify(v).map(|kind| OpenEvent {
                kind,
                start_ms: ts_ms,
                extreme_pu: v,
            });
        }
        Ok(closed)
    }

    fn classify(&self, v: f64) -> Option<EventType> {
        if v < self.cfg.interruption_threshold_pu {
            Some(EventType::Interruption)
        } else if v < self.cfg.sag_threshold_pu {
            Some(EventType::Sag)
        } else if v > self.cfg.swell_threshold_pu {
            Some(EventType::Swell)
        } else {
            None
        }
    }

    fn recovered(&self, kind: EventType, v: f64) -> bool {
        let c = &self.cfg;
        match kind {
            // A deeper drop ends the sag and opens an interruption.
            EventType::Sag => v >= c.sag_threshold_pu + c.hysteresis_pu || v < c.interruption_threshold_pu,
            EventType::Swell => v <= c.swell_threshold_pu - c.hysteresis_pu,
            EventType::Interruption => v >= c.interruption_threshold_pu + c.hysteresis_pu,
        }
    }
}
