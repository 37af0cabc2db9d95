use std::path::Path;

use serde::{Deserialize, Serialize};

/// 2025-01-01T00:00:00Z, aligned to every resolution.
pub const DEFAULT_START_MS: u64 = 1_735_689_600_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub seed: u64,
    pub duration_s: u64,
    /// Wall-clock time of simulated second 0, epoch ms.
    #[serde(default = "default_start")]
    pub start_ms: u64,
    pub devices: Vec<DeviceSpec>,
    #[serde(default)]
    pub injected: Vec<Injection>,
}

fn default_start() -> u64 {
    DEFAULT_START_MS
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSpec {
    pub point_id: u32,
    #[serde(default = "default_sigma")]
    pub noise_sigma_pu: f64,
    #[serde(default = "default_nominal")]
    pub nominal_voltage_v: f64,
}

fn default_sigma() -> f64 {
    0.005
}

fn default_nominal() -> f64 {
    230.0
}

impl DeviceSpec {
    pub fn new(point_id: u32) -> Self {
        DeviceSpec {
            point_id,
            noise_sigma_pu: default_sigma(),
            nominal_voltage_v: default_nominal(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum InjectionKind {
    Sag,
    Swell,
    Interruption,
    LinkOutage,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Injection {
    pub kind: InjectionKind,
    pub point_id: u32,
    pub start_s: u64,
    pub duration_s: u64,
    #[serde(default)]
    pub depth_pu: f64,
    #[serde(default = "all_phases")]
    pub phase_mask: u8,
}

fn all_phases() -> u8 {
    0b111
}

impl Injection {
    pub fn active_at(&self, t_s: u64) -> bool {
        t_s >= self.start_s && t_s < self.start_s + self.duration_s
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ScenarioError {
    #[error("reading scenario: {0}")]
    Io(#[from] std::io::Error),
    #[error("parsing scenario: {0}")]
    Json(#[from] serde_json::Error),
    #[error("duration_s must be positive")]
    ZeroDuration,
    #[error("start_ms must be a multiple of 3000")]
    MisalignedStart,
    #[error("device {0} listed twice")]
    DuplicateDevice(u32),
    #[error("device {0}: noise sigma and nominal voltage must be finite, sigma >= 0, nominal > 0")]
    BadDevice(u32),
    #[error("injection {index}: {reason}")]
    BadInjection { index: usize, reason: &'static str },
}

impl Scenario {
    pub fn from_json(s: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = serde_json::from_str(s)?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Nominal-only scenario with `n` devices numbered from `first_point`.
    pub fn uniform(seed: u64, duration_s: u64, first_point: u32, n: u32) -> Self {
        Scenario {
            seed,
            duration_s,
            start_ms: DEFAULT_START_MS,
            devices: (first_point..first_point + n).map(DeviceSpec::new).collect(),
            injected: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        if self.duration_s == 0 {
            return Err(ScenarioError::ZeroDuration);
        }
        if !self.start_ms.is_multiple_of(3000) {
            return Err(ScenarioError::MisalignedStart);
        }
        let mut seen = std::collections::HashSet::new();
        for d in &self.devices {
            if !seen.insert(d.point_id) {
                return Err(ScenarioError::DuplicateDevice(d.point_id));
            }
            let ok = d.noise_sigma_pu.is_finite()
                && d.noise_sigma_pu >= 0.0
                && d.nominal_voltage_v.is_finite()
                && d.nominal_voltage_v > 0.0;
            if !ok {
                return Err(ScenarioError::BadDevice(d.point_id));
            }
        }
        for (index, inj) in self.injected.iter().enumerate() {
            let bad = |reason| Err(ScenarioError::BadInjection { index, reason });
            if inj.duration_s == 0 {
                return bad("duration_s must be positive");
            }
            if !seen.contains(&inj.point_id) {
                return bad("point_id is not a simulated device");
            }
            if inj.kind != InjectionKind::LinkOutage && !(1..=7).contains(&inj.phase_mask) {
                return bad("phase_mask must select at least one of three phases");
            }
            let d = inj.depth_pu;
            let consistent = match inj.kind {
                InjectionKind::Sag => (0.1..0.9).contains(&d),
                InjectionKind::Swell => d > 1.1 && d.is_finite(),
                InjectionKind::Interruption => (0.0..0.1).contains(&d),
                InjectionKind::LinkOutage => true,
            };
            if !consistent {
                return bad("depth_pu does not match the event kind");
            }
        }
        Ok(())
    }

    pub fn device(&self, point_id: u32) -> Option<&DeviceSpec> {
        self.devices.iter().find(|d| d.point_id == point_id)
    }

    pub fn in_outage(&self, point_id: u32, t_s: u64) -> bool {
        self.injected
            .iter()
            .any(|i| i.kind == InjectionKind::LinkOutage && i.point_id == point_id && i.active_at(t_s))
    }

    pub fn record_ts(&self, t_s: u64) -> u64 {
        self.start_ms + t_s * 1000
    }
}
