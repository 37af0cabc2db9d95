//! Shared vocabulary: measurement points, resolutions, records and events.
//!
//! Every value here is an immutable plain-data type. Timestamps are UTC epoch
//! milliseconds marking the *start* of the averaging window, and voltages are
//! expressed in per-unit of the point's nominal line-to-neutral voltage.

use std::fmt;
use std::str::FromStr;

use bitflags::bitflags;
use serde::{Deserialize, Serialize};

/// A monitored point in the grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementPoint {
    pub point_id: u32,
    pub name: String,
    /// Line-to-neutral RMS volts.
    pub nominal_voltage_v: f64,
    #[serde(default = "default_nominal_frequency")]
    pub nominal_frequency_hz: f64,
}

fn default_nominal_frequency() -> f64 {
    50.0
}

/// Averaging resolution of a stored record.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Resolution {
    #[serde(rename = "100ms")]
    R100Ms,
    #[serde(rename = "1s")]
    R1S,
    #[serde(rename = "3s")]
    R3S,
    #[serde(rename = "10min")]
    R10Min,
}

impl Resolution {
    pub const ALL: [Resolution; 4] = [
        Resolution::R100Ms,
        Resolution::R1S,
        Resolution::R3S,
        Resolution::R10Min,
    ];

    pub const fn duration_ms(self) -> u64 {
        match self {
            Resolution::R100Ms => 100,
            Resolution::R1S => 1_000,
            Resolution::R3S => 3_000,
            Resolution::R10Min => 600_000,
        }
    }

    /// Wire code used by data batches and segment headers.
    pub const fn code(self) -> u8 {
        match self {
            Resolution::R100Ms => 0,
            Resolution::R1S => 1,
            Resolution::R3S => 2,
            Resolution::R10Min => 3,
        }
    }

    pub const fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(Resolution::R100Ms),
            1 => Some(Resolution::R1S),
            2 => Some(Resolution::R3S),
            3 => Some(Resolution::R10Min),
            _ => None,
        }
    }

    pub const fn label(self) -> &'static str {
        match self {
            Resolution::R100Ms => "100ms",
            Resolution::R1S => "1s",
            Resolution::R3S => "3s",
            Resolution::R10Min => "10min",
        }
    }
}

impl fmt::Display for Resolution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown resolution `{0}` (expected one of 100ms, 1s, 3s, 10min)")]
pub struct ParseResolutionError(pub String);

impl FromStr for Resolution {
    type Err = ParseResolutionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Resolution::ALL
            .into_iter()
            .find(|r| r.label() == s)
            .ok_or_else(|| ParseResolutionError(s.to_string()))
    }
}

bitflags! {
    /// Quality flags attached to a record. Unknown bits are retained so that
    /// wire payloads round-trip unchanged.
    #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
    pub struct RecordFlags: u8 {
        /// Fewer inputs than the window requires, or parameters missing.
        const INCOMPLETE = 0b0000_0001;
        const CLOCK_UNSYNCED = 0b0000_0010;
    }
}

impl Serialize for RecordFlags {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u8(self.bits())
    }
}

impl<'de> Deserialize<'de> for RecordFlags {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        u8::deserialize(d).map(RecordFlags::from_bits_retain)
    }
}

/// Number of numeric parameters carried by every [`BaseRecord`].
pub const PARAM_COUNT: usize = 15;

/// Parameter names in wire order.
pub const PARAM_NAMES: [&str; PARAM_COUNT] = [
    "frequency_hz",
    "vrms_pu_0",
    "vrms_pu_1",
    "vrms_pu_2",
    "irms_a_0",
    "irms_a_1",
    "irms_a_2",
    "p_w",
    "q_var",
    "s_va",
    "thd_v_0",
    "thd_v_1",
    "thd_v_2",
    "unbalance",
    "flicker_pst",
];

/// Index of a parameter name inside [`BaseRecord::values`].
pub fn param_index(name: &str) -> Option<usize> {
    PARAM_NAMES.iter().position(|p| *p == name)
}

/// One measurement of the full power-quality parameter set for one point,
/// one aligned window and one resolution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BaseRecord {
    pub point_id: u32,
    pub ts_ms: u64,
    pub resolution: Resolution,
    pub flags: RecordFlags,
    pub frequency_hz: f64,
    pub vrms_pu: [f64; 3],
    pub irms_a: [f64; 3],
    pub p_w: f64,
    pub q_var: f64,
    pub s_va: f64,
    pub thd_v: [f64; 3],
    pub unbalance: f64,
    /// Carried through untouched; never computed here.
    pub flicker_pst: f64,
}

impl BaseRecord {
    /// A record with every numeric field zero.
    pub fn zeroed(point_id: u32, ts_ms: u64, resolution: Resolution) -> Self {
        BaseRecord {
            point_id,
            ts_ms,
            resolution,
            flags: RecordFlags::empty(),
            frequency_hz: 0.0,
            vrms_pu: [0.0; 3],
            irms_a: [0.0; 3],
            p_w: 0.0,
            q_var: 0.0,
            s_va: 0.0,
            thd_v: [0.0; 3],
            unbalance: 0.0,
            flicker_pst: 0.0,
        }
    }

    /// The numeric values in wire order.
    pub fn values(&self) -> [f64; PARAM_COUNT] {
        [
            self.frequency_hz,
            self.vrms_pu[0],
            self.vrms_pu[1],
            self.vrms_pu[2],
            self.irms_a[0],
            self.irms_a[1],
            self.irms_a[2],
            self.p_w,
            self.q_var,
            self.s_va,
            self.thd_v[0],
            self.thd_v[1],
            self.thd_v[2],
            self.unbalance,
            self.flicker_pst,
        ]
    }

    pub fn set_values(&mut self, v: &[f64; PARAM_COUNT]) {
        self.frequency_hz = v[0];
        self.vrms_pu = [v[1], v[2], v[3]];
        self.irms_a = [v[4], v[5], v[6]];
        self.p_w = v[7];
        self.q_var = v[8];
        self.s_va = v[9];
        self.thd_v = [v[10], v[11], v[12]];
        self.unbalance = v[13];
        self.flicker_pst = v[14];
    }

    pub fn value(&self, index: usize) -> f64 {
        self.values()[index]
    }

    /// Bitwise equality, treating every f64 by its bit pattern.
    pub fn bit_eq(&self, other: &BaseRecord) -> bool {
        self.point_id == other.point_id
            && self.ts_ms == other.ts_ms
            && self.resolution == other.resolution
            && self.flags == other.flags
            && self
                .values()
                .iter()
                .zip(other.values().iter())
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Kind of a detected voltage event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventType {
    Sag,
    Swell,
    Interruption,
}

impl EventType {
    pub const fn code(self) -> u8 {
        match self {
            EventType::Sag => 1,
            EventType::Swell => 2,
            EventType::Interruption => 3,
        }
    }

    pub const fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(EventType::Sag),
            2 => Some(EventType::Swell),
            3 => Some(EventType::Interruption),
            _ => None,
        }
    }

    pub const fn label(self) -> &'static str {
        match self {
            EventType::Sag => "SAG",
            EventType::Swell => "SWELL",
            EventType::Interruption => "INTERRUPTION",
        }
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SAG" => Ok(EventType::Sag),
            "SWELL" => Ok(EventType::Swell),
            "INTERRUPTION" => Ok(EventType::Interruption),
            other => Err(format!("unknown event type `{other}`")),
        }
    }
}

/// A closed sag, swell or interruption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PQEvent {
    pub point_id: u32,
    pub event_type: EventType,
    /// Bit `k` set means phase `k` (0 = A) took part.
    pub phase_mask: u8,
    pub start_ms: u64,
    pub end_ms: u64,
    /// Minimum (sag, interruption) or maximum (swell) per-unit voltage.
    pub extreme_pu: f64,
}

impl PQEvent {
    /// Identity used for de-duplication in event storage.
    pub fn identity(&self) -> (u32, EventType, u8, u64, u64) {
        (
            self.point_id,
            self.event_type,
            self.phase_mask,
            self.start_ms,
            self.end_ms,
        )
    }

    /// Half-open overlap with `[from_ms, to_ms)`.
    pub fn overlaps(&self, from_ms: u64, to_ms: u64) -> bool {
        self.start_ms < to_ms && self.end_ms > from_ms
    }
}

/// Floors `ts_ms` to the start of its `resolution` window.
pub fn window_align(ts_ms: u64, resolution: Resolution) -> u64 {
    let d = resolution.duration_ms();
    ts_ms - ts_ms % d
}
