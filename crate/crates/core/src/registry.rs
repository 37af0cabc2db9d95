//! Point registry and record validation.

use std::collections::BTreeMap;
use std::io::Read;
use std::path::Path;

use serde::Serialize;

use crate::model::{BaseRecord, MeasurementPoint, RecordFlags};

#[derive(Debug, thiserror::Error)]
pub enum RegistryError {
    #[error("registry io: {0}")]
    Io(#[from] std::io::Error),
    #[error("registry csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("duplicate point_id {0}")]
    DuplicatePoint(u32),
    #[error("point {0}: nominal voltage and frequency must be positive")]
    BadNominal(u32),
}

/// The fixed set of points known to a deployment, loaded at startup.
#[derive(Debug, Clone, Default, Serialize)]
pub struct PointRegistry {
    points: BTreeMap<u32, MeasurementPoint>,
}

impl PointRegistry {
    pub fn new(points: impl IntoIterator<Item = MeasurementPoint>) -> Result<Self, RegistryError> {
        let mut map = BTreeMap::new();
        for p in points {
            if !(p.nominal_voltage_v > 0.0 && p.nominal_frequency_hz > 0.0) {
                return Err(RegistryError::BadNominal(p.point_id));
            }
            let id = p.point_id;
            if map.insert(id, p).is_some() {
                return Err(RegistryError::DuplicatePoint(id));
            }
        }
        Ok(PointRegistry { points: map })
    }

    /// Reads `point_id,name,nominal_voltage_v,nominal_frequency_hz` CSV.
    pub fn from_csv<R: Read>(reader: R) -> Result<Self, RegistryError> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let points = rdr
            .deserialize::<MeasurementPoint>()
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(points)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, RegistryError> {
        Self::from_csv(std::fs::File::open(path)?)
    }

    pub fn get(&self, point_id: u32) -> Option<&MeasurementPoint> {
        self.points.get(&point_id)
    }

    pub fn contains(&self, point_id: u32) -> bool {
        self.points.contains_key(&point_id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MeasurementPoint> {
        self.points.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = u32> + '_ {
        self.points.keys().copied()
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Why a record was refused. Rules are checked in declaration order and the
/// first violation wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, thiserror::Error)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Rejection {
    #[error("UNKNOWN_POINT")]
    UnknownPoint,
    #[error("MISALIGNED_TS")]
    MisalignedTs,
    #[error("NON_FINITE")]
    NonFinite,
    #[error("NEGATIVE_FIELD")]
    NegativeField,
    #[error("POWER_INCONSISTENT")]
    PowerInconsistent,
}

/// Relative slack allowed on `s² ≥ p²`.
const POWER_REL_TOL: f64 = 1e-6;

pub fn validate_record(r: &BaseRecord, registry: &PointRegistry) -> Result<(), Rejection> {
    if !registry.contains(r.point_id) {
        return Err(Rejection::UnknownPoint);
    }
    if !r.ts_ms.is_multiple_of(r.resolution.duration_ms()) {
        return Err(Rejection::MisalignedTs);
    }
    if !r.values().iter().all(|v| v.is_finite()) {
        return Err(Rejection::NonFinite);
    }
    let non_negative = r
        .vrms_pu
        .iter()
        .chain(r.irms_a.iter())
        .chain(r.thd_v.iter())
        .chain([r.unbalance, r.s_va].iter())
        .all(|v| *v >= 0.0);
    if !non_negative {
        return Err(Rejection::NegativeField);
    }
    // an INCOMPLETE record may have P or S absent (stored as zero)
    let s2 = r.s_va * r.s_va;
    let p2 = r.p_w * r.p_w;
    if !r.flags.contains(RecordFlags::INCOMPLETE) && s2 < p2 * (1.0 - POWER_REL_TOL) {
        return Err(Rejection::PowerInconsistent);
    }
    Ok(())
}
