//! Core building blocks of the gridmon energy-monitoring stack: the shared
//! domain model, power-quality computation and the device wire protocol.

pub mod clock;
pub mod model;
pub mod pq;
pub mod registry;
pub mod wire;

pub use model::{
    param_index, window_align, BaseRecord, EventType, MeasurementPoint, PQEvent, RecordFlags,
    Resolution, PARAM_COUNT, PARAM_NAMES,
};
pub use registry::{validate_record, PointRegistry, Rejection};
