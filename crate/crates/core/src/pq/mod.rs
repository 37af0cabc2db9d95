//! Power-quality numerics: phasor-derived quantities, window aggregation and
//! sag/swell/interruption detection.

mod aggregate;
mod events;
mod phasor;
mod power;

pub use aggregate::aggregate_window;
pub use events::{DetectorConfigError, EventDetector, EventDetectorConfig, PhaseMode};
pub use phasor::{symmetrical_unbalance, Phasor, SequenceComponents};
pub use power::{power_triplet, thd, PowerTriplet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, thiserror::Error)]
pub enum PqError {
    #[error("positive-sequence magnitude is zero; unbalance undefined")]
    Degenerate,
    #[error("fundamental must be positive")]
    ZeroFundamental,
    #[error("harmonic orders must be distinct and within 2..=50")]
    BadHarmonicOrder,
    #[error("aggregation window has no inputs")]
    EmptyWindow,
    #[error("inputs mix points or resolutions")]
    MixedKeys,
    #[error("input falls outside the target window")]
    OutOfWindow,
    #[error("target resolution is not a multiple of the input resolution")]
    IncompatibleResolution,
    #[error("timestamps must strictly increase")]
    NonMonotonicTs,
}
