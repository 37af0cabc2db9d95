//! Simulated measurement devices.
//!
//! Each device synthesizes one-second electrical state from a [`Scenario`],
//! runs event detection and 3-second aggregation locally, journals every
//! outbound frame, and forwards the journal to the center over TCP with
//! cumulative acknowledgement.

mod device;
mod fleet;
mod journal;
mod link;
mod pipeline;
mod scenario;
mod synth;

pub use device::Device;
pub use fleet::{run_fleet, FleetConfig, FleetReport, Pacing};
pub use journal::{Journal, JournalEntry};
pub use link::{DeviceLink, LinkStats};
pub use pipeline::{expected_output, DevicePipeline, ExpectedOutput, StepOutput};
pub use scenario::{DeviceSpec, Injection, InjectionKind, Scenario, ScenarioError, DEFAULT_START_MS};
pub use synth::synthesize_base_record;

#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("journal io: {0}")]
    JournalIo(#[from] std::io::Error),
    #[error("journal {} corrupt at byte {offset}", path.display())]
    CorruptJournal { path: std::path::PathBuf, offset: u64 },
    #[error("no key for device {0}")]
    NoKey(u32),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("device {0} could not drain its journal before the deadline")]
    DrainTimeout(u32),
}
