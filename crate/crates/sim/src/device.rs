use std::path::Path;
use std::sync::Arc;

use gridmon_core::wire::{encode_batch, encode_event_batch, seal_frame, DeviceKey, FrameHeader, FrameType};

use crate::journal::Journal;
use crate::pipeline::{DevicePipeline, StepOutput};
use crate::scenario::Scenario;
use crate::SimError;

/// A simulated device: measurement pipeline plus its outbound journal. The
/// device id is the id of the point it measures.
pub struct Device {
    pipeline: DevicePipeline,
    journal: Journal,
    key: DeviceKey,
}

impl Device {
    pub fn new(
        scenario: Arc<Scenario>,
        point_id: u32,
        key: DeviceKey,
        journal_dir: &Path,
        fsync: bool,
    ) -> Result<Self, SimError> {
        Ok(Device {
            pipeline: DevicePipeline::new(scenario, point_id),
            journal: Journal::open(journal_dir, point_id, fsync)?,
            key,
        })
    }

    pub fn id(&self) -> u32 {
        self.pipeline.point_id()
    }

    pub fn key(&self) -> DeviceKey {
        self.key
    }

    pub fn journal(&self) -> &Journal {
        &self.journal
    }

    pub fn journal_mut(&mut self) -> &mut Journal {
        &mut self.journal
    }

    /// Simulates second `t_s` and journals any frames it produced: a DATA
    /// frame every third second, followed by an EVENT frame when events
    /// closed. Returns the journaled seqs.
    pub fn step(&mut self, t_s: u64) -> Result<Vec<u64>, SimError> {
        let StepOutput { r3s, events } = self.pipeline.step(t_s);
        let mut seqs = Vec::new();
        let id = self.id();
        let key = self.key;
        if let Some(r) = r3s {
            let payload = encode_batch(&[r]).expect("single record batch");
            seqs.push(self.journal.append_with(|seq| {
                seal_frame(FrameHeader::new(FrameType::Data, id, seq), &payload, &key)
            })?);
        }
        if !events.is_empty() {
            let payload = encode_event_batch(&events).expect("few events per window");
            seqs.push(self.journal.append_with(|seq| {
                seal_frame(FrameHeader::new(FrameType::Event, id, seq), &payload, &key)
            })?);
        }
        Ok(seqs)
    }
}
