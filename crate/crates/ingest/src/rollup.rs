use std::collections::BTreeSet;

use gridmon_core::{window_align, Resolution};
use parking_lot::Mutex;

/// (window_start, point) pairs whose R3S contents changed since their last
/// rollup.
#[derive(Default)]
pub(crate) struct DirtyWindows {
    set: Mutex<BTreeSet<(u64, u32)>>,
}

impl DirtyWindows {
    pub(crate) fn mark_many(&self, items: impl IntoIterator<Item = (u32, u64)>) {
        let mut set = self.set.lock();
        for (p, ts) in items {
            set.insert((window_align(ts, Resolution::R10Min), p));
        }
    }

    /// Removes and returns windows ending at or before `cutoff_ms`.
    pub(crate) fn take_closed(&self, cutoff_ms: u64) -> Vec<(u64, u32)> {
        let span = Resolution::R10Min.duration_ms();
        let mut set = self.set.lock();
        let ready: Vec<_> = set
            .iter()
            .take_while(|(w, _)| w + span <= cutoff_ms)
            .copied()
            .collect();
        for k in &ready {
            set.remove(k);
        }
        ready
    }

    pub(crate) fn len(&self) -> usize {
        self.set.lock().len()
    }
}
