//! Time source abstraction so the whole stack can run on simulated time.

use std::sync::atomic::{AtomicU64, Ordering};
use std::time::{SystemTime, UNIX_EPOCH};

pub trait Clock: Send + Sync {
    /// Current time as UTC epoch milliseconds.
    fn now_ms(&self) -> u64;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now_ms(&self) -> u64 {
        SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_millis() as u64)
            .unwrap_or(0)
    }
}

/// Manually driven clock. Time never moves backwards.
#[derive(Debug, Default)]
pub struct VirtualClock {
    now: AtomicU64,
}

impl VirtualClock {
    pub fn new(start_ms: u64) -> Self {
        VirtualClock {
            now: AtomicU64::new(start_ms),
        }
    }

    /// Moves the clock to `ts_ms` unless it is already later.
    pub fn advance_to(&self, ts_ms: u64) {
        self.now.fetch_max(ts_ms, Ordering::SeqCst);
    }

    pub fn advance_by(&self, delta_ms: u64) {
        self.now.fetch_add(delta_ms, Ordering::SeqCst);
    }
}

impl Clock for VirtualClock {
    fn now_ms(&self) -> u64 {
        self.now.load(Ordering::SeqCst)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn virtual_clock_is_monotonic() {
        let c = VirtualClock::new(1000);
        c.advance_to(500);
        assert_eq!(c.now_ms(), 1000);
        c.advance_to(2000);
        c.advance_by(5);
        assert_eq!(c.now_ms(), 2005);
        assert!(SystemClock.now_ms() > 1_600_000_000_000);
    }
}
