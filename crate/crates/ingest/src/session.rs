use std::collections::BTreeSet;

use gridmon_core::wire::DATA_SEQ_LIMIT;

/// Upper bound on out-of-order seqs held above the contiguous prefix.
pub const MAX_PENDING: usize = 10_000;

/// Per-device acceptance state: the highest contiguous durable seq plus a
/// sparse set of seqs accepted beyond the first gap.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionState {
    pub device_id: u32,
    cum_seq: u64,
    pending: BTreeSet<u64>,
}

impl SessionState {
    pub fn new(device_id: u32) -> Self {
        SessionState {
            device_id,
            cum_seq: 0,
            pending: BTreeSet::new(),
        }
    }

    pub fn cum_seq(&self) -> u64 {
        self.cum_seq
    }

    pub fn pending_len(&self) -> usize {
        self.pending.len()
    }

    pub fn is_duplicate(&self, seq: u64) -> bool {
        seq <= self.cum_seq || self.pending.contains(&seq)
    }

    /// Whether a new seq may be taken without breaking the pending bound.
    pub fn can_accept(&self, seq: u64) -> bool {
        seq > self.cum_seq
            && seq < DATA_SEQ_LIMIT
            && (seq == self.cum_seq + 1 || self.pending.len() < MAX_PENDING)
    }

    /// Records `seq` as durable and returns the new cumulative ack.
    pub fn accept(&mut self, seq: u64) -> u64 {
        if seq == self.cum_seq + 1 {
            self.cum_seq = seq;
            while self.pending.remove(&(self.cum_seq + 1)) {
                self.cum_seq += 1;
            }
        } else if seq > self.cum_seq {
            self.pending.insert(seq);
        }
        self.cum_seq
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn gap_fill_merges_pending() {
        let mut s = SessionState::new(1);
        assert_eq!(s.accept(1), 1);
        assert_eq!(s.accept(3), 1);
        assert_eq!(s.accept(4), 1);
        assert_eq!(s.pending_len(), 2);
        assert_eq!(s.accept(2), 4);
        assert_eq!(s.pending_len(), 0);
        assert!(s.is_duplicate(3));
        assert!(!s.can_accept(0));
    }

    #[test]
    fn pending_is_bounded() {
        let mut s = SessionState::new(1);
        for seq in 3..3 + MAX_PENDING as u64 {
            assert!(s.can_accept(seq));
            s.accept(seq);
        }
        assert!(!s.can_accept(50_000));
        // the gap filler is always admissible
        assert!(s.can_accept(1));
        s.accept(1);
        assert_eq!(s.accept(2), 2 + MAX_PENDING as u64);
    }

    proptest! {
        // any permutation of 1..=n ends at cum n, and the cum after each
        // step is the longest prefix present so far
        #[test]
        fn cum_is_longest_prefix(order in Just((1u64..=40).collect::<Vec<_>>()).prop_shuffle()) {
            let mut s = SessionState::new(9);
            let mut seen = std::collections::HashSet::new();
            for seq in order {
                let got = s.accept(seq);
                seen.insert(seq);
                let mut want = 0;
                while seen.contains(&(want + 1)) {
                    want += 1;
                }
                prop_assert_eq!(got, want);
            }
            prop_assert_eq!(s.cum_seq(), 40);
        }
    }
}
