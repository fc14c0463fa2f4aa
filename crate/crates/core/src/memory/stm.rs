use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use super::MemoryError;

pub const DEFAULT_STM_CAPACITY: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StmEntry {
    pub log_id: u64,
    pub summary: String,
    pub confidence: f64,
    pub timestamp: u64,
    pub is_merged: bool,
}

/// Fixed-capacity queue of recent summaries, oldest first.
///
/// Pushing into a full buffer is an error: the owner is expected to compress
/// the buffer as soon as `push` reports it full.
#[derive(Debug, Clone)]
pub struct StmBuffer {
    capacity: usize,
    entries: VecDeque<StmEntry>,
}

impl StmBuffer {
    pub fn new(capacity: usize) -> Self {
        assert!(capacity >= 1, "STM capacity must be at least 1");
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.entries.len() == self.capacity
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &StmEntry> {
        self.entries.iter()
    }

    pub fn last_timestamp(&self) -> Option<u64> {
        self.entries.back().map(|e| e.timestamp)
    }

    pub fn confidences(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.confidence).collect()
    }

    /// Append `entry`; returns whether the buffer is now full.
    pub fn push(&mut self, entry: StmEntry) -> Result<bool, MemoryError> {
        if !(0.0..=1.0).contains(&entry.confidence) {
            return Err(MemoryError::InvalidConfidence(entry.confidence));
        }
        if self.is_full() {
            return Err(MemoryError::StmFull(self.capacity));
        }
        if let Some(last) = self.last_timestamp() {
            if entry.timestamp < last {
                return Err(MemoryError::OutOfOrder {
                    last,
                    given: entry.timestamp,
                });
            }
        }
        self.entries.push_back(entry);
        Ok(self.is_full())
    }

    /// Replace the contents with a single entry.
    pub fn reset_to(&mut self, entry: StmEntry) -> Result<(), MemoryError> {
        if !(0.0..=1.0).contains(&entry.confidence) {
            return Err(MemoryError::InvalidConfidence(entry.confidence));
        }
        self.entries.clear();
        self.entries.push_back(entry);
        Ok(())
    }

    pub fn clear(&mut self) {
        self.entries.clear();
    }
}

impl Default for StmBuffer {
    fn default() -> Self {
        Self::new(DEFAULT_STM_CAPACITY)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn entry(ts: u64) -> StmEntry {
        StmEntry {
            log_id: ts,
            summary: format!("s{ts}"),
            confidence: 0.5,
            timestamp: ts,
            is_merged: false,
        }
    }

    #[test]
    fn first_push() {
        let mut stm = StmBuffer::default();
        assert!(!stm.push(entry(0)).unwrap());
        assert_eq!(stm.len(), 1);
    }

    #[test]
    fn tenth_push_fills_and_eleventh_is_rejected() {
        let mut stm = StmBuffer::default();
        for t in 0..9 {
            assert!(!stm.push(entry(t)).unwrap());
        }
        assert!(stm.push(entry(9)).unwrap());
        assert!(matches!(stm.push(entry(10)), Err(MemoryError::StmFull(10))));
        assert_eq!(stm.len(), 10);
    }

    #[test]
    fn out_of_order_rejected() {
        let mut stm = StmBuffer::default();
        stm.push(entry(5)).unwrap();
        assert!(matches!(stm.push(entry(4)), Err(MemoryError::OutOfOrder { last: 5, given: 4 })));
        stm.push(entry(5)).unwrap();
    }

    #[test]
    fn confidence_range_checked() {
        let mut stm = StmBuffer::default();
        let mut e = entry(0);
        e.confidence = 1.5;
        assert!(stm.push(e).is_err());
    }

    #[test]
    fn reset_leaves_one() {
        let mut stm = StmBuffer::new(3);
        for t in 0..3 {
            stm.push(entry(t)).unwrap();
        }
        let mut merged = entry(3);
        merged.is_merged = true;
        stm.reset_to(merged).unwrap();
        assert_eq!(stm.len(), 1);
        assert!(stm.iter().next().unwrap().is_merged);
    }

    proptest! {
        #[test]
        fn never_exceeds_capacity(cap in 1usize..15, ops in proptest::collection::vec(0u8..4, 0..100)) {
            let mut stm = StmBuffer::new(cap);
            for (ts, op) in (0u64..).zip(ops) {
                match op {
                    0 => stm.clear(),
                    1 => { stm.reset_to(entry(ts)).unwrap(); }
                    _ => { let _ = stm.push(entry(ts)); }
                }
                prop_assert!(stm.len() <= cap);
                let stamps: Vec<_> = stm.iter().map(|e| e.timestamp).collect();
                prop_assert!(stamps.windows(2).all(|w| w[0] <= w[1]));
            }
        }
    }
}
