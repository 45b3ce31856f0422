//! The N-entry writeback queue between the L1 and the LLC.
//!
//! An entry is *attached* while the L1 line it came from still holds the
//! block dirty; writes to that line update the entry's snapshot in place.
//! When the L1 evicts the line before the entry drains, the entry detaches
//! and only the snapshot remains. Draining happens one entry at a time over
//! a single LLC write port; the entry stays queued until its write completes.

use std::collections::VecDeque;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WbqEntry {
    pub set: u32,
    pub way: u32,
    pub tag: u64,
    pub block_addr: u64,
    pub attached: bool,
    pub data: Vec<u8>,
    /// Cycle at which the entry was queued.
    pub queued_at: u64,
    /// Completion cycle once the write has been issued.
    pub done_at: Option<u64>,
}

impl WbqEntry {
    pub fn in_flight(&self) -> bool {
        self.done_at.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct WritebackQueue {
    capacity: usize,
    entries: VecDeque<WbqEntry>,
    port_free_at: u64,
}

impl WritebackQueue {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            entries: VecDeque::with_capacity(capacity),
            port_free_at: 0,
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
        self.entries.len() >= self.capacity
    }

    pub fn port_free_at(&self) -> u64 {
        self.port_free_at
    }

    pub fn iter(&self) -> impl Iterator<Item = &WbqEntry> {
        self.entries.iter()
    }

    pub fn front(&self) -> Option<&WbqEntry> {
        self.entries.front()
    }

    pub(crate) fn front_mut(&mut self) -> Option<&mut WbqEntry> {
        self.entries.front_mut()
    }

    pub fn push(&mut self, entry: WbqEntry) {
        assert!(!self.is_full(), "WBQ push into a full queue");
        debug_assert!(
            !entry.attached || self.find_attached(entry.set, entry.way).is_none(),
            "duplicate attached WBQ entry"
        );
        self.entries.push_back(entry);
    }

    pub fn pop(&mut self) -> Option<WbqEntry> {
        self.entries.pop_front()
    }

    pub(crate) fn remove(&mut self, idx: usize) -> Option<WbqEntry> {
        self.entries.remove(idx)
    }

    /// Attached entry for the L1 line at (set, way).
    pub fn find_attached(&self, set: u32, way: u32) -> Option<usize> {
        self.entries
            .iter()
            .position(|e| e.attached && e.set == set && e.way == way)
    }

    pub(crate) fn get_mut(&mut self, idx: usize) -> Option<&mut WbqEntry> {
        self.entries.get_mut(idx)
    }

    /// Youngest entry holding `block_addr`, attached or not.
    pub fn newest_for(&self, block_addr: u64) -> Option<&WbqEntry> {
        self.entries.iter().rev().find(|e| e.block_addr == block_addr)
    }

    /// Reserve the write port for a write starting no earlier than `earliest`.
    /// Returns the completion cycle.
    pub(crate) fn reserve_port(&mut self, earliest: u64, latency: u64) -> u64 {
        let start = earliest.max(self.port_free_at);
        self.port_free_at = start + latency;
        self.port_free_at
    }

    /// Forget all volatile contents (power loss).
    pub fn clear(&mut self, now: u64) {
        self.entries.clear();
        self.port_free_at = now;
    }
}
