//! The dirty block table: an M-entry fully associative record of which L1
//! lines are dirty, each with a write counter (LFW) or recency rank (LRW).

use crate::policy::{self, PolicyState};

/// One DBT entry. `counter` is the write counter under LFW and the recency
/// rank under LRW; the hardware reuses the same field for both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DbtEntry {
    pub set: u32,
    pub way: u32,
    pub counter: u32,
}

#[derive(Debug, Clone)]
pub struct DirtyBlockTable {
    slots: Vec<Option<DbtEntry>>,
    len: usize,
    policy: PolicyState,
}

impl DirtyBlockTable {
    pub fn new(entries: usize, policy: PolicyState) -> Self {
        Self {
            slots: vec![None; entries],
            len: 0,
            policy,
        }
    }

    pub fn policy(&self) -> &PolicyState {
        &self.policy
    }

    pub fn capacity(&self) -> usize {
        self.slots.len()
    }

    /// Number of valid entries.
    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn is_full(&self) -> bool {
        self.len == self.slots.len()
    }

    pub fn get(&self, slot: usize) -> Option<&DbtEntry> {
        self.slots.get(slot).and_then(Option::as_ref)
    }

    pub(crate) fn slots(&self) -> &[Option<DbtEntry>] {
        &self.slots
    }

    pub(crate) fn slots_mut(&mut self) -> &mut [Option<DbtEntry>] {
        &mut self.slots
    }

    /// Valid entries with their slot ids, in slot order.
    pub fn entries(&self) -> impl Iterator<Item = (usize, &DbtEntry)> {
        self.slots.iter().enumerate().filter_map(|(i, e)| e.as_ref().map(|e| (i, e)))
    }

    pub fn find(&self, set: u32, way: u32) -> Option<usize> {
        self.slots
            .iter()
            .position(|e| matches!(e, Some(e) if e.set == set && e.way == way))
    }

    /// Track a newly dirtied line. Panics if the table is full or the line is
    /// already tracked.
    pub fn insert(&mut self, set: u32, way: u32) -> usize {
        assert!(!self.is_full(), "DBT insert into a full table");
        debug_assert!(self.find(set, way).is_none(), "duplicate DBT entry");
        let slot = self.slots.iter().position(Option::is_none).expect("free slot");
        let counter = policy::initial_counter(self);
        self.slots[slot] = Some(DbtEntry { set, way, counter });
        self.len += 1;
        slot
    }

    /// Install an entry verbatim (checkpoint restore).
    pub fn insert_raw(&mut self, entry: DbtEntry) -> usize {
        assert!(!self.is_full(), "DBT insert into a full table");
        let slot = self.slots.iter().position(Option::is_none).expect("free slot");
        self.slots[slot] = Some(entry);
        self.len += 1;
        slot
    }

    pub fn remove(&mut self, slot: usize) -> DbtEntry {
        let entry = self.slots[slot].take().expect("removing an invalid DBT entry");
        self.len -= 1;
        policy::on_remove(self, &entry);
        entry
    }

    /// Record a write hit to an already dirty, DBT-tracked line.
    pub fn record_write(&mut self, slot: usize) {
        policy::on_write(self, slot);
    }

    pub fn select_victim(&self) -> usize {
        policy::select_victim(self)
    }

    pub fn clear(&mut self) {
        self.slots.iter_mut().for_each(|s| *s = None);
        self.len = 0;
    }
}
