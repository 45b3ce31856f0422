//! DBT victim selection: least frequently written (LFW) with counter
//! rescaling, and recency-ranked LRW.
//!
//! LFW keeps a `wc_bits`-wide write counter per entry. A write to an entry
//! whose counter is saturated at `2^wc_bits - 1` does not increment it;
//! instead every entry drops by `2^(wc_bits - 1)`, flooring at zero. With
//! 5-bit counters `{19, 17, 31, 3}` and a write to the third entry this gives
//! `{3, 1, 15, 0}`.
//!
//! LRW keeps a rank per entry; valid ranks are always `0..len` with the
//! highest rank the most recently written. By default the most recently
//! written entry is the victim; `LrwEvict::LeastRecent` flips that.

use crate::config::{LrwEvict, Policy};
use crate::dbt::{DbtEntry, DirtyBlockTable};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyState {
    pub mode: Policy,
    pub wc_bits: u32,
    pub lrw_evict: LrwEvict,
}

impl PolicyState {
    pub fn new(mode: Policy, wc_bits: u32, lrw_evict: LrwEvict) -> Self {
        if mode == Policy::Lfw {
            assert!((1..=31).contains(&wc_bits), "LFW needs 1..=31 counter bits");
        }
        Self {
            mode,
            wc_bits,
            lrw_evict,
        }
    }

    pub fn wc_max(&self) -> u32 {
        (1 << self.wc_bits) - 1
    }
}

/// Counter value for an entry about to be inserted. New LFW entries count
/// the write that dirtied the line; new LRW entries are the most recent.
pub(crate) fn initial_counter(dbt: &DirtyBlockTable) -> u32 {
    match dbt.policy().mode {
        Policy::Lfw => 1,
        Policy::Lrw => dbt.len() as u32,
    }
}

pub(crate) fn on_remove(dbt: &mut DirtyBlockTable, removed: &DbtEntry) {
    if dbt.policy().mode == Policy::Lrw {
        for e in dbt.slots_mut().iter_mut().flatten() {
            if e.counter > removed.counter {
                e.counter -= 1;
            }
        }
    }
}

/// A write hit to the valid entry in `slot`.
pub fn on_write(dbt: &mut DirtyBlockTable, slot: usize) {
    let state = *dbt.policy();
    let len = dbt.len() as u32;
    let current = dbt.get(slot).expect("write to an invalid DBT entry").counter;
    match state.mode {
        Policy::Lfw => {
            if current >= state.wc_max() {
                rescale(dbt);
            } else {
                dbt.slots_mut()[slot].as_mut().unwrap().counter += 1;
            }
        }
        Policy::Lrw => {
            for e in dbt.slots_mut().iter_mut().flatten() {
                if e.counter > current {
                    e.counter -= 1;
                }
            }
            dbt.slots_mut()[slot].as_mut().unwrap().counter = len - 1;
        }
    }
}

/// Drop every LFW counter by half the counter range, saturating at zero.
pub fn rescale(dbt: &mut DirtyBlockTable) {
    let half = 1u32 << (dbt.policy().wc_bits - 1);
    for e in dbt.slots_mut().iter_mut().flatten() {
        e.counter = e.counter.saturating_sub(half);
    }
}

/// Slot of the entry to evict from a full table.
pub fn select_victim(dbt: &DirtyBlockTable) -> usize {
    assert!(dbt.is_full(), "victim selection on a DBT that is not full");
    let state = dbt.policy();
    let key = |e: &DbtEntry| (e.set, e.way);
    let entries = dbt.slots().iter().enumerate().filter_map(|(i, e)| e.map(|e| (i, e)));
    let victim = match (state.mode, state.lrw_evict) {
        (Policy::Lfw, _) => entries.min_by_key(|(_, e)| (e.counter, key(e))),
        (Policy::Lrw, LrwEvict::MostRecent) => entries.max_by_key(|(_, e)| e.counter),
        (Policy::Lrw, LrwEvict::LeastRecent) => entries.min_by_key(|(_, e)| e.counter),
    };
    victim.map(|(i, _)| i).expect("a full DBT has entries")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn table(mode: Policy, wc_bits: u32, evict: LrwEvict, counters: &[u32]) -> DirtyBlockTable {
        let mut dbt = DirtyBlockTable::new(counters.len(), PolicyState::new(mode, wc_bits, evict));
        for (i, &c) in counters.iter().enumerate() {
            dbt.insert_raw(DbtEntry {
                set: i as u32,
                way: 0,
                counter: c,
            });
        }
        dbt
    }

    fn counters(dbt: &DirtyBlockTable) -> Vec<u32> {
        dbt.slots().iter().map(|e| e.unwrap().counter).collect()
    }

    #[test]
    fn lfw_plain_increment() {
        let mut dbt = table(Policy::Lfw, 5, LrwEvict::MostRecent, &[3]);
        on_write(&mut dbt, 0);
        assert_eq!(counters(&dbt), [4]);
    }

    #[test]
    fn lfw_saturated_write_rescales_worked_example() {
        let mut dbt = table(Policy::Lfw, 5, LrwEvict::MostRecent, &[19, 17, 31, 3]);
        on_write(&mut dbt, 2);
        assert_eq!(counters(&dbt), [3, 1, 15, 0]);
    }

    #[test]
    fn rescale_examples() {
        let mut dbt = table(Policy::Lfw, 5, LrwEvict::MostRecent, &[19, 17, 31, 3]);
        rescale(&mut dbt);
        assert_eq!(counters(&dbt), [3, 1, 15, 0]);
        let mut dbt = table(Policy::Lfw, 5, LrwEvict::MostRecent, &[31]);
        rescale(&mut dbt);
        assert_eq!(counters(&dbt), [15]);
        let mut dbt = table(Policy::Lfw, 5, LrwEvict::MostRecent, &[31, 5]);
        rescale(&mut dbt);
        assert_eq!(counters(&dbt), [15, 0]);
    }

    #[test]
    fn lfw_victim_is_min_counter() {
        let dbt = table(Policy::Lfw, 5, LrwEvict::MostRecent, &[3, 1, 15, 0]);
        assert_eq!(select_victim(&dbt), 3);
    }

    #[test]
    fn lfw_ties_break_on_lowest_set_way() {
        let mut dbt = DirtyBlockTable::new(3, PolicyState::new(Policy::Lfw, 6, LrwEvict::MostRecent));
        for (set, way) in [(7, 0), (2, 3), (2, 1)] {
            dbt.insert_raw(DbtEntry { set, way, counter: 4 });
        }
        let victim = dbt.get(select_victim(&dbt)).unwrap();
        assert_eq!((victim.set, victim.way), (2, 1));
    }

    #[test]
    fn lrw_write_moves_entry_to_most_recent() {
        let mut dbt = table(Policy::Lrw, 0, LrwEvict::MostRecent, &[0, 1, 2, 3]);
        on_write(&mut dbt, 0);
        assert_eq!(counters(&dbt), [3, 0, 1, 2]);
    }

    #[test]
    fn lrw_victim_choice() {
        let dbt = table(Policy::Lrw, 0, LrwEvict::MostRecent, &[0, 1, 2, 3]);
        assert_eq!(select_victim(&dbt), 3);
        let dbt = table(Policy::Lrw, 0, LrwEvict::LeastRecent, &[2, 0, 3, 1]);
        assert_eq!(select_victim(&dbt), 1);
    }

    #[test]
    #[should_panic(expected = "not full")]
    fn victim_on_partial_table_panics() {
        let mut dbt = DirtyBlockTable::new(2, PolicyState::new(Policy::Lfw, 6, LrwEvict::MostRecent));
        dbt.insert(0, 0);
        select_victim(&dbt);
    }

    #[derive(Debug, Clone)]
    enum Op {
        Insert(u32),
        Write(usize),
        Evict,
    }

    fn op() -> impl Strategy<Value = Op> {
        prop_oneof![
            (0u32..64).prop_map(Op::Insert),
            (0usize..16).prop_map(Op::Write),
            Just(Op::Evict),
        ]
    }

    fn drive(dbt: &mut DirtyBlockTable, ops: &[Op]) -> Vec<(u32, u32)> {
        let mut victims = Vec::new();
        for op in ops {
            match *op {
                Op::Insert(set) => {
                    if dbt.is_full() {
                        let v = dbt.remove(dbt.select_victim());
                        victims.push((v.set, v.way));
                    }
                    if dbt.find(set, 0).is_none() {
                        dbt.insert(set, 0);
                    }
                }
                Op::Write(i) => {
                    let live: Vec<usize> = dbt.entries().map(|(s, _)| s).collect();
                    if !live.is_empty() {
                        dbt.record_write(live[i % live.len()]);
                    }
                }
                Op::Evict => {
                    if dbt.is_full() {
                        let v = dbt.remove(dbt.select_victim());
                        victims.push((v.set, v.way));
                    }
                }
            }
        }
        victims
    }

    proptest! {
        #[test]
        fn lfw_counters_stay_in_range(wc_bits in 1u32..7, m in 1usize..12, ops in prop::collection::vec(op(), 0..400)) {
            let mut dbt = DirtyBlockTable::new(m, PolicyState::new(Policy::Lfw, wc_bits, LrwEvict::MostRecent));
            drive(&mut dbt, &ops);
            for (_, e) in dbt.entries() {
                prop_assert!(e.counter < 1 << wc_bits);
            }
        }

        #[test]
        fn lrw_ranks_are_a_prefix_permutation(m in 1usize..12, ops in prop::collection::vec(op(), 0..400), least in any::<bool>()) {
            let evict = if least { LrwEvict::LeastRecent } else { LrwEvict::MostRecent };
            let mut dbt = DirtyBlockTable::new(m, PolicyState::new(Policy::Lrw, 0, evict));
            drive(&mut dbt, &ops);
            let mut ranks: Vec<u32> = dbt.entries().map(|(_, e)| e.counter).collect();
            ranks.sort_unstable();
            prop_assert_eq!(ranks, (0..dbt.len() as u32).collect::<Vec<_>>());
        }

        #[test]
        fn lfw_victim_invariant_under_uniform_shift(base in prop::collection::vec(0u32..20, 1..10), shift in 0u32..10) {
            let a = table(Policy::Lfw, 6, LrwEvict::MostRecent, &base);
            let shifted: Vec<u32> = base.iter().map(|c| c + shift).collect();
            let b = table(Policy::Lfw, 6, LrwEvict::MostRecent, &shifted);
            prop_assert_eq!(select_victim(&a), select_victim(&b));
        }

        #[test]
        fn rescale_preserves_order_above_floor(base in prop::collection::vec(16u32..32, 1..10)) {
            let mut dbt = table(Policy::Lfw, 5, LrwEvict::MostRecent, &base);
            rescale(&mut dbt);
            let after = counters(&dbt);
            for i in 0..base.len() {
                prop_assert_eq!(after[i], base[i] - 16);
            }
        }

        #[test]
        fn victim_sequence_is_deterministic(m in 1usize..8, ops in prop::collection::vec(op(), 0..200), lrw in any::<bool>()) {
            let mode = if lrw { Policy::Lrw } else { Policy::Lfw };
            let mut a = DirtyBlockTable::new(m, PolicyState::new(mode, 4, LrwEvict::MostRecent));
            let mut b = a.clone();
            prop_assert_eq!(drive(&mut a, &ops), drive(&mut b, &ops));
        }
    }
}
