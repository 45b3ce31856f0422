//! Golden functional model: a flat memory that applies every store in trace
//! order, and the byte-for-byte comparison against a simulator's image.

use std::collections::BTreeMap;

use crate::types::{AccessRecord, WORD_BYTES};

const PAGE: u64 = 4096;

/// Sparse byte-addressable memory; untouched bytes read as zero.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MemoryImage {
    pages: BTreeMap<u64, Box<[u8]>>,
}

impl MemoryImage {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn write(&mut self, addr: u64, data: &[u8]) {
        let mut addr = addr;
        let mut rest = data;
        while !rest.is_empty() {
            let page = addr / PAGE;
            let off = (addr % PAGE) as usize;
            let n = rest.len().min(PAGE as usize - off);
            let buf = self.pages.entry(page).or_insert_with(|| vec![0; PAGE as usize].into_boxed_slice());
            buf[off..off + n].copy_from_slice(&rest[..n]);
            addr += n as u64;
            rest = &rest[n..];
        }
    }

    pub fn read_byte(&self, addr: u64) -> u8 {
        self.pages.get(&(addr / PAGE)).map_or(0, |p| p[(addr % PAGE) as usize])
    }

    pub fn read_word(&self, addr: u64) -> u32 {
        let mut b = [0u8; 4];
        for (i, byte) in b.iter_mut().enumerate() {
            *byte = self.read_byte(addr + i as u64);
        }
        u32::from_le_bytes(b)
    }

    /// Apply a trace store: its deterministic value lands on its word.
    pub fn apply(&mut self, rec: &AccessRecord) {
        if rec.kind.is_write() {
            debug_assert_eq!(WORD_BYTES, 4);
            self.write(rec.word_address(), &rec.store_value().to_le_bytes());
        }
    }

    /// Lowest address where the two images differ.
    pub fn first_difference(&self, other: &MemoryImage) -> Option<u64> {
        let zero = [0u8; PAGE as usize];
        let mut keys: Vec<u64> = self.pages.keys().chain(other.pages.keys()).copied().collect();
        keys.sort_unstable();
        keys.dedup();
        keys.into_iter().find_map(|page| {
            let a = self.pages.get(&page).map_or(&zero[..], |p| &p[..]);
            let b = other.pages.get(&page).map_or(&zero[..], |p| &p[..]);
            a.iter().zip(b).position(|(x, y)| x != y).map(|i| page * PAGE + i as u64)
        })
    }
}

/// Apply every store of `trace` in order to a zeroed memory.
pub fn oracle_run<'a>(trace: impl IntoIterator<Item = &'a AccessRecord>) -> MemoryImage {
    let mut img = MemoryImage::new();
    for rec in trace {
        img.apply(rec);
    }
    img
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConsistencyReport {
    pub pass: bool,
    pub first_divergence: Option<u64>,
}

pub fn check_consistency(sim_image: &MemoryImage, oracle_image: &MemoryImage) -> ConsistencyReport {
    let first_divergence = sim_image.first_difference(oracle_image);
    ConsistencyReport {
        pass: first_divergence.is_none(),
        first_divergence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::store_value;

    #[test]
    fn empty_trace_is_zero_image() {
        let img = oracle_run(&[]);
        assert_eq!(img.read_word(0x40), 0);
        assert!(check_consistency(&img, &MemoryImage::new()).pass);
    }

    #[test]
    fn single_write_lands_on_its_word() {
        let rec = AccessRecord::write(0x40, 3);
        let img = oracle_run(&[rec]);
        assert_eq!(img.read_word(0x40), store_value(0x40, 3));
        assert_eq!(img.read_word(0x44), 0);
    }

    #[test]
    fn unaligned_store_targets_containing_word() {
        let img = oracle_run(&[AccessRecord::write(0x43, 1)]);
        assert_eq!(img.read_word(0x40), store_value(0x43, 1));
    }

    #[test]
    fn later_writes_win() {
        let img = oracle_run(&[AccessRecord::write(0x40, 1), AccessRecord::write(0x40, 2)]);
        assert_eq!(img.read_word(0x40), store_value(0x40, 2));
    }

    #[test]
    fn zero_blocks_equal_absent_pages() {
        let mut a = MemoryImage::new();
        a.write(0x10_0000, &[0; 64]);
        assert!(check_consistency(&a, &MemoryImage::new()).pass);
    }

    #[test]
    fn divergence_reports_lowest_address() {
        let mut a = MemoryImage::new();
        let mut b = MemoryImage::new();
        a.write(0x2000, &[1, 2, 3]);
        b.write(0x2000, &[1, 9, 3]);
        a.write(0x9000, &[5]);
        let r = check_consistency(&a, &b);
        assert!(!r.pass);
        assert_eq!(r.first_divergence, Some(0x2001));
    }

    #[test]
    fn writes_span_pages() {
        let mut a = MemoryImage::new();
        a.write(PAGE - 2, &[1, 2, 3, 4]);
        assert_eq!(a.read_word(PAGE - 2), u32::from_le_bytes([1, 2, 3, 4]));
    }
}
