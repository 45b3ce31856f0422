use std::fmt;

/// Bytes written by one store.
pub const WORD_BYTES: u64 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AccessKind {
    Read,
    Write,
}

impl AccessKind {
    pub fn is_write(self) -> bool {
        self == AccessKind::Write
    }
}

impl fmt::Display for AccessKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AccessKind::Read => "R",
            AccessKind::Write => "W",
        })
    }
}

/// One memory operation of a trace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct AccessRecord {
    pub kind: AccessKind,
    pub address: u64,
    pub instr_index: u64,
}

impl AccessRecord {
    pub fn read(address: u64, instr_index: u64) -> Self {
        Self {
            kind: AccessKind::Read,
            address,
            instr_index,
        }
    }

    pub fn write(address: u64, instr_index: u64) -> Self {
        Self {
            kind: AccessKind::Write,
            address,
            instr_index,
        }
    }

    /// Word-aligned address the store lands on.
    pub fn word_address(&self) -> u64 {
        self.address & !(WORD_BYTES - 1)
    }

    /// The value this record stores, if it is a write.
    pub fn store_value(&self) -> u32 {
        store_value(self.address, self.instr_index)
    }
}

/// Deterministic data for a store at `address` issued by instruction
/// `instr_index`. Traces carry no data, so every store writes a value that
/// identifies where and when it happened.
pub fn store_value(address: u64, instr_index: u64) -> u32 {
    // splitmix64 finalizer over the packed pair
    let mut z = address.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ instr_index.rotate_left(29);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    // never zero, so a lost store is always distinguishable from fresh memory
    (z as u32) | 1
}

/// Apply a store to a block-sized buffer holding `block_addr`.
pub fn apply_store(block: &mut [u8], block_addr: u64, rec: &AccessRecord) {
    let off = (rec.word_address() - block_addr) as usize;
    block[off..off + WORD_BYTES as usize].copy_from_slice(&rec.store_value().to_le_bytes());
}

/// Metadata of a cache line. The payload lives in the owning cache's data
/// array so lines stay `Copy`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct CacheBlock {
    pub valid: bool,
    pub dirty: bool,
    pub tag: u64,
}

impl CacheBlock {
    pub fn holds(&self, tag: u64) -> bool {
        self.valid && self.tag == tag
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn store_lands_on_word() {
        let mut block = vec![0u8; 64];
        let rec = AccessRecord::write(0x1046, 9);
        apply_store(&mut block, 0x1040, &rec);
        assert_eq!(&block[4..8], &rec.store_value().to_le_bytes());
        assert!(block[..4].iter().all(|&b| b == 0));
        assert!(block[8..].iter().all(|&b| b == 0));
    }

    #[test]
    fn store_values_differ_in_time_and_space() {
        assert_ne!(store_value(0x40, 1), store_value(0x40, 2));
        assert_ne!(store_value(0x40, 1), store_value(0x44, 1));
        assert_ne!(store_value(0, 0), 0);
    }
}
