//! Set-associative address slicing.

use crate::trace::TraceError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressParts {
    pub tag: u64,
    pub set: u32,
    pub offset: u32,
}

/// Shape of one cache level. All dimensions are powers of two.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    block_bits: u32,
    set_bits: u32,
    assoc: u32,
}

impl Geometry {
    /// Panics on a shape that `HierarchyConfig::validate` would reject.
    pub fn new(size_bytes: u64, assoc: u32, block_size_bytes: u64) -> Self {
        assert!(block_size_bytes.is_power_of_two() && size_bytes.is_power_of_two());
        let lines = size_bytes / block_size_bytes;
        let sets = lines / u64::from(assoc);
        assert!(sets.is_power_of_two(), "set count must be a power of two");
        Self {
            block_bits: block_size_bytes.trailing_zeros(),
            set_bits: sets.trailing_zeros(),
            assoc,
        }
    }

    pub fn num_sets(&self) -> u32 {
        1 << self.set_bits
    }

    pub fn assoc(&self) -> u32 {
        self.assoc
    }

    pub fn block_size(&self) -> usize {
        1 << self.block_bits
    }

    pub fn lines(&self) -> usize {
        self.num_sets() as usize * self.assoc as usize
    }

    pub fn decompose(&self, addr: u64) -> AddressParts {
        AddressParts {
            offset: (addr & ((1 << self.block_bits) - 1)) as u32,
            set: ((addr >> self.block_bits) & ((1 << self.set_bits) - 1)) as u32,
            tag: addr >> (self.block_bits + self.set_bits),
        }
    }

    pub fn recompose(&self, parts: AddressParts) -> u64 {
        (parts.tag << (self.block_bits + self.set_bits))
            | (u64::from(parts.set) << self.block_bits)
            | u64::from(parts.offset)
    }

    pub fn block_addr(&self, addr: u64) -> u64 {
        addr & !((1u64 << self.block_bits) - 1)
    }

    /// Block address of the line holding `tag` in `set`.
    pub fn line_addr(&self, tag: u64, set: u32) -> u64 {
        self.recompose(AddressParts { tag, set, offset: 0 })
    }

    /// Flat index of (set, way) in a row-major line array.
    pub fn line_index(&self, set: u32, way: u32) -> usize {
        set as usize * self.assoc as usize + way as usize
    }
}

/// Bounds-checked decomposition of a trace address.
pub fn decompose_address(addr: u64, geometry: &Geometry, mem_size_bytes: u64) -> Result<AddressParts, TraceError> {
    if addr >= mem_size_bytes {
        return Err(TraceError::AddressOutOfRange {
            address: addr,
            mem_size: mem_size_bytes,
        });
    }
    Ok(geometry.decompose(addr))
}
