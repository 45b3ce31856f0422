//! Everything below the L1: the STT-RAM last-level cache (write-back,
//! write-allocate, LRU), the STT-RAM backup region, and PCM main memory.

use std::collections::HashMap;

use crate::addr::Geometry;
use crate::config::{BackupMode, Energies, HierarchyConfig, Latencies};
use crate::stats::Meter;
use crate::types::CacheBlock;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LlcRequestKind {
    Read,
    Write,
}

/// Cost of one LLC access, including any PCM traffic it caused.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LlcOutcome {
    pub hit: bool,
    pub cycles: u64,
    pub energy_nj: f64,
    pub pcm_reads: u64,
    pub pcm_writes: u64,
}

#[derive(Debug, Clone, Copy, Default)]
struct LlcLine {
    meta: CacheBlock,
    last_use: u64,
}

#[derive(Debug, Clone)]
pub struct Llc {
    geom: Geometry,
    lines: Vec<LlcLine>,
    data: Vec<u8>,
    clock: u64,
}

impl Llc {
    pub fn new(geom: Geometry) -> Self {
        Self {
            lines: vec![LlcLine::default(); geom.lines()],
            data: vec![0; geom.lines() * geom.block_size()],
            geom,
            clock: 0,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    fn lookup(&self, set: u32, tag: u64) -> Option<u32> {
        (0..self.geom.assoc()).find(|&w| self.lines[self.geom.line_index(set, w)].meta.holds(tag))
    }

    /// Way to replace in `set`: an invalid way if any, else least recently used.
    pub fn victim_way(&self, set: u32) -> u32 {
        let ways = 0..self.geom.assoc();
        let line = |w: u32| &self.lines[self.geom.line_index(set, w)];
        ways.clone()
            .find(|&w| !line(w).meta.valid)
            .unwrap_or_else(|| ways.min_by_key(|&w| line(w).last_use).unwrap())
    }

    /// Way most recently touched in `set`, if any line is valid.
    pub fn mru_way(&self, set: u32) -> Option<u32> {
        (0..self.geom.assoc())
            .filter(|&w| self.lines[self.geom.line_index(set, w)].meta.valid)
            .max_by_key(|&w| self.lines[self.geom.line_index(set, w)].last_use)
    }

    fn line_data(&self, idx: usize) -> &[u8] {
        let bs = self.geom.block_size();
        &self.data[idx * bs..(idx + 1) * bs]
    }

    fn line_data_mut(&mut self, idx: usize) -> &mut [u8] {
        let bs = self.geom.block_size();
        &mut self.data[idx * bs..(idx + 1) * bs]
    }

    pub fn contains(&self, block_addr: u64) -> bool {
        let p = self.geom.decompose(block_addr);
        self.lookup(p.set, p.tag).is_some()
    }

    /// Dirty lines as (block address, data).
    pub fn dirty_blocks(&self) -> impl Iterator<Item = (u64, &[u8])> {
        self.lines.iter().enumerate().filter(|(_, l)| l.meta.dirty).map(|(i, l)| {
            let set = (i / self.geom.assoc() as usize) as u32;
            (self.geom.line_addr(l.meta.tag, set), self.line_data(i))
        })
    }

    pub fn clear(&mut self) {
        self.lines.iter_mut().for_each(|l| *l = LlcLine::default());
    }
}

#[derive(Debug, Clone, Default)]
pub struct Pcm {
    block_size: usize,
    blocks: HashMap<u64, Box<[u8]>>,
}

impl Pcm {
    pub fn new(block_size: usize) -> Self {
        Self {
            block_size,
            blocks: HashMap::new(),
        }
    }

    pub fn read_block(&self, block_addr: u64, buf: &mut [u8]) {
        match self.blocks.get(&block_addr) {
            Some(b) => buf.copy_from_slice(b),
            None => buf.fill(0),
        }
    }

    pub fn write_block(&mut self, block_addr: u64, data: &[u8]) {
        debug_assert_eq!(data.len(), self.block_size);
        self.blocks.insert(block_addr, data.into());
    }

    pub fn blocks(&self) -> impl Iterator<Item = (u64, &[u8])> {
        self.blocks.iter().map(|(&a, b)| (a, &b[..]))
    }
}

/// Where a backed-up block was tracked in the L1 controller, so restore can
/// rebuild the same DBT/WBQ state.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackupOrigin {
    /// A DBT-tracked line and its counter.
    Dbt { set: u32, way: u32, counter: u32 },
    /// A WBQ entry; `attached` entries also occupy their L1 line.
    Wbq { set: u32, way: u32, attached: bool },
    /// A dirty line of an uncontrolled write-back L1 (baselines).
    Line { set: u32, way: u32 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BackupRecord {
    pub block_addr: u64,
    pub data: Vec<u8>,
    pub origin: BackupOrigin,
}

/// Architectural register state saved alongside the blocks. The trace has
/// no registers, so this is the resume point.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RegisterFile {
    pub resume_record: u64,
    pub resume_instr: u64,
}

/// Energy and time spent moving data to or from the backup region.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct BrCost {
    pub energy_nj: f64,
    pub cycles: u64,
}

/// Non-volatile STT-RAM holding at most K blocks plus one register record.
#[derive(Debug, Clone)]
pub struct BackupRegion {
    capacity: usize,
    records: Vec<BackupRecord>,
    regfile: Option<RegisterFile>,
}

impl BackupRegion {
    pub fn new(capacity: usize) -> Self {
        Self {
            capacity,
            records: Vec::new(),
            regfile: None,
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Occupied slots, counting the register record.
    pub fn valid_count(&self) -> usize {
        self.records.len() + usize::from(self.regfile.is_some())
    }

    pub fn has_checkpoint(&self) -> bool {
        self.regfile.is_some()
    }

    pub fn records(&self) -> &[BackupRecord] {
        &self.records
    }

    /// Persist a checkpoint. Charges one STT-RAM block write per slot plus
    /// the register file; in fixed mode all K slots are written whatever
    /// their contents. Panics when given more than K blocks.
    pub fn store(
        &mut self,
        blocks: Vec<BackupRecord>,
        regfile: RegisterFile,
        config: &HierarchyConfig,
        meter: &mut Meter,
    ) -> BrCost {
        assert!(
            blocks.len() <= self.capacity,
            "backup of {} blocks exceeds the {}-block backup region",
            blocks.len(),
            self.capacity
        );
        let slots = match config.br_backup {
            BackupMode::Fixed => self.capacity as u64,
            BackupMode::DirtyOnly => blocks.len() as u64,
        };
        let energy_nj = slots as f64 * config.energies.llc_write_nj + config.e_reg_file_nj;
        meter.stats.br_writes += slots;
        meter.charge(energy_nj);
        self.records = blocks;
        self.regfile = Some(regfile);
        BrCost {
            energy_nj,
            cycles: (slots + 1) * config.latencies.sttram_write,
        }
    }

    /// Read the checkpoint back out, consuming it. Charges one STT-RAM read
    /// per block plus the register restore. `None` means cold start.
    pub fn take(&mut self, config: &HierarchyConfig, meter: &mut Meter) -> Option<(Vec<BackupRecord>, RegisterFile, BrCost)> {
        let regfile = self.regfile.take()?;
        let records = std::mem::take(&mut self.records);
        let n = records.len() as u64;
        let energy_nj = n as f64 * config.energies.llc_read_nj + config.e_reg_restore_nj;
        meter.stats.br_reads += n;
        meter.charge(energy_nj);
        let cycles = (n + 1) * config.latencies.sttram_read;
        Some((records, regfile, BrCost { energy_nj, cycles }))
    }
}

/// One-shot fault: the next dirty LLC eviction skips its PCM writeback.
#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct WritebackFault {
    pub armed: bool,
    pub dropped: Option<u64>,
}

#[derive(Debug, Clone)]
pub struct LowerMemory {
    pub llc: Llc,
    pub br: BackupRegion,
    pub pcm: Pcm,
    lat: Latencies,
    en: Energies,
    scratch: Vec<u8>,
    pub(crate) wb_fault: WritebackFault,
}

impl LowerMemory {
    pub fn new(config: &HierarchyConfig) -> Self {
        let geom = Geometry::new(config.llc_size_bytes, config.llc_assoc, config.block_size_bytes);
        Self {
            llc: Llc::new(geom),
            br: BackupRegion::new(config.k_max_dirty as usize),
            pcm: Pcm::new(geom.block_size()),
            lat: config.latencies,
            en: config.energies,
            scratch: vec![0; geom.block_size()],
            wb_fault: WritebackFault::default(),
        }
    }

    pub fn block_size(&self) -> usize {
        self.llc.geom.block_size()
    }

    /// Service one block request. Reads fill `buf`; writes take their data
    /// from `buf`. Misses allocate; a dirty victim is written back to PCM.
    pub fn llc_access(&mut self, kind: LlcRequestKind, block_addr: u64, buf: &mut [u8], meter: &mut Meter) -> LlcOutcome {
        let geom = self.llc.geom;
        let p = geom.decompose(block_addr);
        debug_assert_eq!(p.offset, 0, "LLC requests are block aligned");
        self.llc.clock += 1;
        let clock = self.llc.clock;
        let mut out = LlcOutcome::default();
        match kind {
            LlcRequestKind::Read => {
                out.cycles += self.lat.sttram_read;
                out.energy_nj += self.en.llc_read_nj;
                meter.stats.llc_reads += 1;
            }
            LlcRequestKind::Write => {
                out.cycles += self.lat.sttram_write;
                out.energy_nj += self.en.llc_write_nj;
                meter.stats.llc_writes += 1;
            }
        }

        let way = match self.llc.lookup(p.set, p.tag) {
            Some(way) => {
                out.hit = true;
                meter.stats.llc_hits += 1;
                way
            }
            None => {
                meter.stats.llc_misses += 1;
                let way = self.llc.victim_way(p.set);
                let idx = geom.line_index(p.set, way);
                let victim = self.llc.lines[idx].meta;
                if victim.dirty {
                    let victim_addr = geom.line_addr(victim.tag, p.set);
                    if self.wb_fault.armed {
                        self.wb_fault.armed = false;
                        self.wb_fault.dropped = Some(victim_addr);
                    } else {
                        let (lo, hi) = (idx * geom.block_size(), (idx + 1) * geom.block_size());
                        self.pcm.write_block(victim_addr, &self.llc.data[lo..hi]);
                    }
                    out.cycles += self.lat.pcm_write;
                    out.energy_nj += self.en.pcm_write_nj;
                    out.pcm_writes += 1;
                }
                if kind == LlcRequestKind::Read {
                    self.pcm.read_block(block_addr, &mut self.scratch);
                    self.llc.line_data_mut(idx).copy_from_slice(&self.scratch);
                    out.cycles += self.lat.pcm_read;
                    out.energy_nj += self.en.pcm_read_nj;
                    out.pcm_reads += 1;
                }
                self.llc.lines[idx].meta = CacheBlock {
                    valid: true,
                    dirty: false,
                    tag: p.tag,
                };
                way
            }
        };

        let idx = geom.line_index(p.set, way);
        self.llc.lines[idx].last_use = clock;
        match kind {
            LlcRequestKind::Read => buf.copy_from_slice(self.llc.line_data(idx)),
            LlcRequestKind::Write => {
                self.llc.line_data_mut(idx).copy_from_slice(buf);
                self.llc.lines[idx].meta.dirty = true;
            }
        }
        meter.stats.pcm_reads += out.pcm_reads;
        meter.stats.pcm_writes += out.pcm_writes;
        meter.charge(out.energy_nj);
        out
    }

    pub fn read_block(&mut self, block_addr: u64, buf: &mut [u8], meter: &mut Meter) -> LlcOutcome {
        self.llc_access(LlcRequestKind::Read, block_addr, buf, meter)
    }

    pub fn write_block(&mut self, block_addr: u64, data: &[u8], meter: &mut Meter) -> LlcOutcome {
        let mut buf = std::mem::take(&mut self.scratch);
        buf.copy_from_slice(data);
        let out = self.llc_access(LlcRequestKind::Write, block_addr, &mut buf, meter);
        self.scratch = buf;
        out
    }

    /// Write every dirty LLC line to PCM and mark it clean. Returns cycles.
    pub fn flush_llc(&mut self, meter: &mut Meter) -> u64 {
        let geom = self.llc.geom;
        let bs = geom.block_size();
        let mut cycles = 0;
        for (idx, line) in self.llc.lines.iter_mut().enumerate() {
            if line.meta.dirty {
                let set = (idx / geom.assoc() as usize) as u32;
                let addr = geom.line_addr(line.meta.tag, set);
                self.pcm.write_block(addr, &self.llc.data[idx * bs..(idx + 1) * bs]);
                line.meta.dirty = false;
                meter.stats.pcm_writes += 1;
                meter.charge(self.en.pcm_write_nj);
                cycles += self.lat.pcm_write;
            }
        }
        cycles
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup() -> (HierarchyConfig, LowerMemory, Meter) {
        let cfg = HierarchyConfig::default();
        let lower = LowerMemory::new(&cfg);
        (cfg, lower, Meter::default())
    }

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-12
    }

    #[test]
    fn read_miss_clean_victim_then_read_hit() {
        let (_, mut lower, mut meter) = setup();
        let mut buf = vec![0u8; 64];
        let miss = lower.read_block(0x4000, &mut buf, &mut meter);
        assert!(!miss.hit);
        assert_eq!(miss.cycles, 2 + 35);
        assert!(close(miss.energy_nj, 0.123 + 1.553));
        let hit = lower.read_block(0x4000, &mut buf, &mut meter);
        assert!(hit.hit);
        assert_eq!(hit.cycles, 2);
        assert!(close(hit.energy_nj, 0.123));
        assert_eq!(meter.stats.llc_reads, 2);
        assert_eq!(meter.stats.pcm_reads, 1);
    }

    #[test]
    fn write_hit_costs() {
        let (_, mut lower, mut meter) = setup();
        let mut buf = vec![0u8; 64];
        lower.read_block(0x4000, &mut buf, &mut meter);
        let w = lower.write_block(0x4000, &[7u8; 64], &mut meter);
        assert!(w.hit);
        assert_eq!(w.cycles, 10);
        assert!(close(w.energy_nj, 0.542));
    }

    #[test]
    fn dirty_victim_goes_to_pcm() {
        let (cfg, mut lower, mut meter) = setup();
        let sets = cfg.llc_blocks() / u64::from(cfg.llc_assoc);
        let stride = sets * 64;
        for i in 0..16 {
            lower.write_block(i * stride, &[i as u8 + 1; 64], &mut meter);
        }
        assert_eq!(meter.stats.pcm_writes, 0);
        let out = lower.write_block(16 * stride, &[99; 64], &mut meter);
        assert_eq!(out.pcm_writes, 1);
        assert_eq!(out.cycles, 10 + 100);
        assert!(close(out.energy_nj, 0.542 + 6.9365));
        let mut buf = vec![0u8; 64];
        lower.pcm.read_block(0, &mut buf);
        assert_eq!(buf, vec![1u8; 64]);
    }

    #[test]
    fn mru_way_is_never_the_victim() {
        let (cfg, mut lower, mut meter) = setup();
        let sets = cfg.llc_blocks() / u64::from(cfg.llc_assoc);
        let mut buf = vec![0u8; 64];
        for i in 0..200u64 {
            let addr = ((i * 7919) % 40) * sets * 64;
            lower.read_block(addr, &mut buf, &mut meter);
            let mru = lower.llc.mru_way(0).unwrap();
            assert_ne!(lower.llc.victim_way(0), mru);
        }
    }

    #[test]
    fn backup_region_store_and_take() {
        let (cfg, mut lower, mut meter) = setup();
        let blocks: Vec<_> = (0..16)
            .map(|i| BackupRecord {
                block_addr: i * 64,
                data: vec![i as u8; 64],
                origin: BackupOrigin::Dbt {
                    set: i as u32,
                    way: 0,
                    counter: 1,
                },
            })
            .collect();
        let cost = lower.br.store(blocks.clone(), RegisterFile::default(), &cfg, &mut meter);
        assert!(close(cost.energy_nj, 8.672 + cfg.e_reg_file_nj));
        assert_eq!(lower.br.valid_count(), 17);
        let (back, _, cost) = lower.br.take(&cfg, &mut meter).unwrap();
        assert_eq!(back, blocks);
        assert!(close(cost.energy_nj, 16.0 * 0.123 + cfg.e_reg_restore_nj));
        assert!(lower.br.take(&cfg, &mut meter).is_none());
    }

    #[test]
    fn empty_backup_costs_register_file_only_when_dirty_only() {
        let (mut cfg, mut lower, mut meter) = setup();
        cfg.br_backup = BackupMode::DirtyOnly;
        let cost = lower.br.store(Vec::new(), RegisterFile::default(), &cfg, &mut meter);
        assert!(close(cost.energy_nj, cfg.e_reg_file_nj));
        assert_eq!(cost.cycles, 10);
    }

    #[test]
    fn fixed_backup_writes_every_slot() {
        let (cfg, mut lower, mut meter) = setup();
        let cost = lower.br.store(Vec::new(), RegisterFile::default(), &cfg, &mut meter);
        assert!(close(cost.energy_nj, 16.0 * 0.542 + cfg.e_reg_file_nj));
        assert_eq!(meter.stats.br_writes, 16);
        assert_eq!(cost.cycles, 17 * 10);
    }

    #[test]
    #[should_panic(expected = "exceeds")]
    fn backup_over_capacity_panics() {
        let (cfg, mut lower, mut meter) = setup();
        let blocks = (0..17)
            .map(|i| BackupRecord {
                block_addr: i * 64,
                data: vec![0; 64],
                origin: BackupOrigin::Line { set: 0, way: 0 },
            })
            .collect();
        lower.br.store(blocks, RegisterFile::default(), &cfg, &mut meter);
    }
}
