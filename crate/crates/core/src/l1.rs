//! The SRAM L1 and its dirty-block controller.
//!
//! With the controller enabled, every dirty line is tracked by exactly one of
//! the DBT (M entries) or an attached WBQ entry (N entries), so at most
//! K = M + N lines are ever dirty. A write to a clean line dirties it and
//! takes a DBT entry; when the DBT is full the policy's victim moves to the
//! WBQ, and when the WBQ is also full the core stalls until the oldest queued
//! write reaches the LLC. Writes to already dirty lines only update the DBT
//! counter or the WBQ snapshot. Misses are conventional: LRU victim, and a
//! dirty victim leaves through the WBQ.

use crate::addr::{AddressParts, Geometry};
use crate::config::{Energies, HierarchyConfig, Latencies, WritePolicy};
use crate::dbt::{DbtEntry, DirtyBlockTable};
use crate::lower::{BackupOrigin, BackupRecord, LowerMemory};
use crate::policy::PolicyState;
use crate::stats::Meter;
use crate::types::{apply_store, AccessRecord, CacheBlock};
use crate::wbq::{WbqEntry, WritebackQueue};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct AccessOutcome {
    pub hit: bool,
    /// Cycles the access took, stalls included.
    pub cycles: u64,
    pub stall_cycles: u64,
    pub llc_reads: u32,
    pub llc_writes: u32,
}

/// What one drain step did.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DrainEvent {
    Idle,
    /// The oldest entry's LLC write was issued and completes at `done_at`.
    Issued { block_addr: u64, done_at: u64 },
    /// A write finished; the block is in the LLC and its L1 line is clean.
    Completed { block_addr: u64 },
}

#[derive(Debug, Clone, Copy, Default)]
struct Line {
    meta: CacheBlock,
    last_use: u64,
}

#[derive(Debug, Clone)]
pub struct L1Cache {
    geom: Geometry,
    lines: Vec<Line>,
    data: Vec<u8>,
    clock: u64,
    dirty: usize,
    write_policy: WritePolicy,
    dbt: Option<DirtyBlockTable>,
    wbq: WritebackQueue,
    lat: Latencies,
    en: Energies,
}

impl L1Cache {
    pub fn new(config: &HierarchyConfig) -> Self {
        let geom = Geometry::new(config.l1_size_bytes, config.l1_assoc, config.block_size_bytes);
        let (dbt, wbq) = if config.dbt_enabled {
            let policy = PolicyState::new(config.policy, config.wc_bits, config.lrw_evict);
            (
                Some(DirtyBlockTable::new(config.dbt_entries as usize, policy)),
                WritebackQueue::new(config.wbq_entries as usize),
            )
        } else {
            (None, WritebackQueue::new(0))
        };
        Self {
            lines: vec![Line::default(); geom.lines()],
            data: vec![0; geom.lines() * geom.block_size()],
            geom,
            clock: 0,
            dirty: 0,
            write_policy: config.write_policy,
            dbt,
            wbq,
            lat: config.latencies,
            en: config.energies,
        }
    }

    pub fn geometry(&self) -> &Geometry {
        &self.geom
    }

    pub fn dbt(&self) -> Option<&DirtyBlockTable> {
        self.dbt.as_ref()
    }

    pub fn wbq(&self) -> &WritebackQueue {
        &self.wbq
    }

    /// Dirty lines, as maintained incrementally.
    pub fn dirty_count(&self) -> usize {
        self.dirty
    }

    /// Dirty lines, counted by scanning the array.
    pub fn count_dirty_lines(&self) -> usize {
        self.lines.iter().filter(|l| l.meta.dirty).count()
    }

    pub fn line(&self, set: u32, way: u32) -> CacheBlock {
        self.lines[self.geom.line_index(set, way)].meta
    }

    pub fn line_data(&self, set: u32, way: u32) -> &[u8] {
        self.slice(self.geom.line_index(set, way))
    }

    /// (set, way) currently holding `addr`, if resident.
    pub fn locate(&self, addr: u64) -> Option<(u32, u32)> {
        let p = self.geom.decompose(addr);
        self.lookup(&p).map(|w| (p.set, w))
    }

    /// Dirty lines as (block address, data).
    pub fn dirty_blocks(&self) -> impl Iterator<Item = (u64, &[u8])> {
        self.lines.iter().enumerate().filter(|(_, l)| l.meta.dirty).map(|(i, l)| {
            let set = (i / self.geom.assoc() as usize) as u32;
            (self.geom.line_addr(l.meta.tag, set), self.slice(i))
        })
    }

    fn slice(&self, idx: usize) -> &[u8] {
        let bs = self.geom.block_size();
        &self.data[idx * bs..(idx + 1) * bs]
    }

    fn slice_mut(&mut self, idx: usize) -> &mut [u8] {
        let bs = self.geom.block_size();
        &mut self.data[idx * bs..(idx + 1) * bs]
    }

    fn lookup(&self, p: &AddressParts) -> Option<u32> {
        (0..self.geom.assoc()).find(|&w| self.lines[self.geom.line_index(p.set, w)].meta.holds(p.tag))
    }

    fn line_addr_at(&self, idx: usize) -> u64 {
        let set = (idx / self.geom.assoc() as usize) as u32;
        self.geom.line_addr(self.lines[idx].meta.tag, set)
    }

    fn set_dirty(&mut self, idx: usize) {
        let meta = &mut self.lines[idx].meta;
        debug_assert!(meta.valid && !meta.dirty);
        meta.dirty = true;
        self.dirty += 1;
    }

    fn clear_dirty(&mut self, idx: usize) {
        let meta = &mut self.lines[idx].meta;
        debug_assert!(meta.dirty);
        meta.dirty = false;
        self.dirty -= 1;
    }

    /// One load or store at cycle `now`.
    pub fn access(&mut self, rec: &AccessRecord, now: u64, lower: &mut LowerMemory, meter: &mut Meter) -> AccessOutcome {
        let p = self.geom.decompose(rec.address);
        let mut out = AccessOutcome::default();
        meter.stats.accesses += 1;
        self.clock += 1;

        let way = match self.lookup(&p) {
            Some(way) => {
                out.hit = true;
                meter.stats.l1_hits += 1;
                way
            }
            None => {
                meter.stats.l1_misses += 1;
                self.fill(&p, now, lower, meter, &mut out)
            }
        };
        let idx = self.geom.line_index(p.set, way);
        self.lines[idx].last_use = self.clock;

        if !rec.kind.is_write() {
            meter.stats.l1_reads += 1;
            meter.charge(self.en.l1_read_nj);
            out.cycles += self.lat.sram_read;
            return out;
        }

        meter.stats.l1_writes += 1;
        meter.charge(self.en.l1_write_nj);
        out.cycles += self.lat.sram_write;
        let block_addr = self.geom.block_addr(rec.address);
        apply_store(self.slice_mut(idx), block_addr, rec);

        match self.write_policy {
            WritePolicy::WriteThrough => {
                let data = self.slice(idx).to_vec();
                let w = lower.write_block(block_addr, &data, meter);
                out.llc_writes += 1;
                out.stall_cycles += w.cycles;
                out.cycles += w.cycles;
            }
            WritePolicy::WriteBack if self.dbt.is_some() => {
                let t = now + out.cycles;
                let stall = self.controlled_write(p.set, way, t, lower, meter, &mut out);
                out.stall_cycles += stall;
                out.cycles += stall;
            }
            WritePolicy::WriteBack => {
                if !self.lines[idx].meta.dirty {
                    self.set_dirty(idx);
                }
            }
        }
        out
    }

    /// Write-hit handling for a controlled L1. Returns stall cycles.
    fn controlled_write(&mut self, set: u32, way: u32, t: u64, lower: &mut LowerMemory, meter: &mut Meter, out: &mut AccessOutcome) -> u64 {
        let idx = self.geom.line_index(set, way);
        let mut stall = 0;
        if !self.lines[idx].meta.dirty {
            self.set_dirty(idx);
            let dbt = self.dbt.as_mut().unwrap();
            if dbt.is_full() {
                meter.stats.dbt_evictions += 1;
                let victim = dbt.remove(dbt.select_victim());
                let vidx = self.geom.line_index(victim.set, victim.way);
                stall = self.enqueue_writeback(vidx, true, t, lower, meter, out);
            }
            self.dbt.as_mut().unwrap().insert(set, way);
        } else if let Some(slot) = self.dbt.as_ref().unwrap().find(set, way) {
            self.dbt.as_mut().unwrap().record_write(slot);
        } else if let Some(i) = self.wbq.find_attached(set, way) {
            let bs = self.geom.block_size();
            let data = &self.data[idx * bs..(idx + 1) * bs];
            self.wbq.get_mut(i).unwrap().data.copy_from_slice(data);
        } else {
            panic!("dirty L1 line ({set}, {way}) is tracked by neither the DBT nor the WBQ");
        }
        stall
    }

    /// Queue the line at `idx` for writeback. `attached` lines stay resident
    /// and dirty until the write completes. Returns stall cycles.
    fn enqueue_writeback(&mut self, idx: usize, attached: bool, t: u64, lower: &mut LowerMemory, meter: &mut Meter, out: &mut AccessOutcome) -> u64 {
        let block_addr = self.line_addr_at(idx);
        if self.wbq.capacity() == 0 {
            let data = self.slice(idx).to_vec();
            let w = lower.write_block(block_addr, &data, meter);
            out.llc_writes += 1;
            if attached {
                self.clear_dirty(idx);
            }
            return w.cycles;
        }
        let mut stall = 0;
        if self.wbq.is_full() {
            stall = self.retire_head(t, lower, meter);
            out.llc_writes += 1;
        }
        let set = (idx / self.geom.assoc() as usize) as u32;
        let way = (idx % self.geom.assoc() as usize) as u32;
        self.wbq.push(WbqEntry {
            set,
            way,
            tag: self.lines[idx].meta.tag,
            block_addr,
            attached,
            data: self.slice(idx).to_vec(),
            queued_at: t + stall,
            done_at: None,
        });
        stall
    }

    /// Finish the oldest WBQ write, waiting for it if needed. Returns the
    /// cycles waited past `t`.
    fn retire_head(&mut self, t: u64, lower: &mut LowerMemory, meter: &mut Meter) -> u64 {
        let lat = self.lat.sttram_write;
        let head = self.wbq.front().expect("retiring from an empty WBQ");
        let done = match head.done_at {
            Some(done) => done,
            None => self.wbq.reserve_port(t, lat),
        };
        self.complete_head(lower, meter);
        done.saturating_sub(t)
    }

    fn complete_head(&mut self, lower: &mut LowerMemory, meter: &mut Meter) -> u64 {
        let head = self.wbq.pop().expect("completing an empty WBQ");
        lower.write_block(head.block_addr, &head.data, meter);
        if head.attached {
            let idx = self.geom.line_index(head.set, head.way);
            debug_assert!(self.lines[idx].meta.holds(head.tag));
            self.clear_dirty(idx);
        }
        head.block_addr
    }

    /// Advance the writeback queue by one event as of cycle `now`.
    pub fn wbq_drain_step(&mut self, now: u64, lower: &mut LowerMemory, meter: &mut Meter) -> DrainEvent {
        let lat = self.lat.sttram_write;
        let port_free_at = self.wbq.port_free_at();
        let Some(head) = self.wbq.front() else {
            return DrainEvent::Idle;
        };
        let (done_at, queued_at, block_addr) = (head.done_at, head.queued_at, head.block_addr);
        match done_at {
            Some(done) if done <= now => DrainEvent::Completed {
                block_addr: self.complete_head(lower, meter),
            },
            Some(_) => DrainEvent::Idle,
            None => {
                let start = queued_at.max(port_free_at);
                if start > now {
                    return DrainEvent::Idle;
                }
                let done_at = self.wbq.reserve_port(start, lat);
                self.wbq.front_mut().unwrap().done_at = Some(done_at);
                DrainEvent::Issued { block_addr, done_at }
            }
        }
    }

    /// Run drain steps until nothing more can happen by cycle `now`.
    pub fn drain_until(&mut self, now: u64, lower: &mut LowerMemory, meter: &mut Meter) {
        while self.wbq_drain_step(now, lower, meter) != DrainEvent::Idle {}
    }

    /// Bring the block for `p` in, evicting the LRU way. Returns the way.
    fn fill(&mut self, p: &AddressParts, now: u64, lower: &mut LowerMemory, meter: &mut Meter, out: &mut AccessOutcome) -> u32 {
        let ways = 0..self.geom.assoc();
        let way = {
            let line = |w: u32| &self.lines[self.geom.line_index(p.set, w)];
            ways.clone()
                .find(|&w| !line(w).meta.valid)
                .unwrap_or_else(|| ways.min_by_key(|&w| line(w).last_use).unwrap())
        };
        let idx = self.geom.line_index(p.set, way);

        if self.lines[idx].meta.dirty {
            let t = now + out.cycles;
            let stall = if self.dbt.is_some() {
                self.evict_tracked(idx, p.set, way, t, lower, meter, out)
            } else {
                let data = self.slice(idx).to_vec();
                let w = lower.write_block(self.line_addr_at(idx), &data, meter);
                out.llc_writes += 1;
                w.cycles
            };
            if self.lines[idx].meta.dirty {
                self.clear_dirty(idx);
            }
            out.stall_cycles += stall;
            out.cycles += stall;
        }

        let block_addr = self.geom.line_addr(p.tag, p.set);
        if let Some(entry) = self.wbq.newest_for(block_addr) {
            let bs = self.geom.block_size();
            let data = entry.data.clone();
            self.data[idx * bs..(idx + 1) * bs].copy_from_slice(&data);
            meter.stats.wbq_forwards += 1;
        } else {
            let bs = self.geom.block_size();
            let r = lower.read_block(block_addr, &mut self.data[idx * bs..(idx + 1) * bs], meter);
            out.llc_reads += 1;
            out.cycles += r.cycles;
        }
        self.lines[idx].meta = CacheBlock {
            valid: true,
            dirty: false,
            tag: p.tag,
        };
        meter.stats.l1_fills += 1;
        meter.charge(self.en.l1_write_nj);
        way
    }

    /// Retire the tracking of an evicted dirty line and send it down through
    /// the WBQ. Returns stall cycles.
    #[allow(clippy::too_many_arguments)]
    fn evict_tracked(&mut self, idx: usize, set: u32, way: u32, t: u64, lower: &mut LowerMemory, meter: &mut Meter, out: &mut AccessOutcome) -> u64 {
        let dbt = self.dbt.as_mut().unwrap();
        if let Some(slot) = dbt.find(set, way) {
            dbt.remove(slot);
            self.enqueue_writeback(idx, false, t, lower, meter, out)
        } else if let Some(i) = self.wbq.find_attached(set, way) {
            self.wbq.get_mut(i).unwrap().attached = false;
            0
        } else {
            panic!("evicting dirty L1 line ({set}, {way}) that nothing tracks");
        }
    }

    /// Every block that must survive a power failure: DBT-tracked lines in
    /// slot order, then WBQ entries oldest first. For an uncontrolled
    /// write-back L1, every dirty line.
    pub fn list_backup_set(&self) -> Vec<BackupRecord> {
        let Some(dbt) = &self.dbt else {
            return self
                .lines
                .iter()
                .enumerate()
                .filter(|(_, l)| l.meta.dirty)
                .map(|(i, _)| BackupRecord {
                    block_addr: self.line_addr_at(i),
                    data: self.slice(i).to_vec(),
                    origin: BackupOrigin::Line {
                        set: (i / self.geom.assoc() as usize) as u32,
                        way: (i % self.geom.assoc() as usize) as u32,
                    },
                })
                .collect();
        };
        let mut set = Vec::with_capacity(dbt.len() + self.wbq.len());
        for (_, e) in dbt.entries() {
            let idx = self.geom.line_index(e.set, e.way);
            set.push(BackupRecord {
                block_addr: self.line_addr_at(idx),
                data: self.slice(idx).to_vec(),
                origin: BackupOrigin::Dbt {
                    set: e.set,
                    way: e.way,
                    counter: e.counter,
                },
            });
        }
        for e in self.wbq.iter() {
            set.push(BackupRecord {
                block_addr: e.block_addr,
                data: e.data.clone(),
                origin: BackupOrigin::Wbq {
                    set: e.set,
                    way: e.way,
                    attached: e.attached,
                },
            });
        }
        set
    }

    /// Lose all volatile state.
    pub fn clear(&mut self, now: u64) {
        self.lines.iter_mut().for_each(|l| *l = Line::default());
        if let Some(dbt) = &mut self.dbt {
            dbt.clear();
        }
        self.wbq.clear(now);
        self.dirty = 0;
    }

    /// Reinstall a checkpoint into an empty L1: blocks return dirty to their
    /// original (set, way) and the DBT/WBQ tracking is rebuilt as it was.
    pub fn install_checkpoint(&mut self, records: Vec<BackupRecord>, now: u64) {
        assert_eq!(self.dirty, 0, "checkpoint install into a non-empty L1");
        for rec in records {
            let p = self.geom.decompose(rec.block_addr);
            let install = |this: &mut Self, set: u32, way: u32| {
                debug_assert_eq!(set, p.set);
                let idx = this.geom.line_index(set, way);
                this.clock += 1;
                this.lines[idx] = Line {
                    meta: CacheBlock {
                        valid: true,
                        dirty: false,
                        tag: p.tag,
                    },
                    last_use: this.clock,
                };
                this.slice_mut(idx).copy_from_slice(&rec.data);
                this.set_dirty(idx);
            };
            match rec.origin {
                BackupOrigin::Dbt { set, way, counter } => {
                    install(self, set, way);
                    self.dbt
                        .as_mut()
                        .expect("DBT record restored into an uncontrolled L1")
                        .insert_raw(DbtEntry { set, way, counter });
                }
                BackupOrigin::Wbq { set, way, attached } => {
                    if attached {
                        install(self, set, way);
                    }
                    self.wbq.push(WbqEntry {
                        set,
                        way,
                        tag: p.tag,
                        block_addr: rec.block_addr,
                        attached,
                        data: rec.data.clone(),
                        queued_at: now,
                        done_at: None,
                    });
                }
                BackupOrigin::Line { set, way } => install(self, set, way),
            }
        }
    }

    /// Cross-check the controller's bookkeeping against the line array.
    pub fn check_invariants(&self) -> Result<(), String> {
        let scanned = self.count_dirty_lines();
        if scanned != self.dirty {
            return Err(format!("dirty counter {} but {} dirty lines", self.dirty, scanned));
        }
        if self.write_policy == WritePolicy::WriteThrough && scanned != 0 {
            return Err(format!("write-through L1 holds {scanned} dirty lines"));
        }
        let Some(dbt) = &self.dbt else {
            return Ok(());
        };
        if dbt.len() > dbt.capacity() || self.wbq.len() > self.wbq.capacity() {
            return Err("DBT or WBQ over capacity".into());
        }
        let mut tracked = 0;
        for (_, e) in dbt.entries() {
            let l = self.line(e.set, e.way);
            if !(l.valid && l.dirty) {
                return Err(format!("DBT entry ({}, {}) points at a clean line", e.set, e.way));
            }
            if self.wbq.find_attached(e.set, e.way).is_some() {
                return Err(format!("line ({}, {}) tracked twice", e.set, e.way));
            }
            tracked += 1;
        }
        for e in self.wbq.iter().filter(|e| e.attached) {
            let l = self.line(e.set, e.way);
            if !(l.dirty && l.holds(e.tag)) {
                return Err(format!("attached WBQ entry ({}, {}) points at a stale line", e.set, e.way));
            }
            tracked += 1;
        }
        if tracked != scanned {
            return Err(format!("{scanned} dirty lines but {tracked} tracked"));
        }
        if scanned > dbt.capacity() + self.wbq.capacity() {
            return Err(format!("{scanned} dirty lines exceed K"));
        }
        Ok(())
    }

    /// Fault injection: drop the oldest WBQ entry without writing it.
    pub(crate) fn drop_wbq_head(&mut self) -> Option<u64> {
        let head = self.wbq.remove(0)?;
        if head.attached {
            let idx = self.geom.line_index(head.set, head.way);
            self.clear_dirty(idx);
        }
        Some(head.block_addr)
    }

    /// Fault injection: forget that some dirty line is dirty.
    pub(crate) fn clear_some_dirty_bit(&mut self) -> Option<u64> {
        let idx = match &mut self.dbt {
            Some(dbt) => {
                let (slot, e) = dbt.entries().next().map(|(s, e)| (s, *e))?;
                dbt.remove(slot);
                self.geom.line_index(e.set, e.way)
            }
            None => self.lines.iter().position(|l| l.meta.dirty)?,
        };
        self.clear_dirty(idx);
        Some(self.line_addr_at(idx))
    }
}
