//! The simulation loop and the power-failure protocol.
//!
//! Time advances one cycle per non-memory instruction between records plus
//! whatever each access costs. At each scheduled failure point the engine
//! backs up the L1's dirty set under the capacitor budget, drops all
//! volatile state, and restores before the next record runs.

use thiserror::Error;

use crate::addr::decompose_address;
use crate::config::{BackupMode, ConfigError, HierarchyConfig};
use crate::l1::{AccessOutcome, L1Cache};
use crate::lower::{BackupOrigin, LowerMemory, RegisterFile};
use crate::oracle::MemoryImage;
use crate::stats::{Meter, Phase, SimStats};
use crate::trace::TraceError;
use crate::types::AccessRecord;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(
        "unsafe backup at failure {failure_index} (instruction {instr_index}): \
         {dirty_blocks} dirty blocks need {required_nj:.3} nJ but the capacitor holds {available_nj:.3} nJ"
    )]
    UnsafeBackup {
        failure_index: u64,
        instr_index: u64,
        dirty_blocks: u64,
        required_nj: f64,
        available_nj: f64,
    },
    #[error("invalid power schedule: {0}")]
    Schedule(String),
}

/// When power fails, in instructions.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub enum PowerSchedule {
    #[default]
    None,
    /// Fails at every multiple of the interval.
    Periodic(u64),
    /// Fails at each listed instruction index, strictly increasing.
    ExplicitList(Vec<u64>),
}

impl PowerSchedule {
    /// Exactly `failures` evenly spaced failures over a trace whose last
    /// instruction index is `last_instr`.
    pub fn for_failure_count(failures: u64, last_instr: u64) -> Result<Self, SimError> {
        if failures == 0 {
            return Ok(PowerSchedule::None);
        }
        let interval = last_instr / (failures + 1);
        if interval == 0 {
            return Err(SimError::Schedule(format!(
                "{failures} failures do not fit in a trace of {} instructions",
                last_instr + 1
            )));
        }
        Ok(PowerSchedule::ExplicitList((1..=failures).map(|k| k * interval).collect()))
    }

    pub fn validate(&self) -> Result<(), SimError> {
        match self {
            PowerSchedule::None => Ok(()),
            PowerSchedule::Periodic(0) => Err(SimError::Schedule("periodic interval must be positive".into())),
            PowerSchedule::Periodic(_) => Ok(()),
            PowerSchedule::ExplicitList(points) => {
                if points.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(SimError::Schedule("failure points must be strictly increasing".into()));
                }
                Ok(())
            }
        }
    }

    /// Failure points in order; unbounded for `Periodic`.
    pub fn points(&self) -> Box<dyn Iterator<Item = u64> + '_> {
        match self {
            PowerSchedule::None => Box::new(std::iter::empty()),
            PowerSchedule::Periodic(every) => Box::new((1..).map_while(move |k: u64| k.checked_mul(*every))),
            PowerSchedule::ExplicitList(points) => Box::new(points.iter().copied()),
        }
    }

    /// Failures that fire on a trace whose last instruction is `last_instr`.
    pub fn failures_within(&self, last_instr: u64) -> u64 {
        self.points().take_while(|&p| p <= last_instr).count() as u64
    }
}

/// The fixed energy reserve available at a power failure.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capacitor {
    pub e_capacitor_nj: f64,
    pub e_reg_file_nj: f64,
}

impl Capacitor {
    pub fn from_config(config: &HierarchyConfig) -> Self {
        Self {
            e_capacitor_nj: config.e_capacitor_nj,
            e_reg_file_nj: config.e_reg_file_nj,
        }
    }

    /// Energy to move `blocks` blocks plus the register file.
    pub fn required_nj(&self, blocks: u64, e_w_nj: f64) -> f64 {
        blocks as f64 * e_w_nj + self.e_reg_file_nj
    }

    pub fn covers(&self, required_nj: f64) -> bool {
        required_nj <= self.e_capacitor_nj + 1e-9
    }
}

/// Deliberate simulator bugs, used to show the oracle notices them.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fault {
    /// Discard the oldest WBQ entry without writing it.
    DropWbqEntry,
    /// Clear a dirty bit without writing the block back.
    ClearDirtyBit,
    /// Leave one block out of the next backup.
    SkipBackupBlock,
    /// Let the next dirty LLC eviction skip its PCM write.
    SkipLlcWriteback,
}

/// What happened at one power failure.
#[derive(Debug, Clone, PartialEq)]
pub struct FailureReport {
    pub index: u64,
    pub instr_index: u64,
    pub dirty_blocks: u64,
    pub backup_energy_nj: f64,
    pub backup_cycles: u64,
    pub restore_energy_nj: f64,
    pub restore_cycles: u64,
    /// Energy the capacitor had to cover for the L1 transfer.
    pub required_nj: f64,
    pub within_budget: bool,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    pub stats: SimStats,
    pub failures: Vec<FailureReport>,
}

pub struct Simulator {
    config: HierarchyConfig,
    capacitor: Capacitor,
    l1: L1Cache,
    lower: LowerMemory,
    meter: Meter,
    now: u64,
    /// First instruction index whose time has not been accounted yet.
    instr_cursor: u64,
    records_done: u64,
    failures: Vec<FailureReport>,
    saved_regs: Option<RegisterFile>,
    skip_backup_block: bool,
    faulted: Vec<u64>,
}

impl Simulator {
    pub fn new(config: HierarchyConfig) -> Result<Self, SimError> {
        config.validate()?;
        Ok(Self {
            capacitor: Capacitor::from_config(&config),
            l1: L1Cache::new(&config),
            lower: LowerMemory::new(&config),
            config,
            meter: Meter::default(),
            now: 0,
            instr_cursor: 0,
            records_done: 0,
            failures: Vec::new(),
            saved_regs: None,
            skip_backup_block: false,
            faulted: Vec::new(),
        })
    }

    pub fn config(&self) -> &HierarchyConfig {
        &self.config
    }

    pub fn l1(&self) -> &L1Cache {
        &self.l1
    }

    pub fn lower(&self) -> &LowerMemory {
        &self.lower
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn records_done(&self) -> u64 {
        self.records_done
    }

    pub fn failures(&self) -> &[FailureReport] {
        &self.failures
    }

    pub fn stats(&self) -> SimStats {
        let mut s = self.meter.stats.clone();
        s.total_cycles = self.now;
        s
    }

    /// Run one trace record.
    pub fn access(&mut self, rec: &AccessRecord) -> Result<AccessOutcome, SimError> {
        decompose_address(rec.address, self.l1.geometry(), self.config.mem_size_bytes)?;
        if rec.instr_index < self.instr_cursor.saturating_sub(1) {
            return Err(TraceError::InstrNotMonotonic {
                index: self.records_done,
                instr: rec.instr_index,
                prev: self.instr_cursor - 1,
            }
            .into());
        }
        self.now += rec.instr_index.saturating_sub(self.instr_cursor);
        self.instr_cursor = self.instr_cursor.max(rec.instr_index + 1);

        self.l1.drain_until(self.now, &mut self.lower, &mut self.meter);
        let out = self.l1.access(rec, self.now, &mut self.lower, &mut self.meter);
        self.now += out.cycles;
        self.meter.stats.stall_cycles += out.stall_cycles;
        let dirty = self.l1.dirty_count() as u64;
        self.meter.stats.max_dirty_blocks = self.meter.stats.max_dirty_blocks.max(dirty);
        self.records_done += 1;
        Ok(out)
    }

    /// Back up, lose power, and restore.
    pub fn power_cycle(&mut self) -> Result<&FailureReport, SimError> {
        self.power_failure()?;
        self.power_restore();
        Ok(self.failures.last().unwrap())
    }

    /// Save the backup set and drop volatile state. Fails when the
    /// capacitor cannot cover the backup and the design must stay within it.
    pub fn power_failure(&mut self) -> Result<(), SimError> {
        self.l1.drain_until(self.now, &mut self.lower, &mut self.meter);
        let mut set = self.l1.list_backup_set();
        let dirty_blocks = set.len() as u64;
        if self.skip_backup_block && !set.is_empty() {
            self.skip_backup_block = false;
            self.faulted.push(set.remove(0).block_addr);
        }

        let e_w = self.config.energies.llc_write_nj;
        let slots = match (self.config.br_enabled, self.config.br_backup) {
            (true, BackupMode::Fixed) => u64::from(self.config.k_max_dirty),
            _ => dirty_blocks,
        };
        let required_nj = self.capacitor.required_nj(slots, e_w);
        let within_budget = self.capacitor.covers(required_nj);
        let enforce = self.config.dbt_enabled || self.config.strict_capacitor;
        let index = self.failures.len() as u64;
        if !within_budget && enforce {
            return Err(SimError::UnsafeBackup {
                failure_index: index,
                instr_index: self.instr_cursor,
                dirty_blocks,
                required_nj,
                available_nj: self.capacitor.e_capacitor_nj,
            });
        }

        self.meter.set_phase(Phase::Backup);
        let energy_before = self.meter.stats.energy_backup_nj;
        let regs = RegisterFile {
            resume_record: self.records_done,
            resume_instr: self.instr_cursor,
        };
        let mut cycles = 0;
        if self.config.br_enabled {
            cycles += self.lower.br.store(set, regs, &self.config, &mut self.meter).cycles;
        } else {
            // Oldest data first so newer copies of a block land last.
            let (queued, lines): (Vec<_>, Vec<_>) =
                set.into_iter().partition(|r| matches!(r.origin, BackupOrigin::Wbq { .. }));
            for rec in queued.iter().chain(&lines) {
                cycles += self.lower.write_block(rec.block_addr, &rec.data, &mut self.meter).cycles;
            }
            self.meter.charge(self.config.e_reg_file_nj);
            cycles += self.config.latencies.sttram_write;
            self.saved_regs = Some(regs);
        }
        if self.config.llc_volatile {
            cycles += self.lower.flush_llc(&mut self.meter);
            self.lower.llc.clear();
        }
        self.l1.clear(self.now);

        self.now += cycles;
        let stats = &mut self.meter.stats;
        stats.backups_performed += 1;
        stats.blocks_backed_up += dirty_blocks;
        stats.backup_cycles += cycles;
        self.failures.push(FailureReport {
            index,
            instr_index: self.instr_cursor,
            dirty_blocks,
            backup_energy_nj: stats.energy_backup_nj - energy_before,
            backup_cycles: cycles,
            restore_energy_nj: 0.0,
            restore_cycles: 0,
            required_nj,
            within_budget,
        });
        self.meter.set_phase(Phase::Stable);
        Ok(())
    }

    /// Power returns: reload the checkpoint (or cold start) and resume.
    pub fn power_restore(&mut self) {
        self.meter.set_phase(Phase::Restore);
        let energy_before = self.meter.stats.energy_restore_nj;
        let mut cycles = 0;
        if let Some((records, regs, cost)) = self.lower.br.take(&self.config, &mut self.meter) {
            self.l1.install_checkpoint(records, self.now);
            debug_assert_eq!(regs.resume_record, self.records_done);
            cycles += cost.cycles;
        } else if self.saved_regs.take().is_some() {
            self.meter.charge(self.config.e_reg_restore_nj);
            cycles += self.config.latencies.sttram_read;
        }
        self.now += cycles;
        self.meter.stats.restore_cycles += cycles;
        self.l1.drain_until(self.now, &mut self.lower, &mut self.meter);
        if let Some(report) = self.failures.last_mut() {
            report.restore_energy_nj = self.meter.stats.energy_restore_nj - energy_before;
            report.restore_cycles = cycles;
        }
        self.meter.set_phase(Phase::Stable);
    }

    /// Inject a fault. Returns the affected block address when it is known
    /// right away; `None` when nothing was there to break or the fault is
    /// armed for later.
    pub fn inject(&mut self, fault: Fault) -> Option<u64> {
        let hit = match fault {
            Fault::DropWbqEntry => self.l1.drop_wbq_head(),
            Fault::ClearDirtyBit => self.l1.clear_some_dirty_bit(),
            Fault::SkipBackupBlock => {
                self.skip_backup_block = true;
                None
            }
            Fault::SkipLlcWriteback => {
                self.lower.wb_fault.armed = true;
                None
            }
        };
        self.faulted.extend(hit);
        hit
    }

    /// Blocks damaged by injected faults so far.
    pub fn faulted_blocks(&self) -> Vec<u64> {
        let mut out = self.faulted.clone();
        out.extend(self.lower.wb_fault.dropped);
        out
    }

    /// Controller bookkeeping check plus the dirty bound.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.l1.check_invariants()?;
        if self.config.dbt_enabled {
            let k = self.config.k_max_dirty as usize;
            if self.l1.dirty_count() > k {
                return Err(format!("{} dirty blocks exceed K = {k}", self.l1.dirty_count()));
            }
            if self.lower.br.records().len() > k {
                return Err("backup region over capacity".into());
            }
        }
        Ok(())
    }

    /// The memory contents a program would observe: PCM overlaid by dirty
    /// LLC lines, the backup region, queued writebacks oldest first, and
    /// dirty L1 lines.
    pub fn memory_image(&self) -> MemoryImage {
        let mut img = MemoryImage::new();
        for (addr, data) in self.lower.pcm.blocks() {
            img.write(addr, data);
        }
        for (addr, data) in self.lower.llc.dirty_blocks() {
            img.write(addr, data);
        }
        for rec in self.lower.br.records() {
            img.write(rec.block_addr, &rec.data);
        }
        for e in self.l1.wbq().iter() {
            img.write(e.block_addr, &e.data);
        }
        for (addr, data) in self.l1.dirty_blocks() {
            img.write(addr, data);
        }
        img
    }

    pub fn finish(mut self) -> RunResult {
        self.l1.drain_until(self.now, &mut self.lower, &mut self.meter);
        RunResult {
            stats: self.stats(),
            failures: self.failures,
        }
    }
}

/// Replay a trace under a failure schedule, calling `observe` after every
/// record and every power cycle.
pub fn run_observed<I, F>(
    trace: I,
    config: &HierarchyConfig,
    schedule: &PowerSchedule,
    mut observe: F,
) -> Result<(RunResult, MemoryImage), SimError>
where
    I: IntoIterator<Item = Result<AccessRecord, TraceError>>,
    F: FnMut(&Simulator),
{
    schedule.validate()?;
    let mut sim = Simulator::new(config.clone())?;
    let mut points = schedule.points();
    let mut next = points.next();
    for rec in trace {
        let rec = rec?;
        while let Some(p) = next.filter(|&p| rec.instr_index >= p) {
            debug_assert!(p >= 1);
            sim.power_cycle()?;
            observe(&sim);
            next = points.next();
        }
        sim.access(&rec)?;
        observe(&sim);
    }
    let image = sim.memory_image();
    Ok((sim.finish(), image))
}

pub fn run<I>(trace: I, config: &HierarchyConfig, schedule: &PowerSchedule) -> Result<RunResult, SimError>
where
    I: IntoIterator<Item = Result<AccessRecord, TraceError>>,
{
    run_observed(trace, config, schedule, |_| {}).map(|(r, _)| r)
}

/// `run` over records already in memory.
pub fn run_records(records: &[AccessRecord], config: &HierarchyConfig, schedule: &PowerSchedule) -> Result<RunResult, SimError> {
    run(records.iter().copied().map(Ok), config, schedule)
}
