//! C ABI over the simulator.
//!
//! Every fallible function returns an [`NvcStatus`]; on failure the message
//! is kept per thread and read with [`nvc_last_error`]. Handles are opaque
//! and owned by the caller until passed to the matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use nvcache::config::ConfigError;
use nvcache::trace::{self, TraceError, TraceOptions};
use nvcache::{AccessKind, AccessRecord, HierarchyConfig, PowerSchedule, SimError, SimStats, Simulator};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvcStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Trace = 4,
    UnsafeBackup = 5,
    Schedule = 6,
    Io = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NvcAccessKind {
    Read = 0,
    Write = 1,
}

/// Counters and energy ledger of a run. Energies in nJ.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct NvcStats {
    pub accesses: u64,
    pub l1_reads: u64,
    pub l1_writes: u64,
    pub l1_hits: u64,
    pub l1_misses: u64,
    pub l1_fills: u64,
    pub llc_reads: u64,
    pub llc_writes: u64,
    pub llc_hits: u64,
    pub llc_misses: u64,
    pub pcm_reads: u64,
    pub pcm_writes: u64,
    pub br_reads: u64,
    pub br_writes: u64,
    pub wbq_forwards: u64,
    pub dbt_evictions: u64,
    pub stall_cycles: u64,
    pub backup_cycles: u64,
    pub restore_cycles: u64,
    pub total_cycles: u64,
    pub energy_stable_nj: f64,
    pub energy_backup_nj: f64,
    pub energy_restore_nj: f64,
    pub energy_total_nj: f64,
    pub backups_performed: u64,
    pub blocks_backed_up: u64,
    pub max_dirty_blocks: u64,
}

impl From<&SimStats> for NvcStats {
    fn from(s: &SimStats) -> Self {
        Self {
            accesses: s.accesses,
            l1_reads: s.l1_reads,
            l1_writes: s.l1_writes,
            l1_hits: s.l1_hits,
            l1_misses: s.l1_misses,
            l1_fills: s.l1_fills,
            llc_reads: s.llc_reads,
            llc_writes: s.llc_writes,
            llc_hits: s.llc_hits,
            llc_misses: s.llc_misses,
            pcm_reads: s.pcm_reads,
            pcm_writes: s.pcm_writes,
            br_reads: s.br_reads,
            br_writes: s.br_writes,
            wbq_forwards: s.wbq_forwards,
            dbt_evictions: s.dbt_evictions,
            stall_cycles: s.stall_cycles,
            backup_cycles: s.backup_cycles,
            restore_cycles: s.restore_cycles,
            total_cycles: s.total_cycles,
            energy_stable_nj: s.energy_stable_nj,
            energy_backup_nj: s.energy_backup_nj,
            energy_restore_nj: s.energy_restore_nj,
            energy_total_nj: s.total_energy_nj(),
            backups_performed: s.backups_performed,
            blocks_backed_up: s.blocks_backed_up,
            max_dirty_blocks: s.max_dirty_blocks,
        }
    }
}

/// Opaque hierarchy configuration.
pub struct NvcConfig {
    inner: HierarchyConfig,
}

/// Opaque in-memory trace.
pub struct NvcTrace {
    records: Vec<AccessRecord>,
}

/// Opaque simulator instance.
pub struct NvcSim {
    inner: Simulator,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(NvcStatus, String);

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure(NvcStatus::Config, e.to_string())
    }
}

impl From<TraceError> for Failure {
    fn from(e: TraceError) -> Self {
        let status = match e {
            TraceError::Io(_) => NvcStatus::Io,
            _ => NvcStatus::Trace,
        };
        Failure(status, e.to_string())
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        let status = match &e {
            SimError::Config(_) => NvcStatus::Config,
            SimError::Trace(TraceError::Io(_)) => NvcStatus::Io,
            SimError::Trace(_) => NvcStatus::Trace,
            SimError::UnsafeBackup { .. } => NvcStatus::UnsafeBackup,
            SimError::Schedule(_) => NvcStatus::Schedule,
        };
        Failure(status, e.to_string())
    }
}

fn set_last_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("no interior NUL");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

/// Run `f`, recording any error or panic as the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> NvcStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
            NvcStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_last_error(&msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal panic: {msg}"));
            NvcStatus::Panic
        }
    }
}

fn null(what: &str) -> Failure {
    Failure(NvcStatus::NullPointer, format!("{what} is null"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: caller passes a NUL-terminated string.
    unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| Failure(NvcStatus::InvalidUtf8, format!("{what} is not valid UTF-8")))
}

unsafe fn handle<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    // SAFETY: caller passes a live handle or null.
    unsafe { p.as_ref() }.ok_or_else(|| null(what))
}

unsafe fn handle_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    // SAFETY: caller passes a live handle or null.
    unsafe { p.as_mut() }.ok_or_else(|| null(what))
}

unsafe fn out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(null(what));
    }
    // SAFETY: non-null, caller-provided storage for one T.
    unsafe { p.write(value) };
    Ok(())
}

/// Message for the last failed call on this thread, or NULL. Valid until
/// the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn nvc_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Blocks a capacitor can back up after the register file.
///
/// # Safety
/// `out_k` must point to writable storage for one `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn nvc_derive_k(e_capacitor_nj: f64, e_reg_file_nj: f64, e_w_nj: f64, out_k: *mut u64) -> NvcStatus {
    guard(|| {
        let k = nvcache::derive_k(e_capacitor_nj, e_reg_file_nj, e_w_nj)?;
        unsafe { out(out_k, k, "out_k") }
    })
}

/// A configuration holding the built-in defaults. Never returns NULL.
#[no_mangle]
pub extern "C" fn nvc_config_new() -> *mut NvcConfig {
    Box::into_raw(Box::new(NvcConfig {
        inner: HierarchyConfig::default(),
    }))
}

/// Load a `key = value` configuration file over the defaults.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out_config` must be writable.
#[no_mangle]
pub unsafe extern "C" fn nvc_config_load(path: *const c_char, out_config: *mut *mut NvcConfig) -> NvcStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path") }?;
        let text = std::fs::read_to_string(path).map_err(|e| Failure(NvcStatus::Io, format!("{path}: {e}")))?;
        let inner = HierarchyConfig::from_kv(&text)?;
        unsafe { out(out_config, Box::into_raw(Box::new(NvcConfig { inner })), "out_config") }
    })
}

/// Set one key from its textual value.
///
/// # Safety
/// `config` must be a live handle; `key` and `value` NUL-terminated strings.
#[no_mangle]
pub unsafe extern "C" fn nvc_config_set(config: *mut NvcConfig, key: *const c_char, value: *const c_char) -> NvcStatus {
    guard(|| {
        let config = unsafe { handle_mut(config, "config") }?;
        let (key, value) = unsafe { (str_arg(key, "key")?, str_arg(value, "value")?) };
        config.inner.set(key, value)?;
        Ok(())
    })
}

/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nvc_config_validate(config: *const NvcConfig) -> NvcStatus {
    guard(|| {
        unsafe { handle(config, "config") }?.inner.validate()?;
        Ok(())
    })
}

/// # Safety
/// `config` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nvc_config_free(config: *mut NvcConfig) {
    if !config.is_null() {
        // SAFETY: allocated by this library and not yet freed.
        drop(unsafe { Box::from_raw(config) });
    }
}

/// Read a text (`.mtr`) or binary (`.mtb`) trace, checking addresses
/// against `config`'s memory size.
///
/// # Safety
/// `path` must be NUL-terminated, `config` live, `out_trace` writable.
#[no_mangle]
pub unsafe extern "C" fn nvc_trace_load(path: *const c_char, config: *const NvcConfig, out_trace: *mut *mut NvcTrace) -> NvcStatus {
    guard(|| {
        let path = unsafe { str_arg(path, "path") }?;
        let cfg = &unsafe { handle(config, "config") }?.inner;
        let opts = TraceOptions {
            mem_size_bytes: Some(cfg.mem_size_bytes),
            mem_ops_per_instruction: cfg.mem_ops_per_instruction,
        };
        let records = trace::read_all(Path::new(path), opts)?;
        unsafe { out(out_trace, Box::into_raw(Box::new(NvcTrace { records })), "out_trace") }
    })
}

/// Number of records, or 0 for NULL.
///
/// # Safety
/// `trace` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn nvc_trace_len(trace: *const NvcTrace) -> u64 {
    // SAFETY: caller passes a live handle or null.
    unsafe { trace.as_ref() }.map_or(0, |t| t.records.len() as u64)
}

/// # Safety
/// `trace` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nvc_trace_free(trace: *mut NvcTrace) {
    if !trace.is_null() {
        // SAFETY: allocated by this library and not yet freed.
        drop(unsafe { Box::from_raw(trace) });
    }
}

/// A fresh simulator. The configuration is copied; it may be freed after.
///
/// # Safety
/// `config` must be live; `out_sim` writable.
#[no_mangle]
pub unsafe extern "C" fn nvc_sim_new(config: *const NvcConfig, out_sim: *mut *mut NvcSim) -> NvcStatus {
    guard(|| {
        let cfg = unsafe { handle(config, "config") }?.inner.clone();
        let inner = Simulator::new(cfg)?;
        unsafe { out(out_sim, Box::into_raw(Box::new(NvcSim { inner })), "out_sim") }
    })
}

/// Simulate one memory access. `instr_index` must not decrease.
///
/// # Safety
/// `sim` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn nvc_sim_access(sim: *mut NvcSim, kind: NvcAccessKind, address: u64, instr_index: u64) -> NvcStatus {
    guard(|| {
        let sim = unsafe { handle_mut(sim, "sim") }?;
        let kind = match kind {
            NvcAccessKind::Read => AccessKind::Read,
            NvcAccessKind::Write => AccessKind::Write,
        };
        sim.inner.access(&AccessRecord { kind, address, instr_index })?;
        Ok(())
    })
}

/// Back up, lose power, and restore. Reports the dirty block count that
/// was backed up through `out_dirty_blocks` when it is not NULL.
///
/// # Safety
/// `sim` must be live; `out_dirty_blocks` NULL or writable.
#[no_mangle]
pub unsafe extern "C" fn nvc_sim_power_failure(sim: *mut NvcSim, out_dirty_blocks: *mut u64) -> NvcStatus {
    guard(|| {
        let sim = unsafe { handle_mut(sim, "sim") }?;
        let dirty = sim.inner.power_cycle()?.dirty_blocks;
        if !out_dirty_blocks.is_null() {
            unsafe { out(out_dirty_blocks, dirty, "out_dirty_blocks") }?;
        }
        Ok(())
    })
}

/// Counters so far.
///
/// # Safety
/// `sim` must be live; `out_stats` writable.
#[no_mangle]
pub unsafe extern "C" fn nvc_sim_stats(sim: *const NvcSim, out_stats: *mut NvcStats) -> NvcStatus {
    guard(|| {
        let stats = unsafe { handle(sim, "sim") }?.inner.stats();
        unsafe { out(out_stats, NvcStats::from(&stats), "out_stats") }
    })
}

/// # Safety
/// `sim` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn nvc_sim_free(sim: *mut NvcSim) {
    if !sim.is_null() {
        // SAFETY: allocated by this library and not yet freed.
        drop(unsafe { Box::from_raw(sim) });
    }
}

/// Run a whole trace. Power fails every `failure_every_instructions`
/// instructions; 0 means stable power.
///
/// # Safety
/// `config` and `trace` must be live; `out_stats` writable.
#[no_mangle]
pub unsafe extern "C" fn nvc_run(
    config: *const NvcConfig,
    trace: *const NvcTrace,
    failure_every_instructions: u64,
    out_stats: *mut NvcStats,
) -> NvcStatus {
    guard(|| {
        let cfg = &unsafe { handle(config, "config") }?.inner;
        let trace = unsafe { handle(trace, "trace") }?;
        let sched = match failure_every_instructions {
            0 => PowerSchedule::None,
            n => PowerSchedule::Periodic(n),
        };
        let result = nvcache::run_records(&trace.records, cfg, &sched)?;
        unsafe { out(out_stats, NvcStats::from(&result.stats), "out_stats") }
    })
}
