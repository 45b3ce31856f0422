//! Hierarchy configuration, the flat `key = value` file format, and the
//! capacitor arithmetic that sizes the dirty-block bound.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

/// Slack used when flooring energy ratios, so that a capacitor sized as
/// exactly `E_reg + K * e_w` yields `K` rather than `K - 1` after rounding.
const RATIO_EPSILON: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("unknown configuration key `{0}`")]
    UnknownKey(String),
    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("`{key}` = {value} must be a nonzero power of two")]
    NotPowerOfTwo { key: &'static str, value: u64 },
    #[error("{level} associativity {assoc} does not evenly divide {lines} lines into a power-of-two set count")]
    Associativity {
        level: &'static str,
        assoc: u32,
        lines: u64,
    },
    #[error("k_max_dirty must equal dbt_entries + wbq_entries (K = M + N), got K = {k}, M = {m}, N = {n}")]
    KSplit { k: u32, m: u32, n: u32 },
    #[error("dbt_entries must be at least 1 when the dirty block table is enabled")]
    EmptyDbt,
    #[error("wc_bits must be in 1..=31 for the lfw policy, got {0}")]
    WcBits(u32),
    #[error("br_enabled requires dbt_enabled: the backup region only holds K blocks")]
    BackupRegionWithoutDbt,
    #[error("capacitor ({e_capacitor_nj} nJ) cannot cover the register file backup ({e_reg_file_nj} nJ)")]
    CapacitorBelowRegisterFile {
        e_capacitor_nj: f64,
        e_reg_file_nj: f64,
    },
    #[error("capacitor ({e_capacitor_nj} nJ) affords only {affordable} blocks but K = {k}")]
    CapacitorTooSmall {
        e_capacitor_nj: f64,
        affordable: u64,
        k: u32,
    },
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("block_size_bytes ({block}) must be between 4 and the smallest cache size")]
    BlockSize { block: u64 },
    #[error("mem_size_bytes must not exceed 2^32 (32-bit byte addresses), got {0}")]
    MemoryTooLarge(u64),
}

/// DBT victim selection policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Policy {
    /// Least frequently written: evict the entry with the smallest write counter.
    Lfw,
    /// Recency ranked: see [`LrwEvict`] for which end of the order is evicted.
    Lrw,
}

/// Which end of the LRW recency order gets evicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LrwEvict {
    MostRecent,
    LeastRecent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum WritePolicy {
    WriteBack,
    WriteThrough,
}

/// How much of the backup region a power-failure backup writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BackupMode {
    /// Every failure writes all K block slots plus the register file, so
    /// backup energy is the constant `K * e_w + E_reg_file`.
    Fixed,
    /// Only the blocks that are actually dirty are written.
    DirtyOnly,
}

/// Cycle counts per access, by technology. The L1 is SRAM, the LLC and the
/// backup region are STT-RAM, main memory is PCM.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Latencies {
    pub sram_read: u64,
    pub sram_write: u64,
    pub sttram_read: u64,
    pub sttram_write: u64,
    pub pcm_read: u64,
    pub pcm_write: u64,
}

/// Dynamic energy in nJ for one block-level access at each level.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Energies {
    pub l1_read_nj: f64,
    pub l1_write_nj: f64,
    pub llc_read_nj: f64,
    pub llc_write_nj: f64,
    pub pcm_read_nj: f64,
    pub pcm_write_nj: f64,
}

/// PCM SET and RESET write energies; traces carry no bit values so a block
/// write is charged their mean.
pub const PCM_SET_ENERGY_NJ: f64 = 6.927;
pub const PCM_RESET_ENERGY_NJ: f64 = 6.946;

impl Default for Latencies {
    fn default() -> Self {
        Self {
            sram_read: 1,
            sram_write: 2,
            sttram_read: 2,
            sttram_write: 10,
            pcm_read: 35,
            pcm_write: 100,
        }
    }
}

impl Default for Energies {
    fn default() -> Self {
        Self {
            l1_read_nj: 0.006,
            l1_write_nj: 0.002,
            llc_read_nj: 0.123,
            llc_write_nj: 0.542,
            pcm_read_nj: 1.553,
            pcm_write_nj: (PCM_SET_ENERGY_NJ + PCM_RESET_ENERGY_NJ) / 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyConfig {
    pub l1_size_bytes: u64,
    pub l1_assoc: u32,
    pub llc_size_bytes: u64,
    pub llc_assoc: u32,
    pub block_size_bytes: u64,
    pub mem_size_bytes: u64,
    pub latencies: Latencies,
    pub energies: Energies,
    /// K: the most dirty blocks the capacitor can back up.
    pub k_max_dirty: u32,
    /// M: dirty block table entries.
    pub dbt_entries: u32,
    /// N: writeback queue entries.
    pub wbq_entries: u32,
    pub wc_bits: u32,
    pub policy: Policy,
    pub lrw_evict: LrwEvict,
    pub write_policy: WritePolicy,
    /// Enables the DBT/WBQ controller. Baselines run with it off.
    pub dbt_enabled: bool,
    pub br_enabled: bool,
    pub br_backup: BackupMode,
    /// SRAM last-level cache: its contents are lost on power failure and
    /// must be flushed to PCM during backup.
    pub llc_volatile: bool,
    /// Abort on an over-budget backup even when the DBT is disabled.
    pub strict_capacitor: bool,
    pub e_capacitor_nj: f64,
    pub e_reg_file_nj: f64,
    pub e_reg_restore_nj: f64,
    /// Memory operations per instruction, used to map trace ordinals to
    /// instruction indices when a trace omits them.
    pub mem_ops_per_instruction: f64,
}

impl Default for HierarchyConfig {
    /// The single-core system of the reference setup: 16KB 4-way L1,
    /// 128KB 16-way STT-RAM LLC, 128MB PCM, K = 16 split 12 + 4.
    fn default() -> Self {
        let energies = Energies::default();
        let k = 16;
        let e_reg_file_nj = energies.llc_write_nj;
        Self {
            l1_size_bytes: 16 * 1024,
            l1_assoc: 4,
            llc_size_bytes: 128 * 1024,
            llc_assoc: 16,
            block_size_bytes: 64,
            mem_size_bytes: 128 * 1024 * 1024,
            latencies: Latencies::default(),
            energies,
            k_max_dirty: k,
            dbt_entries: 12,
            wbq_entries: 4,
            wc_bits: 6,
            policy: Policy::Lfw,
            lrw_evict: LrwEvict::MostRecent,
            write_policy: WritePolicy::WriteBack,
            dbt_enabled: true,
            br_enabled: true,
            br_backup: BackupMode::Fixed,
            llc_volatile: false,
            strict_capacitor: false,
            e_capacitor_nj: capacitor_for_k(k, e_reg_file_nj, energies.llc_write_nj),
            e_reg_file_nj,
            e_reg_restore_nj: energies.llc_read_nj,
            mem_ops_per_instruction: 0.4,
        }
    }
}

/// Largest number of blocks a capacitor can back up after the register file:
/// `floor((E_capacitor - E_reg_file) / e_w)`.
pub fn derive_k(e_capacitor_nj: f64, e_reg_file_nj: f64, e_w_sttram_nj: f64) -> Result<u64, ConfigError> {
    if !(e_w_sttram_nj > 0.0) {
        return Err(ConfigError::NonPositive("e_w_sttram_nj"));
    }
    if e_capacitor_nj < e_reg_file_nj {
        return Err(ConfigError::CapacitorBelowRegisterFile {
            e_capacitor_nj,
            e_reg_file_nj,
        });
    }
    let ratio = (e_capacitor_nj - e_reg_file_nj) / e_w_sttram_nj;
    Ok((ratio * (1.0 + RATIO_EPSILON) + RATIO_EPSILON).floor() as u64)
}

/// Capacitor energy that backs up exactly `k` blocks plus the register file.
pub fn capacitor_for_k(k: u32, e_reg_file_nj: f64, e_w_sttram_nj: f64) -> f64 {
    e_reg_file_nj + f64::from(k) * e_w_sttram_nj
}

/// Worst-case backup energy of an unbounded write-back L1: every block dirty.
pub fn backup_energy_full_l1(config: &HierarchyConfig) -> f64 {
    config.l1_blocks() as f64 * config.energies.llc_write_nj
}

/// Every recognised configuration key, in canonical order.
pub const CONFIG_KEYS: &[&str] = &[
    "l1_size_bytes",
    "l1_assoc",
    "llc_size_bytes",
    "llc_assoc",
    "block_size_bytes",
    "mem_size_bytes",
    "sram_read_cycles",
    "sram_write_cycles",
    "sttram_read_cycles",
    "sttram_write_cycles",
    "pcm_read_cycles",
    "pcm_write_cycles",
    "l1_read_energy_nj",
    "l1_write_energy_nj",
    "llc_read_energy_nj",
    "llc_write_energy_nj",
    "pcm_read_energy_nj",
    "pcm_write_energy_nj",
    "k_max_dirty",
    "dbt_entries",
    "wbq_entries",
    "wc_bits",
    "policy",
    "lrw_evict",
    "write_policy",
    "dbt_enabled",
    "br_enabled",
    "br_backup",
    "llc_volatile",
    "strict_capacitor",
    "e_capacitor_nj",
    "e_reg_file_nj",
    "e_reg_restore_nj",
    "mem_ops_per_instruction",
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: e.to_string(),
    })
}

fn parse_bool(key: &str, value: &str) -> Result<bool, ConfigError> {
    match value.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(ConfigError::InvalidValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: "expected true/false".into(),
        }),
    }
}

pub(crate) fn parse_size(key: &str, value: &str) -> Result<u64, ConfigError> {
    let v = value.trim();
    let upper = v.to_ascii_uppercase();
    let unit = upper.strip_suffix('B').filter(|s| s.ends_with(['K', 'M', 'G'])).unwrap_or(&upper);
    let (digits, mult) = match unit.chars().last() {
        Some('K') => (&v[..unit.len() - 1], 1u64 << 10),
        Some('M') => (&v[..unit.len() - 1], 1u64 << 20),
        Some('G') => (&v[..unit.len() - 1], 1u64 << 30),
        _ => (v, 1),
    };
    let n: u64 = parse_value(key, digits.trim())?;
    n.checked_mul(mult).ok_or_else(|| ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: "overflow".into(),
    })
}

fn enum_error(key: &str, value: &str, expected: &str) -> ConfigError {
    ConfigError::InvalidValue {
        key: key.to_string(),
        value: value.to_string(),
        reason: format!("expected one of {expected}"),
    }
}

impl FromStr for Policy {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "lfw" => Ok(Policy::Lfw),
            "lrw" => Ok(Policy::Lrw),
            _ => Err(enum_error("policy", s, "lfw, lrw")),
        }
    }
}

impl fmt::Display for Policy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Policy::Lfw => "lfw",
            Policy::Lrw => "lrw",
        })
    }
}

impl FromStr for LrwEvict {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "most_recent" => Ok(LrwEvict::MostRecent),
            "least_recent" => Ok(LrwEvict::LeastRecent),
            _ => Err(enum_error("lrw_evict", s, "most_recent, least_recent")),
        }
    }
}

impl fmt::Display for LrwEvict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LrwEvict::MostRecent => "most_recent",
            LrwEvict::LeastRecent => "least_recent",
        })
    }
}

impl FromStr for WritePolicy {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "write_back" | "writeback" => Ok(WritePolicy::WriteBack),
            "write_through" | "writethrough" => Ok(WritePolicy::WriteThrough),
            _ => Err(enum_error("write_policy", s, "write_back, write_through")),
        }
    }
}

impl fmt::Display for WritePolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            WritePolicy::WriteBack => "write_back",
            WritePolicy::WriteThrough => "write_through",
        })
    }
}

impl FromStr for BackupMode {
    type Err = ConfigError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "fixed" => Ok(BackupMode::Fixed),
            "dirty" | "dirty_only" => Ok(BackupMode::DirtyOnly),
            _ => Err(enum_error("br_backup", s, "fixed, dirty")),
        }
    }
}

impl fmt::Display for BackupMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            BackupMode::Fixed => "fixed",
            BackupMode::DirtyOnly => "dirty",
        })
    }
}

impl HierarchyConfig {
    pub fn l1_blocks(&self) -> u64 {
        self.l1_size_bytes / self.block_size_bytes
    }

    pub fn llc_blocks(&self) -> u64 {
        self.llc_size_bytes / self.block_size_bytes
    }

    /// Width of the LRW recency field, `ceil(log2 M)` bits.
    pub fn lrw_bits(&self) -> u32 {
        let m = self.dbt_entries.max(1);
        u32::BITS - (m - 1).leading_zeros()
    }

    /// Slots in the backup region: K blocks plus one register-file record.
    pub fn backup_region_slots(&self) -> u64 {
        if self.br_enabled {
            u64::from(self.k_max_dirty) + 1
        } else {
            0
        }
    }

    /// Blocks the configured capacitor can afford.
    pub fn affordable_blocks(&self) -> Result<u64, ConfigError> {
        derive_k(self.e_capacitor_nj, self.e_reg_file_nj, self.energies.llc_write_nj)
    }

    /// Resize the capacitor so it affords exactly the configured K.
    pub fn size_capacitor_for_k(&mut self) {
        self.e_capacitor_nj =
            capacitor_for_k(self.k_max_dirty, self.e_reg_file_nj, self.energies.llc_write_nj);
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, value) in [
            ("l1_size_bytes", self.l1_size_bytes),
            ("llc_size_bytes", self.llc_size_bytes),
            ("block_size_bytes", self.block_size_bytes),
            ("mem_size_bytes", self.mem_size_bytes),
        ] {
            if !value.is_power_of_two() {
                return Err(ConfigError::NotPowerOfTwo { key, value });
            }
        }
        if self.mem_size_bytes > 1 << 32 {
            return Err(ConfigError::MemoryTooLarge(self.mem_size_bytes));
        }
        let smallest = self.l1_size_bytes.min(self.llc_size_bytes).min(self.mem_size_bytes);
        if self.block_size_bytes < 4 || self.block_size_bytes > smallest {
            return Err(ConfigError::BlockSize {
                block: self.block_size_bytes,
            });
        }
        for (level, assoc, lines) in [
            ("L1", self.l1_assoc, self.l1_blocks()),
            ("LLC", self.llc_assoc, self.llc_blocks()),
        ] {
            let assoc64 = u64::from(assoc);
            if assoc == 0 || lines % assoc64 != 0 || !(lines / assoc64).is_power_of_two() {
                return Err(ConfigError::Associativity { level, assoc, lines });
            }
        }
        if self.k_max_dirty != self.dbt_entries + self.wbq_entries {
            return Err(ConfigError::KSplit {
                k: self.k_max_dirty,
                m: self.dbt_entries,
                n: self.wbq_entries,
            });
        }
        if self.dbt_enabled && self.dbt_entries == 0 {
            return Err(ConfigError::EmptyDbt);
        }
        if self.policy == Policy::Lfw && !(1..=31).contains(&self.wc_bits) {
            return Err(ConfigError::WcBits(self.wc_bits));
        }
        if self.br_enabled && !self.dbt_enabled {
            return Err(ConfigError::BackupRegionWithoutDbt);
        }
        if !(self.mem_ops_per_instruction > 0.0) || self.mem_ops_per_instruction > 1.0 {
            return Err(ConfigError::InvalidValue {
                key: "mem_ops_per_instruction".into(),
                value: self.mem_ops_per_instruction.to_string(),
                reason: "must be in (0, 1]".into(),
            });
        }
        let affordable = self.affordable_blocks()?;
        if affordable < u64::from(self.k_max_dirty) {
            return Err(ConfigError::CapacitorTooSmall {
                e_capacitor_nj: self.e_capacitor_nj,
                affordable,
                k: self.k_max_dirty,
            });
        }
        Ok(())
    }

    /// Set one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let value = value.trim();
        let lat = &mut self.latencies;
        let en = &mut self.energies;
        match key {
            "l1_size_bytes" => self.l1_size_bytes = parse_size(key, value)?,
            "l1_assoc" => self.l1_assoc = parse_value(key, value)?,
            "llc_size_bytes" => self.llc_size_bytes = parse_size(key, value)?,
            "llc_assoc" => self.llc_assoc = parse_value(key, value)?,
            "block_size_bytes" => self.block_size_bytes = parse_size(key, value)?,
            "mem_size_bytes" => self.mem_size_bytes = parse_size(key, value)?,
            "sram_read_cycles" => lat.sram_read = parse_value(key, value)?,
            "sram_write_cycles" => lat.sram_write = parse_value(key, value)?,
            "sttram_read_cycles" => lat.sttram_read = parse_value(key, value)?,
            "sttram_write_cycles" => lat.sttram_write = parse_value(key, value)?,
            "pcm_read_cycles" => lat.pcm_read = parse_value(key, value)?,
            "pcm_write_cycles" => lat.pcm_write = parse_value(key, value)?,
            "l1_read_energy_nj" => en.l1_read_nj = parse_value(key, value)?,
            "l1_write_energy_nj" => en.l1_write_nj = parse_value(key, value)?,
            "llc_read_energy_nj" => en.llc_read_nj = parse_value(key, value)?,
            "llc_write_energy_nj" => en.llc_write_nj = parse_value(key, value)?,
            "pcm_read_energy_nj" => en.pcm_read_nj = parse_value(key, value)?,
            "pcm_write_energy_nj" => en.pcm_write_nj = parse_value(key, value)?,
            "k_max_dirty" => self.k_max_dirty = parse_value(key, value)?,
            "dbt_entries" => self.dbt_entries = parse_value(key, value)?,
            "wbq_entries" => self.wbq_entries = parse_value(key, value)?,
            "wc_bits" => self.wc_bits = parse_value(key, value)?,
            "policy" => self.policy = value.parse()?,
            "lrw_evict" => self.lrw_evict = value.parse()?,
            "write_policy" => self.write_policy = value.parse()?,
            "dbt_enabled" => self.dbt_enabled = parse_bool(key, value)?,
            "br_enabled" => self.br_enabled = parse_bool(key, value)?,
            "br_backup" => self.br_backup = value.parse()?,
            "llc_volatile" => self.llc_volatile = parse_bool(key, value)?,
            "strict_capacitor" => self.strict_capacitor = parse_bool(key, value)?,
            "e_capacitor_nj" => self.e_capacitor_nj = parse_value(key, value)?,
            "e_reg_file_nj" => self.e_reg_file_nj = parse_value(key, value)?,
            "e_reg_restore_nj" => self.e_reg_restore_nj = parse_value(key, value)?,
            "mem_ops_per_instruction" => self.mem_ops_per_instruction = parse_value(key, value)?,
            _ => return Err(ConfigError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    /// Canonical textual value of one key.
    pub fn get(&self, key: &str) -> Option<String> {
        let lat = &self.latencies;
        let en = &self.energies;
        Some(match key {
            "l1_size_bytes" => self.l1_size_bytes.to_string(),
            "l1_assoc" => self.l1_assoc.to_string(),
            "llc_size_bytes" => self.llc_size_bytes.to_string(),
            "llc_assoc" => self.llc_assoc.to_string(),
            "block_size_bytes" => self.block_size_bytes.to_string(),
            "mem_size_bytes" => self.mem_size_bytes.to_string(),
            "sram_read_cycles" => lat.sram_read.to_string(),
            "sram_write_cycles" => lat.sram_write.to_string(),
            "sttram_read_cycles" => lat.sttram_read.to_string(),
            "sttram_write_cycles" => lat.sttram_write.to_string(),
            "pcm_read_cycles" => lat.pcm_read.to_string(),
            "pcm_write_cycles" => lat.pcm_write.to_string(),
            "l1_read_energy_nj" => en.l1_read_nj.to_string(),
            "l1_write_energy_nj" => en.l1_write_nj.to_string(),
            "llc_read_energy_nj" => en.llc_read_nj.to_string(),
            "llc_write_energy_nj" => en.llc_write_nj.to_string(),
            "pcm_read_energy_nj" => en.pcm_read_nj.to_string(),
            "pcm_write_energy_nj" => en.pcm_write_nj.to_string(),
            "k_max_dirty" => self.k_max_dirty.to_string(),
            "dbt_entries" => self.dbt_entries.to_string(),
            "wbq_entries" => self.wbq_entries.to_string(),
            "wc_bits" => self.wc_bits.to_string(),
            "policy" => self.policy.to_string(),
            "lrw_evict" => self.lrw_evict.to_string(),
            "write_policy" => self.write_policy.to_string(),
            "dbt_enabled" => self.dbt_enabled.to_string(),
            "br_enabled" => self.br_enabled.to_string(),
            "br_backup" => self.br_backup.to_string(),
            "llc_volatile" => self.llc_volatile.to_string(),
            "strict_capacitor" => self.strict_capacitor.to_string(),
            "e_capacitor_nj" => self.e_capacitor_nj.to_string(),
            "e_reg_file_nj" => self.e_reg_file_nj.to_string(),
            "e_reg_restore_nj" => self.e_reg_restore_nj.to_string(),
            "mem_ops_per_instruction" => self.mem_ops_per_instruction.to_string(),
            _ => return None,
        })
    }

    /// Apply `key = value` lines on top of `self`. Blank lines and `#`
    /// comments are ignored. Does not validate.
    pub fn apply_kv(&mut self, text: &str) -> Result<(), ConfigError> {
        for (key, value) in parse_kv_lines(text)? {
            self.set(&key, &value)?;
        }
        Ok(())
    }

    /// Parse a configuration file over the defaults and validate it.
    pub fn from_kv(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_kv(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every key in canonical order, one `key = value` per line.
    pub fn to_kv(&self) -> String {
        let mut out = String::new();
        for key in CONFIG_KEYS {
            let _ = writeln!(out, "{key} = {}", self.get(key).unwrap_or_default());
        }
        out
    }
}

/// Split `key = value` text into pairs, keeping order. Shared with the sweep
/// spec reader.
pub fn parse_kv_lines(text: &str) -> Result<Vec<(String, String)>, ConfigError> {
    let mut pairs = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        };
        let key = key.trim();
        if key.is_empty() {
            return Err(ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            });
        }
        pairs.push((key.to_string(), value.trim().to_string()));
    }
    Ok(pairs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn size_suffixes() {
        for (text, want) in [("64", 64), ("32KB", 32 << 10), ("128K", 128 << 10), ("4mb", 4 << 20), ("1G", 1 << 30)] {
            assert_eq!(parse_size("k", text).unwrap(), want, "{text}");
        }
        assert!(parse_size("k", "12Q").is_err());
        assert!(parse_size("k", "KB").is_err());
    }

    #[test]
    fn derive_k_examples() {
        assert_eq!(derive_k(10.0, 10.0, 0.542).unwrap(), 0);
        assert_eq!(derive_k(18.672, 10.0, 0.542).unwrap(), 16);
        assert_eq!(derive_k(18.0, 10.0, 0.542).unwrap(), 14);
    }

    #[test]
    fn derive_k_rejects_small_capacitor() {
        assert!(matches!(
            derive_k(5.0, 10.0, 0.542),
            Err(ConfigError::CapacitorBelowRegisterFile { .. })
        ));
        assert!(derive_k(5.0, 1.0, 0.0).is_err());
    }

    #[test]
    fn capacitor_sized_for_k_round_trips() {
        for k in 0..=256u32 {
            let cap = capacitor_for_k(k, 0.542, 0.542);
            assert_eq!(derive_k(cap, 0.542, 0.542).unwrap(), u64::from(k), "k = {k}");
        }
    }

    #[test]
    fn full_l1_backup_energy() {
        let mut cfg = HierarchyConfig::default();
        assert!((backup_energy_full_l1(&cfg) - 138.752).abs() < 1e-9);
        cfg.l1_size_bytes = 32 * 1024;
        assert!((backup_energy_full_l1(&cfg) - 277.504).abs() < 1e-9);
        cfg.l1_size_bytes = cfg.block_size_bytes;
        assert_eq!(backup_energy_full_l1(&cfg), cfg.energies.llc_write_nj);
    }

    #[test]
    fn defaults_validate() {
        let cfg = HierarchyConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.affordable_blocks().unwrap(), 16);
        assert_eq!(cfg.lrw_bits(), 4);
        assert_eq!(cfg.backup_region_slots(), 17);
    }

    #[test]
    fn lrw_bits_is_ceil_log2() {
        let mut cfg = HierarchyConfig::default();
        for (m, bits) in [(1, 0), (2, 1), (3, 2), (4, 2), (5, 3), (12, 4), (16, 4), (17, 5)] {
            cfg.dbt_entries = m;
            assert_eq!(cfg.lrw_bits(), bits, "M = {m}");
        }
    }

    #[test]
    fn k_split_is_enforced() {
        let mut cfg = HierarchyConfig::default();
        cfg.dbt_entries = 20;
        let err = cfg.validate().unwrap_err();
        assert!(matches!(err, ConfigError::KSplit { k: 16, m: 20, n: 4 }));
        assert!(err.to_string().contains("K = M + N"));
    }

    #[test]
    fn capacitor_must_afford_k() {
        let mut cfg = HierarchyConfig::default();
        cfg.e_capacitor_nj -= 0.1;
        assert!(matches!(cfg.validate(), Err(ConfigError::CapacitorTooSmall { affordable: 15, .. })));
    }

    #[test]
    fn geometry_checks() {
        let mut cfg = HierarchyConfig::default();
        cfg.l1_size_bytes = 3000;
        assert!(matches!(cfg.validate(), Err(ConfigError::NotPowerOfTwo { .. })));
        let mut cfg = HierarchyConfig::default();
        cfg.l1_assoc = 3;
        assert!(matches!(cfg.validate(), Err(ConfigError::Associativity { .. })));
        let mut cfg = HierarchyConfig::default();
        cfg.wc_bits = 0;
        assert!(matches!(cfg.validate(), Err(ConfigError::WcBits(0))));
        cfg.policy = Policy::Lrw;
        cfg.validate().unwrap();
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = HierarchyConfig::default();
        cfg.policy = Policy::Lrw;
        cfg.l1_size_bytes = 32 * 1024;
        cfg.br_backup = BackupMode::DirtyOnly;
        let text = cfg.to_kv();
        let back = HierarchyConfig::from_kv(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(text.lines().count(), CONFIG_KEYS.len());
    }

    #[test]
    fn kv_parsing_errors() {
        let mut cfg = HierarchyConfig::default();
        assert!(matches!(cfg.apply_kv("bogus = 1"), Err(ConfigError::UnknownKey(_))));
        assert!(matches!(cfg.apply_kv("\n\nno equals here"), Err(ConfigError::Syntax { line: 3, .. })));
        assert!(matches!(cfg.apply_kv("policy = mru"), Err(ConfigError::InvalidValue { .. })));
        cfg.apply_kv("# comment\nl1_size_bytes = 32KB  # trailing\n").unwrap();
        assert_eq!(cfg.l1_size_bytes, 32768);
    }
}
