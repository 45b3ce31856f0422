//! Per-level access counters and the dynamic energy ledger.

/// Which ledger bucket energy is charged to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Phase {
    #[default]
    Stable,
    Backup,
    Restore,
}

/// Counters for one simulation run. All fields only ever grow.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimStats {
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
    /// Cycles the core spent waiting on LLC writes.
    pub stall_cycles: u64,
    pub backup_cycles: u64,
    pub restore_cycles: u64,
    /// Execution time in cycles, including stalls, backups and restores.
    pub total_cycles: u64,
    pub energy_stable_nj: f64,
    pub energy_backup_nj: f64,
    pub energy_restore_nj: f64,
    pub backups_performed: u64,
    pub blocks_backed_up: u64,
    pub max_dirty_blocks: u64,
}

impl SimStats {
    pub fn total_energy_nj(&self) -> f64 {
        self.energy_stable_nj + self.energy_backup_nj + self.energy_restore_nj
    }

    /// Column names matching [`SimStats::values`].
    pub const FIELDS: &'static [&'static str] = &[
        "accesses",
        "l1_reads",
        "l1_writes",
        "l1_hits",
        "l1_misses",
        "l1_fills",
        "llc_reads",
        "llc_writes",
        "llc_hits",
        "llc_misses",
        "pcm_reads",
        "pcm_writes",
        "br_reads",
        "br_writes",
        "wbq_forwards",
        "dbt_evictions",
        "stall_cycles",
        "backup_cycles",
        "restore_cycles",
        "total_cycles",
        "energy_stable_nj",
        "energy_backup_nj",
        "energy_restore_nj",
        "energy_total_nj",
        "backups_performed",
        "blocks_backed_up",
        "max_dirty_blocks",
    ];

    /// Field values as text, floats at fixed precision so CSV output is
    /// byte-stable.
    pub fn values(&self) -> Vec<String> {
        let ints = |v: u64| v.to_string();
        let nj = |v: f64| format!("{v:.6}");
        vec![
            ints(self.accesses),
            ints(self.l1_reads),
            ints(self.l1_writes),
            ints(self.l1_hits),
            ints(self.l1_misses),
            ints(self.l1_fills),
            ints(self.llc_reads),
            ints(self.llc_writes),
            ints(self.llc_hits),
            ints(self.llc_misses),
            ints(self.pcm_reads),
            ints(self.pcm_writes),
            ints(self.br_reads),
            ints(self.br_writes),
            ints(self.wbq_forwards),
            ints(self.dbt_evictions),
            ints(self.stall_cycles),
            ints(self.backup_cycles),
            ints(self.restore_cycles),
            ints(self.total_cycles),
            nj(self.energy_stable_nj),
            nj(self.energy_backup_nj),
            nj(self.energy_restore_nj),
            nj(self.total_energy_nj()),
            ints(self.backups_performed),
            ints(self.blocks_backed_up),
            ints(self.max_dirty_blocks),
        ]
    }
}

impl SimStats {
    /// Field values as numbers, in [`SimStats::FIELDS`] order.
    pub fn numeric(&self) -> Vec<f64> {
        [
            self.accesses,
            self.l1_reads,
            self.l1_writes,
            self.l1_hits,
            self.l1_misses,
            self.l1_fills,
            self.llc_reads,
            self.llc_writes,
            self.llc_hits,
            self.llc_misses,
            self.pcm_reads,
            self.pcm_writes,
            self.br_reads,
            self.br_writes,
            self.wbq_forwards,
            self.dbt_evictions,
            self.stall_cycles,
            self.backup_cycles,
            self.restore_cycles,
            self.total_cycles,
        ]
        .iter()
        .map(|&v| v as f64)
        .chain([
            self.energy_stable_nj,
            self.energy_backup_nj,
            self.energy_restore_nj,
            self.total_energy_nj(),
        ])
        .chain([self.backups_performed, self.blocks_backed_up, self.max_dirty_blocks].iter().map(|&v| v as f64))
        .collect()
    }

    /// One field by column name.
    pub fn get(&self, name: &str) -> Option<f64> {
        let i = Self::FIELDS.iter().position(|f| *f == name)?;
        Some(self.numeric()[i])
    }
}

/// Stats plus the phase that energy charges currently go to.
#[derive(Debug, Clone, Default)]
pub struct Meter {
    pub stats: SimStats,
    phase: Phase,
}

impl Meter {
    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn set_phase(&mut self, phase: Phase) {
        self.phase = phase;
    }

    pub fn charge(&mut self, nj: f64) {
        match self.phase {
            Phase::Stable => self.stats.energy_stable_nj += nj,
            Phase::Backup => self.stats.energy_backup_nj += nj,
            Phase::Restore => self.stats.energy_restore_nj += nj,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ledger_is_additive() {
        let mut m = Meter::default();
        m.charge(1.0);
        m.set_phase(Phase::Backup);
        m.charge(2.0);
        m.set_phase(Phase::Restore);
        m.charge(0.5);
        assert_eq!(m.stats.energy_stable_nj, 1.0);
        assert_eq!(m.stats.energy_backup_nj, 2.0);
        assert_eq!(m.stats.energy_restore_nj, 0.5);
        assert_eq!(m.stats.total_energy_nj(), 3.5);
    }

    #[test]
    fn fields_and_values_align() {
        assert_eq!(SimStats::FIELDS.len(), SimStats::default().values().len());
        assert_eq!(SimStats::FIELDS.len(), SimStats::default().numeric().len());
    }

    #[test]
    fn get_by_name_matches_text() {
        let s = SimStats {
            llc_writes: 7,
            energy_backup_nj: 1.25,
            max_dirty_blocks: 3,
            ..Default::default()
        };
        assert_eq!(s.get("llc_writes"), Some(7.0));
        assert_eq!(s.get("energy_total_nj"), Some(1.25));
        assert_eq!(s.get("max_dirty_blocks"), Some(3.0));
        assert_eq!(s.get("nope"), None);
        for (name, text) in SimStats::FIELDS.iter().zip(s.values()) {
            assert_eq!(s.get(name).unwrap(), text.parse::<f64>().unwrap(), "{name}");
        }
    }
}
