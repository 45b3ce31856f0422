//! Design-space sweeps: expand a spec into runs, execute them in parallel,
//! rank by a metric, and emit CSV.
//!
//! A spec file uses the config file syntax, with comma-separated lists:
//!
//! ```text
//! trace = pinned.mtr          # or gen.* keys for a synthetic trace
//! k = 16
//! mn = all                    # or 12:4, 8:8
//! policy = lfw, lrw
//! wc_bits = 6                 # forced to 0 for lrw
//! br_enabled = true, false
//! failures = 200, 500, 1000
//! metric = energy_total_nj
//! baseline = baseline-2       # energy gain reference
//! base = proposed             # architecture the runs start from
//! base.l1_size_bytes = 32KB   # overrides on that architecture
//! ```

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::baseline::BaselineId;
use crate::config::{parse_kv_lines, ConfigError, HierarchyConfig, Policy};
use crate::engine::{run_records, PowerSchedule, SimError};
use crate::stats::SimStats;
use crate::synth::SyntheticSpec;
use crate::trace::TraceError;
use crate::types::AccessRecord;

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("sweep spec: {0}")]
    Spec(String),
    #[error("the sweep expands to no valid runs ({filtered} combinations filtered out)")]
    Empty { filtered: usize },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("run {label}: {source}")]
    Sim { label: String, source: SimError },
    #[error(transparent)]
    Trace(#[from] TraceError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub enum MnChoice {
    /// Every split M = 1..=K, N = K - M.
    All,
    Pairs(Vec<(u32, u32)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceSource {
    File(PathBuf),
    Synthetic(SyntheticSpec),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: BaselineId,
    pub overrides: Vec<(String, String)>,
    pub ks: Vec<u32>,
    pub mn: MnChoice,
    pub wc_bits: Vec<u32>,
    pub policies: Vec<Policy>,
    pub br: Vec<bool>,
    pub failures: Vec<u64>,
    pub metric: String,
    pub baseline: BaselineId,
    pub trace: Option<TraceSource>,
}

impl Default for SweepSpec {
    fn default() -> Self {
        Self {
            base: BaselineId::Proposed,
            overrides: Vec::new(),
            ks: vec![16],
            mn: MnChoice::All,
            wc_bits: vec![6],
            policies: vec![Policy::Lfw, Policy::Lrw],
            br: vec![true, false],
            failures: vec![200, 500, 1000],
            metric: "energy_total_nj".into(),
            baseline: BaselineId::Baseline2,
            trace: None,
        }
    }
}

fn list<T>(key: &str, value: &str, parse: impl Fn(&str) -> Option<T>) -> Result<Vec<T>, SweepError> {
    let items: Option<Vec<T>> = value.split(',').map(|v| parse(v.trim())).collect();
    match items {
        Some(v) if !v.is_empty() => Ok(v),
        _ => Err(SweepError::Spec(format!("bad list for {key}: {value:?}"))),
    }
}

fn parse_bool(v: &str) -> Option<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "on" | "yes" | "1" => Some(true),
        "false" | "off" | "no" | "0" => Some(false),
        _ => None,
    }
}

impl SweepSpec {
    /// Parse spec text; a relative `trace` path resolves against `dir`.
    pub fn parse(text: &str, dir: &Path) -> Result<Self, SweepError> {
        let mut spec = SweepSpec::default();
        let mut synth: Option<SyntheticSpec> = None;
        for (key, value) in parse_kv_lines(text)? {
            let v = value.as_str();
            match key.as_str() {
                "trace" => spec.trace = Some(TraceSource::File(dir.join(v))),
                "k" | "k_max_dirty" => spec.ks = list(&key, v, |s| s.parse().ok())?,
                "mn" => {
                    spec.mn = if v.eq_ignore_ascii_case("all") {
                        MnChoice::All
                    } else {
                        MnChoice::Pairs(list(&key, v, |s| {
                            let (m, n) = s.split_once(':')?;
                            Some((m.trim().parse().ok()?, n.trim().parse().ok()?))
                        })?)
                    }
                }
                "wc_bits" => spec.wc_bits = list(&key, v, |s| s.parse().ok())?,
                "policy" => spec.policies = list(&key, v, |s| s.parse().ok())?,
                "br_enabled" | "br" => spec.br = list(&key, v, parse_bool)?,
                "failures" => spec.failures = list(&key, v, |s| s.parse().ok())?,
                "metric" => {
                    if !SimStats::FIELDS.contains(&v) {
                        return Err(SweepError::Spec(format!("unknown metric {v:?}")));
                    }
                    spec.metric = v.to_string();
                }
                "baseline" => spec.baseline = v.parse().map_err(SweepError::Spec)?,
                "base" => spec.base = v.parse().map_err(SweepError::Spec)?,
                k if k.starts_with("base.") => spec.overrides.push((k["base.".len()..].to_string(), value.clone())),
                k if k.starts_with("gen.") => synth
                    .get_or_insert_with(SyntheticSpec::default)
                    .set(&k["gen.".len()..], v)
                    .map_err(SweepError::Spec)?,
                other => return Err(SweepError::Spec(format!("unknown key {other:?}"))),
            }
        }
        if let Some(s) = synth {
            if spec.trace.is_some() {
                return Err(SweepError::Spec("give either trace or gen.* keys, not both".into()));
            }
            spec.trace = Some(TraceSource::Synthetic(s));
        }
        spec.base_config()?;
        Ok(spec)
    }

    /// The starting architecture with overrides applied (not validated).
    pub fn base_config(&self) -> Result<HierarchyConfig, ConfigError> {
        let mut c = self.base.config();
        for (k, v) in &self.overrides {
            c.set(k, v)?;
        }
        Ok(c)
    }

    /// Load or generate the trace.
    pub fn load_trace(&self, base: &HierarchyConfig) -> Result<Vec<AccessRecord>, SweepError> {
        match &self.trace {
            None => Err(SweepError::Spec("no trace given (trace = <file> or gen.* keys)".into())),
            Some(TraceSource::File(path)) => Ok(crate::trace::read_all(
                path,
                crate::trace::TraceOptions {
                    mem_size_bytes: Some(base.mem_size_bytes),
                    mem_ops_per_instruction: base.mem_ops_per_instruction,
                },
            )?),
            Some(TraceSource::Synthetic(s)) => {
                s.validate(base.mem_size_bytes).map_err(SweepError::Spec)?;
                Ok(s.generate().collect())
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRun {
    pub label: String,
    pub config: HierarchyConfig,
    pub failures: u64,
    /// SHA-256 of the canonical config text plus the failure count.
    pub hash: [u8; 32],
}

impl SweepRun {
    fn new(config: HierarchyConfig, failures: u64) -> Self {
        let label = format!(
            "k{}-m{}-n{}-{}-wc{}-{}-f{}",
            config.k_max_dirty,
            config.dbt_entries,
            config.wbq_entries,
            config.policy,
            config.wc_bits,
            if config.br_enabled { "br" } else { "nobr" },
            failures
        );
        let mut h = Sha256::new();
        h.update(config.to_kv().as_bytes());
        h.update(format!("failures = {failures}\n").as_bytes());
        Self {
            label,
            config,
            failures,
            hash: h.finalize().into(),
        }
    }

    pub fn hash_hex(&self) -> String {
        self.hash[..8].iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredCombo {
    pub k: u32,
    pub m: u32,
    pub n: u32,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Expansion {
    pub runs: Vec<SweepRun>,
    pub filtered: Vec<FilteredCombo>,
}

/// Cartesian product of the spec's dimensions, dropping combinations that
/// do not form a valid configuration.
pub fn expand(spec: &SweepSpec) -> Result<Expansion, SweepError> {
    let base = spec.base_config()?;
    let mut runs = Vec::new();
    let mut filtered = Vec::new();
    for &k in &spec.ks {
        let pairs = match &spec.mn {
            MnChoice::All => (1..=k).map(|m| (m, k - m)).collect(),
            MnChoice::Pairs(p) => p.clone(),
        };
        for (m, n) in pairs {
            if m + n != k {
                filtered.push(FilteredCombo {
                    k,
                    m,
                    n,
                    reason: format!("M + N = {} but K = {k}", m + n),
                });
                continue;
            }
            for &policy in &spec.policies {
                let mut wcs: Vec<u32> = match policy {
                    Policy::Lfw => spec.wc_bits.clone(),
                    Policy::Lrw => vec![0],
                };
                wcs.dedup();
                for wc in wcs {
                    for &br in &spec.br {
                        let mut c = base.clone();
                        c.k_max_dirty = k;
                        c.dbt_entries = m;
                        c.wbq_entries = n;
                        c.policy = policy;
                        c.wc_bits = wc;
                        c.dbt_enabled = true;
                        c.br_enabled = br;
                        c.size_capacitor_for_k();
                        if let Err(e) = c.validate() {
                            filtered.push(FilteredCombo {
                                k,
                                m,
                                n,
                                reason: e.to_string(),
                            });
                            continue;
                        }
                        for &f in &spec.failures {
                            runs.push(SweepRun::new(c.clone(), f));
                        }
                    }
                }
            }
        }
    }
    if runs.is_empty() {
        return Err(SweepError::Empty {
            filtered: filtered.len(),
        });
    }
    Ok(Expansion { runs, filtered })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub rank: usize,
    pub run: SweepRun,
    pub stats: SimStats,
    pub metric_value: f64,
    /// Energy saved relative to the paired baseline run, in percent.
    pub gain_pct: f64,
}

pub fn energy_gain_pct(baseline_nj: f64, config_nj: f64) -> f64 {
    if baseline_nj == 0.0 {
        0.0
    } else {
        (baseline_nj - config_nj) / baseline_nj * 100.0
    }
}

fn schedule(failures: u64, records: &[AccessRecord]) -> Result<PowerSchedule, SimError> {
    let last = records.last().map_or(0, |r| r.instr_index);
    PowerSchedule::for_failure_count(failures, last)
}

/// Run every expanded configuration and its paired baseline, then rank.
pub fn execute(
    runs: &[SweepRun],
    records: &[AccessRecord],
    baseline: BaselineId,
    metric: &str,
) -> Result<Vec<SweepRow>, SweepError> {
    let mut counts: Vec<u64> = runs.iter().map(|r| r.failures).collect();
    counts.sort_unstable();
    counts.dedup();
    let base_cfg = baseline.config();
    let base_energy: BTreeMap<u64, f64> = counts
        .par_iter()
        .map(|&f| {
            let label = format!("{baseline}-f{f}");
            let sched = schedule(f, records).map_err(|source| SweepError::Sim { label: label.clone(), source })?;
            let r = run_records(records, &base_cfg, &sched).map_err(|source| SweepError::Sim { label, source })?;
            Ok((f, r.stats.total_energy_nj()))
        })
        .collect::<Result<_, SweepError>>()?;

    let mut rows = runs
        .par_iter()
        .map(|run| {
            let wrap = |source| SweepError::Sim {
                label: run.label.clone(),
                source,
            };
            let sched = schedule(run.failures, records).map_err(wrap)?;
            let stats = run_records(records, &run.config, &sched).map_err(wrap)?.stats;
            Ok(SweepRow {
                rank: 0,
                metric_value: stats.get(metric).ok_or_else(|| SweepError::Spec(format!("unknown metric {metric:?}")))?,
                gain_pct: energy_gain_pct(base_energy[&run.failures], stats.total_energy_nj()),
                run: run.clone(),
                stats,
            })
        })
        .collect::<Result<Vec<_>, SweepError>>()?;
    rank(&mut rows);
    Ok(rows)
}

/// Order by metric (lower is better), ties by config hash; assign ranks.
pub fn rank(rows: &mut [SweepRow]) {
    rows.sort_by(|a, b| a.metric_value.total_cmp(&b.metric_value).then_with(|| a.run.hash.cmp(&b.run.hash)));
    for (i, row) in rows.iter_mut().enumerate() {
        row.rank = i + 1;
    }
}

pub const CONFIG_COLUMNS: [&str; 10] = [
    "rank",
    "label",
    "k",
    "m",
    "n",
    "policy",
    "wc_bits",
    "br_enabled",
    "failures",
    "config_hash",
];

pub fn write_csv<W: Write>(out: W, rows: &[SweepRow]) -> Result<(), SweepError> {
    let mut w = csv::Writer::from_writer(out);
    let header: Vec<&str> = CONFIG_COLUMNS
        .iter()
        .copied()
        .chain(SimStats::FIELDS.iter().copied())
        .chain(["energy_gain_pct"])
        .collect();
    w.write_record(&header)?;
    for row in rows {
        let c = &row.run.config;
        let mut rec = vec![
            row.rank.to_string(),
            row.run.label.clone(),
            c.k_max_dirty.to_string(),
            c.dbt_entries.to_string(),
            c.wbq_entries.to_string(),
            c.policy.to_string(),
            c.wc_bits.to_string(),
            c.br_enabled.to_string(),
            row.run.failures.to_string(),
            row.run.hash_hex(),
        ];
        rec.extend(row.stats.values());
        rec.push(format!("{:.6}", row.gain_pct));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::Locality;

    fn spec(text: &str) -> SweepSpec {
        SweepSpec::parse(text, Path::new(".")).unwrap()
    }

    #[test]
    fn small_product_counts() {
        let s = spec("k = 16\nmn = 12:4\npolicy = lfw, lrw\nbr_enabled = on, off\nfailures = 200\n");
        let e = expand(&s).unwrap();
        assert_eq!(e.runs.len(), 4);
        assert!(e.filtered.is_empty());
    }

    #[test]
    fn all_splits_for_k16() {
        let e = expand(&spec("k = 16\nmn = all\n")).unwrap();
        assert_eq!(e.runs.len(), 16 * 2 * 2 * 3);
        assert!(e.runs.iter().all(|r| r.config.dbt_entries + r.config.wbq_entries == 16));
        assert!(e.runs.iter().filter(|r| r.config.policy == Policy::Lrw).all(|r| r.config.wc_bits == 0));
    }

    #[test]
    fn mismatched_split_is_filtered_and_reported() {
        let e = expand(&spec("k = 16\nmn = 12:4, 20:4\nfailures = 200\n")).unwrap();
        assert_eq!(e.runs.len(), 4);
        assert_eq!(e.filtered.len(), 1);
        assert_eq!((e.filtered[0].m, e.filtered[0].n), (20, 4));
    }

    #[test]
    fn empty_product_errors() {
        assert!(matches!(expand(&spec("k = 16\nmn = 20:4\n")), Err(SweepError::Empty { filtered: 1 })));
    }

    #[test]
    fn lrw_wc_dedup() {
        let e = expand(&spec("k = 4\nmn = 2:2\nwc_bits = 3, 5, 6\npolicy = lfw, lrw\nbr = on\nfailures = 1\n")).unwrap();
        assert_eq!(e.runs.len(), 3 + 1);
    }

    #[test]
    fn capacitor_follows_k() {
        let e = expand(&spec("k = 4, 8\nfailures = 1\nbr = on\npolicy = lfw\n")).unwrap();
        for r in &e.runs {
            assert_eq!(r.config.affordable_blocks().unwrap(), u64::from(r.config.k_max_dirty));
        }
    }

    #[test]
    fn bad_spec_keys() {
        for text in ["colour = red\n", "metric = speed\n", "policy = lfw, mru\n", "mn = 3-4\n", "base.l1_assoc = x\n"] {
            assert!(SweepSpec::parse(text, Path::new(".")).is_err(), "{text}");
        }
        assert!(SweepSpec::parse("trace = a.mtr\ngen.seed = 3\n", Path::new(".")).is_err());
    }

    #[test]
    fn gain_orientation() {
        assert_eq!(energy_gain_pct(200.0, 150.0), 25.0);
        assert!(energy_gain_pct(100.0, 120.0) < 0.0);
    }

    fn rows_for(text: &str) -> Vec<SweepRow> {
        let s = spec(text);
        let recs = s.load_trace(&s.base_config().unwrap()).unwrap();
        execute(&expand(&s).unwrap().runs, &recs, s.baseline, &s.metric).unwrap()
    }

    #[test]
    fn ranking_is_sorted_and_stable() {
        let text = "k = 8\nmn = 6:2, 4:4\nfailures = 5, 10\ngen.records = 4000\ngen.locality = zipf:0.9\ngen.seed = 4\n";
        let a = rows_for(text);
        let b = rows_for(text);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0].metric_value <= w[1].metric_value));
        assert_eq!(a.iter().map(|r| r.rank).collect::<Vec<_>>(), (1..=a.len()).collect::<Vec<_>>());
        let mut csv_a = Vec::new();
        write_csv(&mut csv_a, &a).unwrap();
        let mut csv_b = Vec::new();
        write_csv(&mut csv_b, &b).unwrap();
        assert_eq!(csv_a, csv_b);
        assert_eq!(String::from_utf8(csv_a).unwrap().lines().count(), a.len() + 1);
    }

    #[test]
    fn identical_configs_order_by_hash() {
        let run = SweepRun::new(HierarchyConfig::default(), 3);
        let other = SweepRun::new(HierarchyConfig::default(), 4);
        let row = |run: &SweepRun| SweepRow {
            rank: 0,
            run: run.clone(),
            stats: SimStats::default(),
            metric_value: 1.0,
            gain_pct: 0.0,
        };
        let mut rows = vec![row(&run), row(&other)];
        rank(&mut rows);
        let mut flipped = vec![row(&other), row(&run)];
        rank(&mut flipped);
        assert_eq!(rows, flipped);
    }

    #[test]
    fn single_result_ranks_first() {
        let rows = rows_for("k = 4\nmn = 2:2\npolicy = lfw\nbr = on\nfailures = 3\ngen.records = 2000\n");
        assert_eq!(rows.len(), 1);
        assert_eq!(rows[0].rank, 1);
        assert!(rows[0].gain_pct.is_finite());
    }

    #[test]
    fn synthetic_trace_section() {
        let s = spec("gen.records = 10\ngen.locality = strided:64\n");
        match s.trace {
            Some(TraceSource::Synthetic(ref g)) => {
                assert_eq!(g.record_count, 10);
                assert_eq!(g.locality, Locality::Strided(64));
            }
            ref other => panic!("{other:?}"),
        }
    }
}
