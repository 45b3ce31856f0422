use nvcache::config::{BackupMode, Policy};
use nvcache::synth::{Locality, SyntheticSpec};
use nvcache::trace::{self, TraceOptions};
use nvcache::{check_consistency, oracle_run, run_records, AccessKind, AccessRecord, BaselineId, HierarchyConfig, PowerSchedule};
use proptest::prelude::*;

fn small(mut cfg: HierarchyConfig) -> HierarchyConfig {
    cfg.l1_size_bytes = 1024;
    cfg.l1_assoc = 2;
    cfg.llc_size_bytes = 4096;
    cfg.llc_assoc = 4;
    cfg
}

fn arb_records() -> impl Strategy<Value = Vec<AccessRecord>> {
    prop::collection::vec((any::<bool>(), 0u64..8192, 1u64..4), 1..600).prop_map(|ops| {
        let mut instr = 0;
        ops.into_iter()
            .map(|(write, addr, gap)| {
                instr += gap;
                AccessRecord {
                    kind: if write { AccessKind::Write } else { AccessKind::Read },
                    address: addr & !3,
                    instr_index: instr,
                }
            })
            .collect()
    })
}

fn arb_config() -> impl Strategy<Value = HierarchyConfig> {
    (1u32..=8, 0u32..=8, any::<bool>(), any::<bool>(), 0usize..4).prop_map(|(m, n, lfw, br, base)| {
        let mut cfg = small(BaselineId::ALL[base].config());
        if cfg.dbt_enabled {
            cfg.dbt_entries = m;
            cfg.wbq_entries = n;
            cfg.k_max_dirty = m + n;
            cfg.policy = if lfw { Policy::Lfw } else { Policy::Lrw };
            cfg.br_enabled = br;
            cfg.size_capacitor_for_k();
        }
        cfg
    })
}

fn arb_points() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::btree_set(1u64..2000, 0..12).prop_map(|s| s.into_iter().collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn final_image_matches_oracle(records in arb_records(), cfg in arb_config(), points in arb_points()) {
        let sched = PowerSchedule::ExplicitList(points);
        let (_, image) = nvcache::engine::run_observed(records.iter().copied().map(Ok), &cfg, &sched, |sim| {
            assert!(sim.check_invariants().is_ok(), "{:?}", sim.check_invariants());
        }).unwrap();
        let report = check_consistency(&image, &oracle_run(&records));
        prop_assert!(report.pass, "diverged at {:?}", report.first_divergence);
    }

    #[test]
    fn energy_ledger_adds_up(records in arb_records(), cfg in arb_config(), points in arb_points()) {
        let r = run_records(&records, &cfg, &PowerSchedule::ExplicitList(points)).unwrap();
        let s = &r.stats;
        let backups: f64 = r.failures.iter().map(|f| f.backup_energy_nj).sum();
        let restores: f64 = r.failures.iter().map(|f| f.restore_energy_nj).sum();
        prop_assert!((backups - s.energy_backup_nj).abs() < 1e-6);
        prop_assert!((restores - s.energy_restore_nj).abs() < 1e-6);
        prop_assert!((s.total_energy_nj() - (s.energy_stable_nj + backups + restores)).abs() < 1e-6);
    }

    #[test]
    fn more_failures_never_cost_less_backup(records in arb_records(), points in arb_points(), extra in 1u64..2000) {
        let mut cfg = small(BaselineId::Proposed.config());
        cfg.br_backup = BackupMode::Fixed;
        let mut more = points.clone();
        if !more.contains(&extra) {
            more.push(extra);
            more.sort_unstable();
        }
        let a = run_records(&records, &cfg, &PowerSchedule::ExplicitList(points)).unwrap().stats;
        let b = run_records(&records, &cfg, &PowerSchedule::ExplicitList(more)).unwrap().stats;
        prop_assert!(b.energy_backup_nj + 1e-9 >= a.energy_backup_nj);
    }
}

#[test]
fn periodic_and_failure_free_runs_reach_the_same_image() {
    let records: Vec<AccessRecord> = SyntheticSpec {
        record_count: 30_000,
        locality: Locality::Zipf(1.0),
        working_set_bytes: 64 * 1024,
        seed: 12,
        ..SyntheticSpec::default()
    }
    .generate()
    .collect();
    let oracle = oracle_run(&records);
    for sched in [PowerSchedule::None, PowerSchedule::Periodic(2_000)] {
        let (r, image) = nvcache::engine::run_observed(records.iter().copied().map(Ok), &BaselineId::Proposed.config(), &sched, |_| {}).unwrap();
        assert!(check_consistency(&image, &oracle).pass, "{sched:?}");
        if sched != PowerSchedule::None {
            assert_eq!(r.stats.backups_performed, sched.failures_within(records.last().unwrap().instr_index));
        }
    }
}

#[test]
fn runs_are_deterministic() {
    let records: Vec<AccessRecord> = SyntheticSpec { record_count: 20_000, seed: 3, ..SyntheticSpec::default() }.generate().collect();
    let sched = PowerSchedule::for_failure_count(50, records.last().unwrap().instr_index).unwrap();
    let cfg = HierarchyConfig::default();
    let a = run_records(&records, &cfg, &sched).unwrap();
    let b = run_records(&records, &cfg, &sched).unwrap();
    assert_eq!(a.stats, b.stats);
    assert_eq!(a.failures, b.failures);
}

#[test]
fn text_and_binary_files_simulate_identically() {
    let dir = tempfile::tempdir().unwrap();
    let records: Vec<AccessRecord> = SyntheticSpec { record_count: 5_000, seed: 8, ..SyntheticSpec::default() }.generate().collect();
    let opts = TraceOptions { mem_size_bytes: Some(1 << 27), mem_ops_per_instruction: 0.4 };
    let mut loaded = Vec::new();
    for name in ["t.mtr", "t.mtb"] {
        let path = dir.path().join(name);
        trace::write_file(&path, &records).unwrap();
        let back = trace::read_all(&path, opts).unwrap();
        assert_eq!(back, records, "{name}");
        let streamed = nvcache::run(trace::open(&path, opts).unwrap(), &HierarchyConfig::default(), &PowerSchedule::Periodic(1_000)).unwrap();
        loaded.push(streamed.stats);
    }
    assert_eq!(loaded[0], loaded[1]);
}

#[test]
fn corrupt_binary_trace_is_rejected_with_record_index() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.mtb");
    let records: Vec<AccessRecord> = SyntheticSpec { record_count: 10, ..SyntheticSpec::default() }.generate().collect();
    trace::write_file(&path, &records).unwrap();
    let mut bytes = std::fs::read(&path).unwrap();
    let kind_byte = trace::HEADER_BYTES + 3 * trace::RECORD_BYTES;
    bytes[kind_byte] = 7;
    std::fs::write(&path, bytes).unwrap();
    let err = trace::read_all(&path, TraceOptions { mem_size_bytes: None, mem_ops_per_instruction: 0.4 }).unwrap_err();
    assert!(err.to_string().starts_with("record 3:"), "{err}");
}
