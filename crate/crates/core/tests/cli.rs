use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn nvcache() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_nvcache"));
    for (key, _) in std::env::vars() {
        if key.starts_with("SIM_") {
            cmd.env_remove(key);
        }
    }
    cmd
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn gen_trace(dir: &Path, name: &str, records: u32) -> PathBuf {
    let path = dir.join(name);
    let out = nvcache()
        .args(["gen", "--records", &records.to_string(), "--seed", "9", "--working-set", "128K", "--out"])
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    path
}

#[test]
fn run_writes_csv_and_summary_with_config_header() {
    let dir = tempfile::tempdir().unwrap();
    let trace = gen_trace(dir.path(), "t.mtr", 20_000);
    let csv = dir.path().join("out.csv");
    let summary = dir.path().join("summary.txt");
    let out = nvcache()
        .arg("run")
        .arg("--config")
        .arg(configs().join("paper-default"))
        .arg("--trace")
        .arg(&trace)
        .args(["--failures-every", "2000", "--out"])
        .arg(&csv)
        .arg("--summary")
        .arg(&summary)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("label,accesses,"));
    assert!(lines.next().unwrap().starts_with("run,20000,"));
    let summary = fs::read_to_string(&summary).unwrap();
    assert!(summary.contains("#   sttram_write_cycles = 10"));
    assert!(summary.contains("power schedule: every 2000 instructions"));
}

#[test]
fn identical_invocations_give_identical_csv() {
    let dir = tempfile::tempdir().unwrap();
    let trace = gen_trace(dir.path(), "t.mtb", 10_000);
    let run = |name: &str| {
        let csv = dir.path().join(name);
        let out = nvcache()
            .args(["run", "--arch", "baseline-2,proposed", "--failures", "20", "--trace"])
            .arg(&trace)
            .arg("--out")
            .arg(&csv)
            .output()
            .unwrap();
        assert_eq!(code(&out), 0, "{}", stderr(&out));
        fs::read(csv).unwrap()
    };
    assert_eq!(run("a.csv"), run("b.csv"));
}

#[test]
fn bad_split_exits_2_naming_the_constraint() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.cfg");
    fs::write(&bad, "k_max_dirty = 16\ndbt_entries = 10\nwbq_entries = 4\n").unwrap();
    let out = nvcache().arg("validate").arg("--config").arg(&bad).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("K = M + N"), "{}", stderr(&out));
}

#[test]
fn unknown_flag_exits_2() {
    let out = nvcache().args(["run", "--no-such-flag"]).output().unwrap();
    assert_eq!(code(&out), 2);
}

#[test]
fn missing_trace_exits_2_before_running() {
    let out = nvcache().args(["run", "--trace", "/nonexistent/t.mtr"]).output().unwrap();
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("does not exist"));
}

#[test]
fn unsafe_backup_exits_3_with_failure_index() {
    let dir = tempfile::tempdir().unwrap();
    let trace = gen_trace(dir.path(), "t.mtr", 20_000);
    let out = nvcache()
        .args(["run", "--arch", "baseline-2", "--strict-capacitor", "true", "--failures", "5", "--trace"])
        .arg(&trace)
        .arg("--out")
        .arg(dir.path().join("x.csv"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 3, "{}", stderr(&out));
    assert!(stderr(&out).contains("unsafe backup at failure 0"), "{}", stderr(&out));
}

#[test]
fn precedence_is_file_then_env_then_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.cfg");
    fs::write(&cfg, "dbt_entries = 8\nwbq_entries = 8\nwc_bits = 4\n").unwrap();
    let out = nvcache()
        .arg("validate")
        .arg("--config")
        .arg(&cfg)
        .env("SIM_WC_BITS", "5")
        .env("SIM_DBT_ENTRIES", "10")
        .env("SIM_WBQ_ENTRIES", "6")
        .args(["--dbt-entries", "11", "--wbq-entries", "5"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("wc_bits = 5\n"));
    assert!(text.contains("dbt_entries = 11\n"));
    assert!(text.contains("wbq_entries = 5\n"));
}

#[test]
fn report_writes_three_svgs() {
    let dir = tempfile::tempdir().unwrap();
    let trace = gen_trace(dir.path(), "t.mtr", 5_000);
    let csv = dir.path().join("results.csv");
    let out = nvcache()
        .args(["run", "--arch", "baseline-1,baseline-2,baseline-3,proposed", "--trace"])
        .arg(&trace)
        .arg("--out")
        .arg(&csv)
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let plots = dir.path().join("plots");
    let out = nvcache()
        .arg("report")
        .arg(&csv)
        .arg("--out")
        .arg(&plots)
        .args(["--baseline", "baseline-1"])
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    for f in ["writes.svg", "energy.svg", "cycles.svg"] {
        let svg = fs::read_to_string(plots.join(f)).unwrap();
        assert!(svg.contains("normalized to baseline-1"), "{f}");
    }
}

#[test]
fn sweep_ranks_and_reports_filtered_pairs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.sweep");
    fs::write(
        &spec,
        "k = 16\nmn = 12:4, 20:4\npolicy = lfw, lrw\nbr = on, off\nfailures = 200\ngen.records = 5000\n",
    )
    .unwrap();
    let csv = dir.path().join("s.csv");
    let out = nvcache().arg("sweep").arg("--spec").arg(&spec).arg("--out").arg(&csv).output().unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let text = fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
    assert!(stderr(&out).contains("1 combinations filtered out"), "{}", stderr(&out));
    assert!(stderr(&out).contains("M=20 N=4"));
}
