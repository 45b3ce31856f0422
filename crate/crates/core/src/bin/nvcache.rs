use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Arg, ArgMatches, Command};

use nvcache::config::{ConfigError, CONFIG_KEYS};
use nvcache::engine::{run, run_records, PowerSchedule, RunResult, SimError};
use nvcache::report::{write_report, ResultTable};
use nvcache::sweep::{self, SweepSpec};
use nvcache::synth::SyntheticSpec;
use nvcache::trace::{self, TraceOptions};
use nvcache::{BaselineId, HierarchyConfig, SimStats};

/// Failure classes that map to distinct exit codes.
#[derive(Debug)]
enum Usage {
    Invalid(String),
}

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Usage::Invalid(msg) => f.write_str(msg),
        }
    }
}

impl std::error::Error for Usage {}

fn kebab(key: &str) -> String {
    key.replace('_', "-")
}

fn config_args() -> Vec<Arg> {
    CONFIG_KEYS
        .iter()
        .map(|key| {
            Arg::new(*key)
                .long(kebab(key))
                .value_name("VALUE")
                .help_heading("Configuration overrides")
                .hide_short_help(true)
        })
        .collect()
}

fn cli() -> Command {
    let config = Arg::new("config").long("config").short('c').value_name("FILE").help("Configuration file (key = value)");
    Command::new("nvcache")
        .about("Simulate an intermittently powered SRAM/STT-RAM/PCM memory hierarchy")
        .version(env!("CARGO_PKG_VERSION"))
        .subcommand_required(true)
        .arg_required_else_help(true)
        .subcommand(
            Command::new("run")
                .about("Simulate one trace")
                .arg(config.clone().conflicts_with("arch"))
                .arg(Arg::new("trace").long("trace").short('t').value_name("FILE").required(true).help("Trace file (.mtr text or .mtb binary)"))
                .arg(
                    Arg::new("arch")
                        .long("arch")
                        .value_name("LIST")
                        .value_delimiter(',')
                        .help("Run canned architectures instead of a config file: baseline-1, baseline-2, baseline-3, proposed"),
                )
                .arg(Arg::new("failures-every").long("failures-every").value_name("INSTRUCTIONS").value_parser(clap::value_parser!(u64)).help("Power fails at every multiple of this many instructions"))
                .arg(Arg::new("failures").long("failures").value_name("COUNT").value_parser(clap::value_parser!(u64)).help("Evenly spaced failure count over the trace"))
                .arg(Arg::new("failure-at").long("failure-at").value_name("LIST").value_delimiter(',').value_parser(clap::value_parser!(u64)).help("Explicit failure instruction indices"))
                .arg(Arg::new("out").long("out").short('o').value_name("CSV").help("Stats CSV destination (default: stdout)"))
                .arg(Arg::new("summary").long("summary").value_name("FILE").help("Human summary destination (default: stderr)"))
                .group(clap::ArgGroup::new("schedule").args(["failures-every", "failures", "failure-at"]).multiple(false))
                .args(config_args()),
        )
        .subcommand(
            Command::new("sweep")
                .about("Run a design-space sweep and rank the results")
                .arg(Arg::new("spec").long("spec").short('s').value_name("FILE").required(true).help("Sweep spec file"))
                .arg(Arg::new("out").long("out").short('o').value_name("CSV").required(true).help("Ranked results CSV"))
                .arg(Arg::new("jobs").long("jobs").short('j').value_name("N").value_parser(clap::value_parser!(usize)).help("Worker threads (default: all cores)")),
        )
        .subcommand(
            Command::new("gen")
                .about("Generate a synthetic trace")
                .arg(Arg::new("out").long("out").short('o').value_name("FILE").required(true).help("Output trace; .mtb for binary, otherwise text"))
                .arg(Arg::new("records").long("records").value_name("N"))
                .arg(Arg::new("write-fraction").long("write-fraction").value_name("F"))
                .arg(Arg::new("working-set").long("working-set").value_name("BYTES"))
                .arg(Arg::new("locality").long("locality").value_name("KIND").help("uniform, zipf:S, strided:BYTES, loopnest:AxBxC"))
                .arg(Arg::new("seed").long("seed").value_name("N"))
                .arg(Arg::new("base").long("base").value_name("HEX").help("First address of the working set"))
                .arg(Arg::new("mem-ops-per-instruction").long("mem-ops-per-instruction").value_name("R")),
        )
        .subcommand(
            Command::new("report")
                .about("Render SVG charts from a results CSV")
                .arg(Arg::new("csv").value_name("CSV").required(true))
                .arg(Arg::new("out").long("out").short('o').value_name("DIR").required(true))
                .arg(Arg::new("baseline").long("baseline").value_name("LABEL").help("Row to normalize against (default: first row)")),
        )
        .subcommand(Command::new("validate").about("Check a configuration and print it in canonical form").arg(config).args(config_args()))
}

fn main() -> ExitCode {
    let matches = match cli().try_get_matches() {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match dispatch(&matches) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(SimError::UnsafeBackup { .. }) = cause.downcast_ref::<SimError>() {
            return 3;
        }
        if cause.downcast_ref::<ConfigError>().is_some() || cause.downcast_ref::<Usage>().is_some() {
            return 2;
        }
        if let Some(SimError::Config(_) | SimError::Schedule(_)) = cause.downcast_ref::<SimError>() {
            return 2;
        }
    }
    1
}

fn dispatch(m: &ArgMatches) -> Result<()> {
    match m.subcommand() {
        Some(("run", sub)) => cmd_run(sub),
        Some(("sweep", sub)) => cmd_sweep(sub),
        Some(("gen", sub)) => cmd_gen(sub),
        Some(("report", sub)) => cmd_report(sub),
        Some(("validate", sub)) => cmd_validate(sub),
        _ => unreachable!("subcommand required"),
    }
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!(Usage::Invalid(format!("{} does not exist or is not a file", path.display())));
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    match path.parent() {
        Some(dir) if !dir.as_os_str().is_empty() && !dir.is_dir() => {
            bail!(Usage::Invalid(format!("output directory {} does not exist", dir.display())))
        }
        _ => Ok(()),
    }
}

/// Layer a config: `base`, then the file, then `SIM_<KEY>` variables, then
/// flags. Validates the result.
fn layered_config(m: &ArgMatches, base: HierarchyConfig) -> Result<HierarchyConfig> {
    let mut cfg = base;
    if let Some(path) = m.get_one::<String>("config") {
        let path = Path::new(path);
        check_input(path)?;
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        cfg.apply_kv(&text).with_context(|| format!("in {}", path.display()))?;
    }
    for key in CONFIG_KEYS {
        let var = format!("SIM_{}", key.to_ascii_uppercase());
        if let Ok(value) = std::env::var(&var) {
            cfg.set(key, &value).with_context(|| format!("from environment variable {var}"))?;
        }
    }
    for key in CONFIG_KEYS {
        if let Some(value) = m.get_one::<String>(key) {
            cfg.set(key, value).with_context(|| format!("from flag --{}", kebab(key)))?;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

fn cmd_validate(m: &ArgMatches) -> Result<()> {
    let cfg = layered_config(m, HierarchyConfig::default())?;
    print!("{}", cfg.to_kv());
    let k = cfg.affordable_blocks()?;
    println!("# valid; the capacitor affords {k} blocks, K = {}", cfg.k_max_dirty);
    Ok(())
}

fn schedule_from(m: &ArgMatches, last_instr: impl FnOnce() -> Result<u64>) -> Result<PowerSchedule> {
    let sched = if let Some(&every) = m.get_one::<u64>("failures-every") {
        PowerSchedule::Periodic(every)
    } else if let Some(&count) = m.get_one::<u64>("failures") {
        PowerSchedule::for_failure_count(count, last_instr()?)?
    } else if let Some(points) = m.get_many::<u64>("failure-at") {
        PowerSchedule::ExplicitList(points.copied().collect())
    } else {
        PowerSchedule::None
    };
    sched.validate()?;
    Ok(sched)
}

fn summary(label: &str, cfg: &HierarchyConfig, sched: &PowerSchedule, r: &RunResult) -> String {
    let s = &r.stats;
    let mut out = format!("== {label} ==\n# configuration\n");
    for line in cfg.to_kv().lines() {
        out.push_str("#   ");
        out.push_str(line);
        out.push('\n');
    }
    let sched_text = match sched {
        PowerSchedule::None => "none".to_string(),
        PowerSchedule::Periodic(n) => format!("every {n} instructions"),
        PowerSchedule::ExplicitList(p) => format!("{} explicit points", p.len()),
    };
    out.push_str(&format!("# power schedule: {sched_text}\n"));
    let hit_rate = if s.accesses > 0 { s.l1_hits as f64 / s.accesses as f64 * 100.0 } else { 0.0 };
    out.push_str(&format!(
        "accesses {}  L1 hit rate {hit_rate:.2}%  LLC writes {}  PCM writes {}\n",
        s.accesses, s.llc_writes, s.pcm_writes
    ));
    out.push_str(&format!(
        "cycles {} (stall {}, backup {}, restore {})\n",
        s.total_cycles, s.stall_cycles, s.backup_cycles, s.restore_cycles
    ));
    out.push_str(&format!(
        "energy {:.3} nJ (stable {:.3}, backup {:.3}, restore {:.3})\n",
        s.total_energy_nj(),
        s.energy_stable_nj,
        s.energy_backup_nj,
        s.energy_restore_nj
    ));
    let over = r.failures.iter().filter(|f| !f.within_budget).count();
    out.push_str(&format!(
        "failures {}  blocks backed up {}  max dirty {}  over-budget backups {over}\n",
        s.backups_performed, s.blocks_backed_up, s.max_dirty_blocks
    ));
    out
}

fn cmd_run(m: &ArgMatches) -> Result<()> {
    let trace_path = PathBuf::from(m.get_one::<String>("trace").unwrap());
    check_input(&trace_path)?;
    let out_path = m.get_one::<String>("out").map(PathBuf::from);
    let summary_path = m.get_one::<String>("summary").map(PathBuf::from);
    for p in out_path.iter().chain(&summary_path) {
        check_output(p)?;
    }

    let archs: Vec<(String, HierarchyConfig)> = match m.get_many::<String>("arch") {
        Some(names) => names
            .map(|n| {
                let id: BaselineId = n.parse().map_err(Usage::Invalid)?;
                Ok((id.label().to_string(), layered_config(m, id.config())?))
            })
            .collect::<Result<_>>()?,
        None => vec![("run".to_string(), layered_config(m, HierarchyConfig::default())?)],
    };

    let mut results = Vec::new();
    if archs.len() == 1 && m.get_one::<u64>("failures").is_none() {
        // Stream the trace; memory stays flat in trace length.
        let (label, cfg) = &archs[0];
        let sched = schedule_from(m, || unreachable!())?;
        let opts = TraceOptions {
            mem_size_bytes: Some(cfg.mem_size_bytes),
            mem_ops_per_instruction: cfg.mem_ops_per_instruction,
        };
        let r = run(trace::open(&trace_path, opts)?, cfg, &sched)?;
        results.push((label.clone(), cfg.clone(), sched, r));
    } else {
        let cfg0 = &archs[0].1;
        let opts = TraceOptions {
            mem_size_bytes: Some(archs.iter().map(|(_, c)| c.mem_size_bytes).min().unwrap()),
            mem_ops_per_instruction: cfg0.mem_ops_per_instruction,
        };
        let records = trace::read_all(&trace_path, opts)?;
        let sched = schedule_from(m, || Ok(records.last().map_or(0, |r| r.instr_index)))?;
        for (label, cfg) in &archs {
            let r = run_records(&records, cfg, &sched).with_context(|| format!("architecture {label}"))?;
            results.push((label.clone(), cfg.clone(), sched.clone(), r));
        }
    }

    let mut csv_buf = Vec::new();
    {
        let mut w = csv::Writer::from_writer(&mut csv_buf);
        let header: Vec<&str> = ["label"].into_iter().chain(SimStats::FIELDS.iter().copied()).collect();
        w.write_record(&header)?;
        for (label, _, _, r) in &results {
            let mut rec = vec![label.clone()];
            rec.extend(r.stats.values());
            w.write_record(&rec)?;
        }
        w.flush()?;
    }
    match &out_path {
        Some(p) => fs::write(p, &csv_buf).with_context(|| format!("writing {}", p.display()))?,
        None => io::stdout().write_all(&csv_buf)?,
    }

    let text: String = results.iter().map(|(l, c, s, r)| summary(l, c, s, r)).collect();
    match &summary_path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display()))?,
        None => eprint!("{text}"),
    }
    Ok(())
}

fn cmd_sweep(m: &ArgMatches) -> Result<()> {
    let spec_path = PathBuf::from(m.get_one::<String>("spec").unwrap());
    let out_path = PathBuf::from(m.get_one::<String>("out").unwrap());
    check_input(&spec_path)?;
    check_output(&out_path)?;
    let text = fs::read_to_string(&spec_path)?;
    let dir = spec_path.parent().unwrap_or(Path::new("."));
    let spec = SweepSpec::parse(&text, dir).map_err(|e| Usage::Invalid(e.to_string()))?;
    if let Some(sweep::TraceSource::File(p)) = &spec.trace {
        check_input(p)?;
    }
    let expansion = sweep::expand(&spec).map_err(|e| Usage::Invalid(e.to_string()))?;
    let base = spec.base_config()?;
    let records = spec.load_trace(&base)?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(m.get_one::<usize>("jobs").copied().unwrap_or(0))
        .build()?;
    let rows = pool.install(|| sweep::execute(&expansion.runs, &records, spec.baseline, &spec.metric))?;

    let file = fs::File::create(&out_path).with_context(|| format!("creating {}", out_path.display()))?;
    sweep::write_csv(io::BufWriter::new(file), &rows)?;

    eprintln!("{} runs over {} records, {} combinations filtered out", rows.len(), records.len(), expansion.filtered.len());
    for f in &expansion.filtered {
        eprintln!("  filtered K={} M={} N={}: {}", f.k, f.m, f.n, f.reason);
    }
    let best = rows.first().ok_or_else(|| anyhow!("sweep produced no rows"))?;
    eprintln!(
        "best by {}: {} ({:.3}), energy gain vs {} {:.2}%",
        spec.metric, best.run.label, best.metric_value, spec.baseline, best.gain_pct
    );
    Ok(())
}

fn cmd_gen(m: &ArgMatches) -> Result<()> {
    let out = PathBuf::from(m.get_one::<String>("out").unwrap());
    check_output(&out)?;
    let mut spec = SyntheticSpec::default();
    for (flag, key) in [
        ("records", "records"),
        ("write-fraction", "write_fraction"),
        ("working-set", "working_set"),
        ("locality", "locality"),
        ("seed", "seed"),
        ("base", "base"),
        ("mem-ops-per-instruction", "mem_ops_per_instruction"),
    ] {
        if let Some(v) = m.get_one::<String>(flag) {
            spec.set(key, v).map_err(Usage::Invalid)?;
        }
    }
    spec.validate(HierarchyConfig::default().mem_size_bytes).map_err(Usage::Invalid)?;
    let records: Vec<_> = spec.generate().collect();
    trace::write_file(&out, &records)?;
    eprintln!("wrote {} records to {}", records.len(), out.display());
    Ok(())
}

fn cmd_report(m: &ArgMatches) -> Result<()> {
    let csv_path = PathBuf::from(m.get_one::<String>("csv").unwrap());
    check_input(&csv_path)?;
    let out = PathBuf::from(m.get_one::<String>("out").unwrap());
    let table = ResultTable::read(fs::File::open(&csv_path)?)?;
    let files = write_report(&table, &out, m.get_one::<String>("baseline").map(String::as_str))?;
    for f in files {
        eprintln!("wrote {}", f.display());
    }
    Ok(())
}
