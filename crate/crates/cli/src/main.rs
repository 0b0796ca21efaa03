use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;
use std::time::Instant;

use achlioptas_core::engine::{self, RunConfig, RunMetadata, Sampling};
use achlioptas_core::experiments::{self, ExperimentConfig, ExperimentReport, SweepWindowsConfig};
use achlioptas_core::observables::{self, HlTag, WindowMode};
use achlioptas_core::ode::{self, OdeConfig, OdeMetadata};
use achlioptas_core::output::{sidecar_path, write_json};
use achlioptas_core::rules::{DecisionTable, RuleArgs, RuleKind, RuleRef, TieBreak};
use achlioptas_core::{Error, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

const EXIT_CONFIG: u8 = 2;
const EXIT_RUNTIME: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "achlioptas-lab", version, about = "Achlioptas-type random graph process lab")]
struct Cli {
    /// Worker threads for ensembles (default: all cores).
    #[arg(long, global = true, env = "ACHLIOPTAS_LAB_JOBS")]
    jobs: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Simulate one run (or an ensemble) and write a trajectory CSV.
    Simulate(SimulateArgs),
    /// Measure critical windows over a list of sizes.
    Sweep(SweepArgs),
    /// Integrate the fluid-limit ODE.
    Ode(OdeArgs),
    /// Run a named experiment from a JSON config.
    Verify(VerifyArgs),
    /// Print summary tables for a results directory.
    Report(ReportArgs),
}

#[derive(Args, Debug, Default)]
struct RuleOpts {
    #[arg(long, value_parser = RuleKind::from_str)]
    rule: Option<RuleKind>,
    /// Number of offered vertices.
    #[arg(long)]
    ell: Option<usize>,
    /// Number of offered pairs.
    #[arg(long)]
    r: Option<usize>,
    /// Size bound for min_rule_custom.
    #[arg(long = "B", alias = "bound")]
    bound: Option<usize>,
    /// Decision table JSON for bounded_size_table.
    #[arg(long)]
    table: Option<PathBuf>,
    #[arg(long, value_parser = TieBreak::from_str)]
    tie_break: Option<TieBreak>,
}

impl RuleOpts {
    fn any(&self) -> bool {
        self.rule.is_some()
            || self.ell.is_some()
            || self.r.is_some()
            || self.bound.is_some()
            || self.table.is_some()
            || self.tie_break.is_some()
    }

    /// Applies the flags on top of a rule from a config file.
    fn merge(&self, base: Option<RuleRef>) -> Result<RuleRef> {
        if !self.any() {
            return base.ok_or_else(|| Error::config("--rule is required"));
        }
        let mut args = match base {
            Some(RuleRef::Args(a)) => a,
            Some(RuleRef::Name(kind)) => bare_args(kind),
            None => bare_args(self.rule.ok_or_else(|| Error::config("--rule is required"))?),
        };
        if let Some(kind) = self.rule {
            if kind != args.name {
                args = bare_args(kind);
            }
        }
        args.ell = self.ell.or(args.ell);
        args.r = self.r.or(args.r);
        args.bound = self.bound.or(args.bound);
        if let Some(tb) = self.tie_break {
            args.tie_break = tb;
        }
        if let Some(path) = &self.table {
            let text = read_input(path)?;
            args.table = Some(DecisionTable::from_json(&text)?);
        }
        Ok(RuleRef::Args(args))
    }
}

fn bare_args(name: RuleKind) -> RuleArgs {
    RuleArgs {
        name,
        ell: None,
        r: None,
        bound: None,
        table: None,
        tie_break: TieBreak::default(),
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    rule: RuleOpts,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    t_max: Option<f64>,
    /// Grid spacing in units of t = m/n.
    #[arg(long)]
    grid: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Runs in the ensemble; more than one writes per-row statistics.
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long, value_parser = Sampling::from_str)]
    sampling: Option<Sampling>,
    #[arg(long, value_delimiter = ',')]
    record_ks: Option<Vec<usize>>,
    #[arg(long)]
    bins_b: Option<usize>,
    #[arg(long)]
    surplus_k: Option<usize>,
    /// JSON file with default values for any of the above.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SimulateFile {
    rule: Option<RuleRef>,
    n: Option<usize>,
    t_max: Option<f64>,
    #[serde(alias = "grid")]
    grid_dt: Option<f64>,
    seed: Option<u64>,
    runs: Option<usize>,
    sampling: Option<Sampling>,
    record_ks: Option<Vec<usize>>,
    bins_b: Option<usize>,
    surplus_k: Option<usize>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[command(flatten)]
    rule: RuleOpts,
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<usize>>,
    /// Lower threshold as a fraction of n.
    #[arg(long)]
    a: Option<f64>,
    /// Upper threshold as a fraction of n.
    #[arg(long)]
    b: Option<f64>,
    /// Lower threshold tag (sqrt, two_thirds, n_over_log) instead of --a.
    #[arg(long, value_parser = HlTag::from_str, conflicts_with = "a")]
    h_l: Option<HlTag>,
    /// Upper threshold fraction used with --h-l.
    #[arg(long, conflicts_with = "b")]
    delta: Option<f64>,
    #[arg(long)]
    runs: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    t_limit: Option<f64>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct SweepFile {
    rule: Option<RuleRef>,
    ns: Option<Vec<usize>>,
    a: Option<f64>,
    b: Option<f64>,
    h_l: Option<HlTag>,
    delta: Option<f64>,
    runs: Option<usize>,
    seed: Option<u64>,
    t_limit: Option<f64>,
}

#[derive(Args, Debug)]
struct OdeArgs {
    #[command(flatten)]
    rule: RuleOpts,
    #[arg(long)]
    kmax: Option<usize>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    t_max: Option<f64>,
    #[arg(long)]
    grid: Option<f64>,
    /// Number of rho_k columns in the CSV.
    #[arg(long)]
    kprint: Option<usize>,
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct OdeFile {
    rule: Option<RuleRef>,
    kmax: Option<usize>,
    h: Option<f64>,
    t_max: Option<f64>,
    #[serde(alias = "grid")]
    grid_dt: Option<f64>,
    kprint: Option<usize>,
}

#[derive(Args, Debug)]
struct VerifyArgs {
    /// One of: event_c, event_l, coalescence, sweep_windows, sweep_surplus,
    /// compare_sim_ode, de_oracle, two_giants.
    experiment: String,
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "results")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct ReportArgs {
    #[arg(long = "in")]
    input: PathBuf,
}

/// Sidecar written next to every CSV produced by simulate, sweep and ode.
#[derive(Debug, Serialize)]
struct Sidecar<T: Serialize> {
    command: &'static str,
    #[serde(flatten)]
    body: T,
}

#[derive(Debug, Serialize)]
struct EnsembleMetadata {
    config: RunConfig,
    runs: usize,
    seeds: Vec<u64>,
    prng: &'static str,
    seed_derivation: &'static str,
    crate_version: &'static str,
    wall_time_s: f64,
}

#[derive(Debug, Serialize)]
struct SweepMetadata {
    config: SweepWindowsConfig,
    report: ExperimentReport,
    crate_version: &'static str,
    wall_time_s: f64,
}

fn read_input(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| Error::config(format!("cannot read {}: {e}", path.display())))
}

fn read_file_config<T: Default + for<'de> Deserialize<'de>>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = read_input(p)?;
            serde_json::from_str(&text).map_err(|e| Error::config(format!("{}: {e}", p.display())))
        }
    }
}

fn required<T>(value: Option<T>, flag: &str) -> Result<T> {
    value.ok_or_else(|| Error::config(format!("--{flag} is required")))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let f = fs::File::create(path)
        .map_err(|e| std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))?;
    Ok(BufWriter::new(f))
}

fn simulate(args: SimulateArgs, jobs: Option<usize>) -> Result<()> {
    let file: SimulateFile = read_file_config(args.config.as_deref())?;
    let rule = args.rule.merge(file.rule)?.resolve()?;
    let mut config = RunConfig::new(
        required(args.n.or(file.n), "n")?,
        rule,
        args.seed.or(file.seed).unwrap_or(1),
        required(args.t_max.or(file.t_max), "t-max")?,
        required(args.grid.or(file.grid_dt), "grid")?,
    );
    if let Some(s) = args.sampling.or(file.sampling) {
        config.sampling = s;
    }
    if let Some(ks) = args.record_ks.or(file.record_ks) {
        config.record_ks = ks;
    }
    if let Some(b) = args.bins_b.or(file.bins_b) {
        config.bins_b = b;
    }
    if let Some(k) = args.surplus_k.or(file.surplus_k) {
        config.surplus_k = k;
    }
    let runs = args.runs.or(file.runs).unwrap_or(1);
    if runs == 0 {
        return Err(Error::config("--runs must be at least 1"));
    }
    config.validate()?;

    let start = Instant::now();
    if runs == 1 {
        let traj = engine::run(&config)?;
        let mut w = create(&args.out)?;
        traj.write_csv(&mut w)?;
        w.flush()?;
        let meta = RunMetadata::new(&traj, start.elapsed().as_secs_f64());
        write_json(&sidecar_path(&args.out), &Sidecar { command: "simulate", body: meta })?;
        eprintln!(
            "{} n={} steps={} final l1/n={}",
            config.rule.name(),
            config.n,
            traj.summary.steps,
            traj.summary.l1 as f64 / config.n as f64
        );
    } else {
        let trajs = engine::run_ensemble(&config, runs, jobs)?;
        let summary = engine::summarize(&trajs)?;
        let mut w = create(&args.out)?;
        summary.write_csv(&mut w)?;
        w.flush()?;
        let meta = EnsembleMetadata {
            config: config.clone(),
            runs,
            seeds: summary.seeds.clone(),
            prng: engine::PRNG_ID,
            seed_derivation: engine::SEED_DERIVATION,
            crate_version: env!("CARGO_PKG_VERSION"),
            wall_time_s: start.elapsed().as_secs_f64(),
        };
        write_json(&sidecar_path(&args.out), &Sidecar { command: "simulate", body: meta })?;
        eprintln!("{} n={} runs={runs}", config.rule.name(), config.n);
    }
    Ok(())
}

fn sweep(args: SweepArgs, jobs: Option<usize>) -> Result<()> {
    let file: SweepFile = read_file_config(args.config.as_deref())?;
    let rule = args.rule.merge(file.rule)?;
    // flags override the file as a unit so that --a/--b never mix with h_l/delta
    let mode = if args.a.is_some() || args.b.is_some() {
        WindowMode::FractionThresholds {
            a: required(args.a.or(file.a), "a")?,
            b: required(args.b.or(file.b), "b")?,
        }
    } else if args.h_l.is_some() || args.delta.is_some() {
        WindowMode::JumpThresholds {
            h_l: required(args.h_l.or(file.h_l), "h-l")?,
            delta: required(args.delta.or(file.delta), "delta")?,
        }
    } else if let (Some(a), Some(b)) = (file.a, file.b) {
        WindowMode::FractionThresholds { a, b }
    } else if let (Some(h_l), Some(delta)) = (file.h_l, file.delta) {
        WindowMode::JumpThresholds { h_l, delta }
    } else {
        return Err(Error::config("give --a and --b, or --h-l and --delta"));
    };
    let config = SweepWindowsConfig {
        rule,
        ns: required(args.ns.or(file.ns), "ns")?,
        mode,
        runs: required(args.runs.or(file.runs), "runs")?,
        seed: args.seed.or(file.seed).unwrap_or(1),
        t_limit: args.t_limit.or(file.t_limit).unwrap_or(5.0),
    };

    let start = Instant::now();
    let report = experiments::sweep_windows(&config, jobs)?;
    let mut w = create(&args.out)?;
    observables::write_window_csv(&mut w, &report.rows)?;
    w.flush()?;
    let report = ExperimentReport::SweepWindows(report);
    for line in report.summary_lines() {
        println!("{line}");
    }
    let meta = SweepMetadata {
        config,
        report,
        crate_version: env!("CARGO_PKG_VERSION"),
        wall_time_s: start.elapsed().as_secs_f64(),
    };
    write_json(&sidecar_path(&args.out), &Sidecar { command: "sweep", body: meta })?;
    Ok(())
}

fn run_ode(args: OdeArgs) -> Result<()> {
    let file: OdeFile = read_file_config(args.config.as_deref())?;
    let rule = args.rule.merge(file.rule)?.resolve()?;
    let config = OdeConfig::new(
        args.kmax.or(file.kmax).unwrap_or(1000),
        args.h.or(file.h).unwrap_or(1e-4),
        required(args.t_max.or(file.t_max), "t-max")?,
        args.grid.or(file.grid_dt).unwrap_or(0.01),
    );
    let kprint = args.kprint.or(file.kprint).unwrap_or(20);

    let start = Instant::now();
    let sol = ode::integrate(&rule, config)?;
    let mut w = create(&args.out)?;
    sol.write_csv(&mut w, kprint)?;
    w.flush()?;
    let meta = OdeMetadata::new(&sol, start.elapsed().as_secs_f64());
    match meta.t_c {
        Some(t) => eprintln!("{} t_c={t}", rule.name()),
        None => eprintln!("{} no transition before t={}", rule.name(), config.t_max),
    }
    write_json(&sidecar_path(&args.out), &Sidecar { command: "ode", body: meta })?;
    Ok(())
}

fn verify(args: VerifyArgs, jobs: Option<usize>) -> Result<()> {
    let text = read_input(&args.config)?;
    let config = ExperimentConfig::from_json(&args.experiment, &text)?;
    let (report, manifest) = experiments::run_to_dir(&config, &args.out_dir, jobs)?;
    println!("{}", manifest.experiment);
    for line in report.summary_lines() {
        println!("  {line}");
    }
    for f in &manifest.files {
        println!("  wrote {}", args.out_dir.join(f).display());
    }
    Ok(())
}

fn report(args: ReportArgs) -> Result<()> {
    if !args.input.is_dir() {
        return Err(Error::config(format!("{} is not a directory", args.input.display())));
    }
    let manifests = experiments::read_manifests(&args.input)?;
    for (manifest, report) in &manifests {
        println!("{} (wall {:.1}s)", manifest.experiment, manifest.wall_time_s);
        for line in report.summary_lines() {
            println!("  {line}");
        }
    }

    let mut sidecars: Vec<PathBuf> = fs::read_dir(&args.input)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.to_string_lossy().ends_with(".meta.json"))
        .collect();
    sidecars.sort();
    for path in &sidecars {
        let value: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
        let name = path.file_name().unwrap_or_default().to_string_lossy();
        println!("{name}: {}", describe_sidecar(&value));
    }
    if manifests.is_empty() && sidecars.is_empty() {
        println!("no results in {}", args.input.display());
    }
    Ok(())
}

fn describe_sidecar(v: &Value) -> String {
    let rule = |r: &Value| r.get("kind").and_then(Value::as_str).unwrap_or("?").to_string();
    match v.get("command").and_then(Value::as_str) {
        Some("simulate") => {
            let c = &v["config"];
            format!(
                "simulate {} n={} t_max={} seed={} runs={}",
                rule(&c["rule"]),
                c["n"],
                c["t_max"],
                c["seed"],
                v.get("runs").cloned().unwrap_or(json!(1))
            )
        }
        Some("sweep") => {
            let lines = serde_json::from_value::<ExperimentReport>(v["report"].clone())
                .map(|r| r.summary_lines().join("; "))
                .unwrap_or_default();
            format!("sweep {lines}")
        }
        Some("ode") => format!(
            "ode {} kmax={} h={} t_c={}",
            rule(&v["rule"]),
            v["kmax"],
            v["h"],
            v["t_c"]
        ),
        _ => "unrecognized metadata".into(),
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    if cli.jobs == Some(0) {
        return Err(Error::config("--jobs must be at least 1"));
    }
    let jobs = cli.jobs;
    match cli.command {
        Command::Simulate(a) => simulate(a, jobs),
        Command::Sweep(a) => sweep(a, jobs),
        Command::Ode(a) => run_ode(a),
        Command::Verify(a) => verify(a, jobs),
        Command::Report(a) => report(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // help and version land here too, with a zero exit code
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG } else { 0 });
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let class = if e.is_config() { "config" } else { "runtime" };
            let line = json!({"error": class, "kind": e.kind(), "message": e.to_string()});
            eprintln!("{line}");
            ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_RUNTIME })
        }
    }
}
