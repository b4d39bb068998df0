//! `tracesim` command line: single runs, seed sweeps, paired protocol
//! comparisons and config validation.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde::Serialize;

use tracesim::config::{load_scenario_with_overrides, ConfigError};
use tracesim::metrics::{compare_protocols, compute_metrics, CompareError};
use tracesim::report::{emit_comparison, emit_report, Manifest, ReportError};
use tracesim::{run, ProtocolKind, RunOptions, ScenarioConfig, SimError};

/// Default output root when `--out` is not given.
const OUT_ENV: &str = "TRACESIM_OUT";

#[derive(Parser)]
#[command(name = "tracesim", version, about = "Proximity contact tracing simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a scenario for one seed, a seed range, or a parameter sweep.
    Run(RunArgs),
    /// Run one scenario under two configurations and write comparison.csv.
    Compare(CompareArgs),
    /// Check a scenario file and overrides without running it.
    Validate(ScenarioArgs),
}

#[derive(Args, Clone)]
struct ScenarioArgs {
    /// Scenario file (TOML). Required unless `run --manifest` is used.
    #[arg(long)]
    scenario: Option<PathBuf>,
    /// Dotted-key override, e.g. `--set epidemic.initial_infected=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Shorthand for `--set protocol=...`.
    #[arg(long)]
    protocol: Option<ProtocolKind>,
    /// File of hex identifiers (one per line) to add to the server blacklist.
    #[arg(long)]
    blacklist: Option<PathBuf>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Single seed; overrides the scenario's rng_seed.
    #[arg(long, conflicts_with = "seeds")]
    seed: Option<u64>,
    /// Inclusive seed range `A..B`.
    #[arg(long)]
    seeds: Option<String>,
    /// Sweep one key over values, `KEY=V1,V2,...`. Repeatable; sweeps multiply.
    #[arg(long, value_name = "KEY=V1,V2")]
    sweep: Vec<String>,
    /// Output directory. Must not exist or be empty.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write receptions.csv.
    #[arg(long)]
    trace_receptions: bool,
    /// Repeat the run recorded in a manifest.json instead of reading a scenario.
    #[arg(long, conflicts_with_all = ["seeds", "sweep"])]
    manifest: Option<PathBuf>,
    /// Worker threads for multi-run invocations (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct CompareArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Second scenario. Defaults to the first with the other protocol.
    #[arg(long)]
    against: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug)]
enum CliError {
    Config(String),
    Invariant(String),
    Other(String),
}

impl CliError {
    fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Invariant(_) => 3,
            CliError::Other(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "config error: {m}"),
            CliError::Invariant(m) => write!(f, "invariant violated: {m}"),
            CliError::Other(m) => write!(f, "error: {m}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Invariant(e.to_string())
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Other(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => cmd_run(a),
        Cmd::Compare(a) => cmd_compare(a),
        Cmd::Validate(a) => cmd_validate(a),
    };
    match res {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn parse_kv(s: &str) -> Result<(String, String), CliError> {
    match s.split_once('=') {
        Some((k, v)) if !k.trim().is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
        _ => Err(CliError::Config(format!("expected KEY=VALUE, got `{s}`"))),
    }
}

fn parse_seeds(s: &str) -> Result<Vec<u64>, CliError> {
    let bad = || CliError::Config(format!("expected seed range A..B, got `{s}`"));
    let (a, b) = s.split_once("..").ok_or_else(bad)?;
    let a: u64 = a.trim().parse().map_err(|_| bad())?;
    let b: u64 = b.trim().parse().map_err(|_| bad())?;
    if b < a {
        return Err(bad());
    }
    Ok((a..=b).collect())
}

/// Overrides in application order: `--set`, then `--protocol`, then the blacklist file.
fn base_overrides(a: &ScenarioArgs) -> Result<Vec<(String, String)>, CliError> {
    let mut o = a.set.iter().map(|s| parse_kv(s)).collect::<Result<Vec<_>, _>>()?;
    if let Some(p) = a.protocol {
        o.push(("protocol".into(), p.as_str().into()));
    }
    Ok(o)
}

fn read_blacklist(path: &Path) -> Result<Vec<String>, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn scenario_path(a: &ScenarioArgs) -> Result<&Path, CliError> {
    a.scenario.as_deref().ok_or_else(|| CliError::Config("--scenario is required".into()))
}

fn load(a: &ScenarioArgs, extra: &[(String, String)]) -> Result<ScenarioConfig, CliError> {
    let path = scenario_path(a)?;
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut o = base_overrides(a)?;
    o.extend_from_slice(extra);
    let mut cfg = load_scenario_with_overrides(&text, &o)?;
    if let Some(path) = &a.blacklist {
        cfg.tracing.blacklist.extend(read_blacklist(path)?);
        cfg.validate()?;
    }
    Ok(cfg)
}

/// Creates `dir` or accepts it if it exists and is empty.
fn fresh_dir(dir: &Path) -> Result<(), CliError> {
    if dir.exists() {
        if !dir.is_dir() || fs::read_dir(dir)?.next().is_some() {
            return Err(CliError::Config(format!("output directory {} is not empty", dir.display())));
        }
    } else {
        fs::create_dir_all(dir)?;
    }
    Ok(())
}

fn default_out(name: &str) -> PathBuf {
    let root = std::env::var_os(OUT_ENV).map(PathBuf::from).unwrap_or_else(|| PathBuf::from("runs"));
    root.join(name)
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "run".into())
}

struct Job {
    dir: PathBuf,
    label: Vec<(String, String)>,
    cfg: ScenarioConfig,
}

#[derive(Serialize)]
struct SweepRow {
    label: String,
    seed: u64,
    protocol: String,
    attack_rate: f64,
    peak_infectious: usize,
    infections: usize,
    diagnoses: usize,
    notifications: usize,
    true_positive: usize,
    false_positive_attack: usize,
    false_positive_other: usize,
    false_negative: usize,
    median_latency_minutes: Option<f64>,
    oversight_alerts: usize,
    dir: String,
}

fn execute(job: &Job, opts: RunOptions) -> Result<SweepRow, CliError> {
    fresh_dir(&job.dir)?;
    let out = run(&job.cfg, opts)?;
    emit_report(&out, opts, &job.dir)?;
    let m = compute_metrics(&out);
    Ok(SweepRow {
        label: job.label.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join(";"),
        seed: job.cfg.rng_seed,
        protocol: job.cfg.protocol.to_string(),
        attack_rate: m.epidemic.attack_rate,
        peak_infectious: m.epidemic.peak_infectious,
        infections: m.epidemic.infections,
        diagnoses: m.epidemic.diagnoses,
        notifications: m.notification_count,
        true_positive: m.notifications.true_positive,
        false_positive_attack: m.notifications.false_positive_attack,
        false_positive_other: m.notifications.false_positive_other,
        false_negative: m.notifications.false_negative,
        median_latency_minutes: m.latency.median_minutes,
        oversight_alerts: m.oversight.alerts,
        dir: job.dir.display().to_string(),
    })
}

fn cmd_run(a: RunArgs) -> Result<(), CliError> {
    let opts = RunOptions { record_receptions: a.trace_receptions, ..RunOptions::default() };
    if let Some(path) = &a.manifest {
        return run_manifest(path, a.out.as_deref(), a.trace_receptions);
    }

    let seeds: Vec<Option<u64>> = match (&a.seed, &a.seeds) {
        (Some(s), _) => vec![Some(*s)],
        (None, Some(r)) => parse_seeds(r)?.into_iter().map(Some).collect(),
        (None, None) => vec![None],
    };
    let mut grid: Vec<Vec<(String, String)>> = vec![Vec::new()];
    for s in &a.sweep {
        let (k, vs) = parse_kv(s)?;
        let values: Vec<&str> = vs.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
        if values.is_empty() {
            return Err(CliError::Config(format!("sweep over `{k}` has no values")));
        }
        grid = grid
            .into_iter()
            .flat_map(|combo| {
                let k = &k;
                values.iter().map(move |v| {
                    let mut c = combo.clone();
                    c.push((k.clone(), v.to_string()));
                    c
                })
            })
            .collect();
    }

    let name = stem(scenario_path(&a.scenario)?);
    let out = a.out.clone().unwrap_or_else(|| default_out(&name));
    let single = seeds.len() == 1 && grid.len() == 1;

    let mut jobs = Vec::new();
    for combo in &grid {
        for seed in &seeds {
            let mut extra = combo.clone();
            if let Some(s) = seed {
                extra.push(("rng_seed".into(), s.to_string()));
            }
            let cfg = load(&a.scenario, &extra)?;
            let dir = if single {
                out.clone()
            } else {
                let mut sub = combo.iter().map(|(k, v)| format!("{k}={v}")).collect::<Vec<_>>().join("_");
                if sub.is_empty() {
                    sub = "runs".into();
                }
                out.join(sub).join(format!("seed_{}", cfg.rng_seed))
            };
            jobs.push(Job { dir, label: combo.clone(), cfg });
        }
    }
    if !single {
        fresh_dir(&out)?;
    }

    let rows: Vec<SweepRow> = if jobs.len() == 1 {
        vec![execute(&jobs[0], opts)?]
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(a.jobs.unwrap_or(0))
            .build()
            .map_err(|e| CliError::Other(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(|j| execute(j, opts)).collect::<Result<Vec<_>, _>>())?
    };

    if single {
        println!("wrote {}", out.display());
    } else {
        let path = out.join("sweep_summary.csv");
        let mut w = csv::Writer::from_path(&path).map_err(|e| CliError::Other(e.to_string()))?;
        for r in &rows {
            w.serialize(r).map_err(|e| CliError::Other(e.to_string()))?;
        }
        w.flush()?;
        println!("{} runs, summary in {}", rows.len(), path.display());
    }
    Ok(())
}

fn run_manifest(path: &Path, out: Option<&Path>, trace: bool) -> Result<(), CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    manifest.config.validate()?;
    let mut opts = manifest.options();
    opts.record_receptions |= trace;
    let dir = out.map(Path::to_path_buf).unwrap_or_else(|| default_out("manifest-rerun"));
    let job = Job { dir, label: Vec::new(), cfg: manifest.config };
    execute(&job, opts)?;
    println!("wrote {}", job.dir.display());
    Ok(())
}

fn cmd_compare(a: CompareArgs) -> Result<(), CliError> {
    let seed: Vec<(String, String)> = a.seed.map(|s| vec![("rng_seed".into(), s.to_string())]).unwrap_or_default();
    let cfg_a = load(&a.scenario, &seed)?;
    let cfg_b = match &a.against {
        Some(path) => load(&ScenarioArgs { scenario: Some(path.clone()), ..a.scenario.clone() }, &seed)?,
        None => {
            let other = match cfg_a.protocol {
                ProtocolKind::Decentralised => ProtocolKind::Centralised,
                ProtocolKind::Centralised => ProtocolKind::Decentralised,
            };
            let mut extra = seed.clone();
            extra.push(("protocol".into(), other.as_str().into()));
            load(&a.scenario, &extra)?
        }
    };
    if !cfg_a.same_scenario(&cfg_b) {
        return Err(CliError::Config(CompareError::ScenarioMismatch.to_string()));
    }
    let name = format!("{}-compare", stem(scenario_path(&a.scenario)?));
    let out = a.out.unwrap_or_else(|| default_out(&name));
    fresh_dir(&out)?;
    let opts = RunOptions::default();
    let runs = [("a", &cfg_a), ("b", &cfg_b)]
        .into_par_iter()
        .map(|(name, cfg)| -> Result<_, CliError> {
            let dir = out.join(format!("{name}_{}", cfg.protocol));
            fs::create_dir_all(&dir)?;
            let o = run(cfg, opts)?;
            emit_report(&o, opts, &dir)?;
            Ok(o)
        })
        .collect::<Result<Vec<_>, _>>()?;
    let cmp = compare_protocols(&runs[0], &runs[1]).map_err(|e| CliError::Config(e.to_string()))?;
    let path = out.join("comparison.csv");
    emit_comparison(&cmp, &path)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn cmd_validate(a: ScenarioArgs) -> Result<(), CliError> {
    let cfg = load(&a, &[])?;
    println!(
        "ok: {} agents, {} ticks, protocol {}, attack {:?}",
        cfg.n_agents,
        cfg.n_ticks(),
        cfg.protocol,
        cfg.attack.kind
    );
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(ConfigError::UnknownKey("x".into())).code(), 2);
        assert_eq!(CliError::from(SimError::Invariant("x".into())).code(), 3);
        assert_eq!(CliError::Other("x".into()).code(), 1);
    }

    #[test]
    fn seed_ranges() {
        assert_eq!(parse_seeds("1..3").unwrap(), vec![1, 2, 3]);
        assert!(parse_seeds("3..1").is_err());
        assert!(parse_seeds("7").is_err());
    }
}
