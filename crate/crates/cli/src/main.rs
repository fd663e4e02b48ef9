//! `hyperwalk` command-line tool.
//!
//! Exit status: 0 when every acceptance flag passes, 1 when one fails or a
//! computation breaks down, 2 on usage or configuration errors.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use hyperwalk::config::RunConfig;
use hyperwalk::experiments::{self, run_by_name};
use hyperwalk::report::ExperimentReport;
use hyperwalk::Error;

#[derive(Parser)]
#[command(name = "hyperwalk", version, about = "Random walks in hypergeometric random environments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Counts, trap strengths and min-cuts of the configured graph.
    Describe(Common),
    /// Evaluates one simplex integral.
    Phi(Common),
    /// Samples environments and dumps them as JSON.
    SampleEnv(Common),
    /// Duality residuals over random balanced parameters.
    Duality(Common),
    /// Weak time reversal and hitting identity checks.
    Reversal(Common),
    /// Killed Green function moments on growing boxes.
    GreenMoment(Common),
    /// Root-edge stationary mass moments on growing tori.
    InvariantMeasure(Common),
    /// Trap times at the origin.
    TrapTimes(Common),
    /// Bounded-energy flow construction on tori.
    FlowBuild(Common),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
    Both,
}

#[derive(Args)]
struct Common {
    /// TOML file with [graph], [weights] and [experiment] sections.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Number of sampled environments.
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads (default: all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Output directory; without it the JSON goes to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
    #[arg(long)]
    tol: Option<f64>,
}

enum Failure {
    Usage(String),
    Computation(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(_) | Error::Params(_) | Error::Graph(_) | Error::Io(_) => Failure::Usage(e.to_string()),
            _ => Failure::Computation(e.to_string()),
        }
    }
}

fn load(c: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = match &c.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.experiment.seed = Some(s);
    }
    if let Some(r) = c.replicas {
        cfg.experiment.n_environments = Some(r);
    }
    if let Some(t) = c.tol {
        cfg.experiment.tol = Some(t);
    }
    if let Some(o) = &c.out {
        cfg.experiment.out = Some(o.display().to_string());
    }
    if c.format != Format::Json && cfg.experiment.out.is_none() {
        return Err(Failure::Usage("--format csv/both needs --out".into()));
    }
    if let Some(t) = c.threads {
        if t == 0 {
            return Err(Failure::Usage("--threads must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(format!("thread pool: {e}")))?;
    }
    Ok(cfg)
}

fn io_err(path: &Path, e: std::io::Error) -> Failure {
    Failure::Usage(format!("cannot write {}: {e}", path.display()))
}

/// Writes `name.json` plus a `name.timestamp.json` sidecar, or prints the
/// JSON when no output directory is configured.
fn emit_json(cfg: &RunConfig, name: &str, json: &str) -> Result<(), Failure> {
    let Some(dir) = cfg.experiment.out.as_deref() else {
        print!("{json}");
        return Ok(());
    };
    let dir = Path::new(dir);
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let path = dir.join(format!("{name}.json"));
    fs::write(&path, json).map_err(|e| io_err(&path, e))?;
    let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
    let sidecar = dir.join(format!("{name}.timestamp.json"));
    let body = serde_json::json!({ "report": format!("{name}.json"), "created_unix_seconds": secs });
    fs::write(&sidecar, format!("{body}\n")).map_err(|e| io_err(&sidecar, e))?;
    eprintln!("wrote {}", path.display());
    Ok(())
}

fn emit<T: Serialize>(cfg: &RunConfig, name: &str, value: &T) -> Result<(), Failure> {
    let mut json = serde_json::to_string_pretty(value).expect("outputs always serialize");
    json.push('\n');
    emit_json(cfg, name, &json)
}

fn emit_report(cfg: &RunConfig, format: Format, report: &ExperimentReport) -> Result<(), Failure> {
    if format != Format::Csv {
        emit_json(cfg, &report.experiment, &report.to_json())?;
    }
    if format != Format::Json {
        let dir = Path::new(cfg.experiment.out.as_deref().expect("checked in load"));
        fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
        for (file, body) in report.csv_files() {
            let path = dir.join(file);
            fs::write(&path, body).map_err(|e| io_err(&path, e))?;
        }
    }
    for f in &report.flags {
        eprintln!(
            "{} {}{}: {:e} vs {:e}",
            if f.passed { "PASS" } else { "FAIL" },
            f.name,
            if f.acceptance { "" } else { " (diagnostic)" },
            f.statistic,
            f.threshold
        );
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Failure> {
    match cli.command {
        Command::Describe(c) => {
            let cfg = load(&c)?;
            let d = experiments::describe(&cfg)?;
            eprintln!("{:?} graph: {} vertices, {} edges, {} arcs", d.kind, d.vertices, d.edges, d.arcs);
            if let (Some(k), Some(kt)) = (d.kappa, d.kappa_tilde) {
                eprintln!("kappa = {k}, kappa_tilde = {kt}, min-cut = {:?}", d.min_cut);
            }
            emit(&cfg, "describe", &d)?;
            Ok(true)
        }
        Command::Phi(c) => {
            let cfg = load(&c)?;
            let p = experiments::evaluate_phi(&cfg)?;
            eprintln!("phi = {} ({:?})", p.value, p.method);
            emit(&cfg, "phi", &p)?;
            Ok(true)
        }
        Command::SampleEnv(c) => {
            let cfg = load(&c)?;
            let dump = experiments::sample_environments(&without_out(&cfg))?;
            emit_json(&cfg, "sample-env", &dump.to_json())?;
            Ok(true)
        }
        Command::Duality(c) => experiment("duality", c),
        Command::Reversal(c) => experiment("reversal", c),
        Command::GreenMoment(c) => experiment("green-moment", c),
        Command::InvariantMeasure(c) => experiment("invariant-measure", c),
        Command::TrapTimes(c) => experiment("trap-times", c),
        Command::FlowBuild(c) => experiment("flow-build", c),
    }
}

fn experiment(name: &str, c: Common) -> Result<bool, Failure> {
    let cfg = load(&c)?;
    let report = run_by_name(name, &without_out(&cfg))?;
    emit_report(&cfg, c.format, &report)?;
    Ok(report.passed())
}

/// The output location is not part of the echoed configuration, so reports
/// written to different directories stay byte-identical.
fn without_out(cfg: &RunConfig) -> RunConfig {
    let mut c = cfg.clone();
    c.experiment.out = None;
    c
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Computation(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
