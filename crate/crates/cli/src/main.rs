//! `polarize`: explore interleavings of instrumented concurrent structures.
//!
//! Exit status: 0 when every check passed, 1 when a violation was found,
//! 2 for bad input.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use polarize_core::config::{ModeKind, RunConfig};
use polarize_core::driver::{self, DriverError, Format};
use polarize_core::report::{read_records, write_record, Record};
use polarize_core::{Cadence, History, SpecKind};

#[derive(Parser)]
#[command(name = "polarize", version, about = "Interleaving explorer with abstract-history checks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Explore a workload and write a JSON-lines report.
    Run(RunArgs),
    /// Re-execute a schedule, given directly or taken from a report.
    Replay(ReplayArgs),
    /// Write the history reached by a schedule, or re-render a saved one.
    Export(ExportArgs),
    /// Decide linearizability of a saved history by brute force.
    Oracle(OracleArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// exhaustive or random
    #[arg(long)]
    mode: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    /// end, on-complete or paranoid
    #[arg(long)]
    cadence: Option<String>,
    #[arg(long)]
    max_events: Option<usize>,
    /// Report file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReplayArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, conflicts_with = "report")]
    schedule: Option<String>,
    #[arg(long)]
    report: Option<PathBuf>,
    /// 1-based line of the report; defaults to the first record with a schedule.
    #[arg(long, requires = "report")]
    line: Option<usize>,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long, required_unless_present = "history")]
    config: Option<PathBuf>,
    #[arg(long, requires = "config")]
    schedule: Option<String>,
    /// Export the concrete history instead of the abstract one.
    #[arg(long)]
    concrete: bool,
    /// A saved JSON history.
    #[arg(long, conflicts_with_all = ["config", "schedule"])]
    history: Option<PathBuf>,
    #[arg(long, default_value = "dot")]
    format: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct OracleArgs {
    #[arg(long)]
    history: PathBuf,
    /// queue or set
    #[arg(long)]
    spec: String,
    #[arg(long, default_value_t = 12)]
    max_events: usize,
}

/// Input problems; all map to exit status 2.
#[derive(Debug)]
struct BadInput(String);

impl From<DriverError> for BadInput {
    fn from(e: DriverError) -> Self {
        BadInput(e.to_string())
    }
}

impl From<io::Error> for BadInput {
    fn from(e: io::Error) -> Self {
        BadInput(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let res = match cli.cmd {
        Cmd::Run(a) => run(a),
        Cmd::Replay(a) => replay(a),
        Cmd::Export(a) => export(a),
        Cmd::Oracle(a) => oracle(a),
    };
    match res {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(BadInput(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
    }
}

fn load(path: &Path) -> Result<RunConfig, BadInput> {
    RunConfig::load(path).map_err(|e| BadInput(e.to_string()))
}

fn workers() -> Result<usize, BadInput> {
    match std::env::var("POLARIZE_WORKERS") {
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(n),
            _ => Err(BadInput(format!("POLARIZE_WORKERS must be a positive integer, got {s:?}"))),
        },
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>, BadInput> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(
            File::create(p).map_err(|e| BadInput(format!("cannot write {}: {e}", p.display())))?,
        )),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(a: RunArgs) -> Result<bool, BadInput> {
    let mut cfg = load(&a.config)?;
    if let Some(m) = a.mode {
        cfg.mode = match m.as_str() {
            "exhaustive" => ModeKind::Exhaustive,
            "random" => ModeKind::Random,
            _ => return Err(BadInput(format!("unknown mode {m:?}"))),
        };
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(c) = a.cadence {
        cfg.cadence = c.parse::<Cadence>().map_err(BadInput)?;
    }
    if let Some(n) = a.max_events {
        cfg.caps.events = n;
    }
    if let Some(o) = a.out {
        cfg.out = Some(o);
    }
    cfg.workload().map_err(|e| BadInput(e.to_string()))?;
    let out = driver::run(&cfg, &a.config.display().to_string(), workers()?)?;
    let mut w = output(cfg.out.as_deref())?;
    for r in &out.records {
        write_record(&mut w, r)?;
    }
    w.flush()?;
    if let Some(Record::Summary { schedules, states, violations, elapsed_ms, .. }) = out.records.last() {
        eprintln!(
            "{}: {schedules} schedules, {states} states, {violations} violations, {elapsed_ms} ms",
            if out.passed { "pass" } else { "FAIL" }
        );
    }
    Ok(out.passed)
}

fn replay(a: ReplayArgs) -> Result<bool, BadInput> {
    let cfg = load(&a.config)?;
    let result = match (a.schedule, a.report) {
        (Some(s), None) => driver::replay_schedule(&cfg, &s)?,
        (None, Some(path)) => {
            let f = File::open(&path).map_err(|e| BadInput(format!("cannot read {}: {e}", path.display())))?;
            let records = read_records(BufReader::new(f)).map_err(BadInput)?;
            let record = match a.line {
                Some(n) => records
                    .get(n.wrapping_sub(1))
                    .ok_or_else(|| BadInput(format!("report has no line {n}")))?,
                None => records
                    .iter()
                    .find(|r| r.schedule().is_some())
                    .ok_or_else(|| BadInput("report has no schedule".into()))?,
            };
            driver::replay_record(&cfg, record)?
        }
        _ => return Err(BadInput("give --schedule or --report".into())),
    };
    for v in &result.violations {
        println!("{v}");
    }
    println!("{:?} after {} moves", result.status, result.schedule.len());
    Ok(result.passed())
}

fn export(a: ExportArgs) -> Result<bool, BadInput> {
    let format: Format = a.format.parse().map_err(BadInput)?;
    let text = match (a.history, a.config) {
        (Some(path), _) => {
            let s = std::fs::read_to_string(&path).map_err(|e| BadInput(format!("cannot read {}: {e}", path.display())))?;
            let h = History::from_json(&s).map_err(|e| BadInput(e.to_string()))?;
            driver::export_history(&h, format)
        }
        (None, Some(cfg)) => {
            let cfg = load(&cfg)?;
            driver::export_schedule(&cfg, a.schedule.as_deref().unwrap_or(""), a.concrete, format)?
        }
        (None, None) => return Err(BadInput("give --config or --history".into())),
    };
    let mut w = output(a.out.as_deref())?;
    w.write_all(text.as_bytes())?;
    if !text.ends_with('\n') {
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(true)
}

fn oracle(a: OracleArgs) -> Result<bool, BadInput> {
    let spec = SpecKind::parse(&a.spec).ok_or_else(|| BadInput(format!("unknown spec {:?}", a.spec)))?;
    let s = std::fs::read_to_string(&a.history)
        .map_err(|e| BadInput(format!("cannot read {}: {e}", a.history.display())))?;
    let h = History::from_json(&s).map_err(|e| BadInput(e.to_string()))?;
    let v = driver::oracle(&h, spec, a.max_events)?;
    println!("{}", serde_json::to_string(&v).map_err(|e| BadInput(e.to_string()))?);
    Ok(v.linearizable)
}
