//! Batch entry points behind the command-line tool.

use std::time::Instant;

use thiserror::Error;

use crate::config::{ConfigError, ModeKind, RunConfig};
use crate::explore::{self, Exploration, RunResult};
use crate::history::History;
use crate::linoracle::{self, OracleVerdict};
use crate::report::Record;
use crate::seqspec::SpecKind;
use crate::simsched::{format_schedule, parse_schedule, StepError, Workload};

#[derive(Debug, Error)]
pub enum DriverError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error("schedule mismatch: {0}")]
    Mismatch(String),
    #[error("{0}")]
    Input(String),
}

/// Everything `run` produced.
#[derive(Clone, Debug)]
pub struct RunOutput {
    pub records: Vec<Record>,
    pub passed: bool,
}

/// Explores the configured workload. `workers` sizes the thread pool for
/// exhaustive search; one worker means the sequential search.
pub fn run(cfg: &RunConfig, config_path: &str, workers: usize) -> Result<RunOutput, DriverError> {
    let w = cfg.workload()?;
    let digest = w.digest();
    let started = Instant::now();
    let mut records = Vec::new();
    let summary = |e: &Exploration, mode: &str, started: Instant| Record::Summary {
        structure: w.structure.to_string(),
        mode: mode.to_string(),
        schedules: u64::try_from(e.schedules).unwrap_or(u64::MAX),
        states: e.states,
        bound_exhausted: e.bound_exhausted,
        violations: e.violations.len(),
        truncated: e.truncated,
        passed: e.passed(),
        elapsed_ms: started.elapsed().as_millis() as u64,
    };
    match cfg.mode {
        ModeKind::Exhaustive => {
            let e = exhaustive_with_workers(&w, cfg, workers)?;
            for v in &e.violations {
                let schedule = format_schedule(&v.schedule);
                records.push(Record::Fail {
                    repro: format!("polarize replay --config {config_path} --schedule '{schedule}'"),
                    schedule,
                    violation: v.clone(),
                    workload: digest.clone(),
                });
            }
            records.push(summary(&e, "exhaustive", started));
            Ok(RunOutput { passed: e.passed(), records })
        }
        ModeKind::Random => {
            let runs = explore::random(&w, cfg.checks(), cfg.seed, cfg.runs)?;
            let mut agg = Exploration { schedules: runs.len() as u128, ..Default::default() };
            for (i, r) in runs.iter().enumerate() {
                if r.status == explore::Status::BoundExhausted {
                    agg.bound_exhausted += 1;
                }
                agg.violations.extend(r.violations.iter().cloned());
                records.push(Record::Run {
                    run: i,
                    status: r.status,
                    schedule: format_schedule(&r.schedule),
                    violations: r.violations.clone(),
                    workload: digest.clone(),
                });
            }
            records.push(summary(&agg, "random", started));
            Ok(RunOutput { passed: agg.passed(), records })
        }
    }
}

#[cfg(feature = "parallel")]
fn exhaustive_with_workers(w: &Workload, cfg: &RunConfig, workers: usize) -> Result<Exploration, StepError> {
    if workers <= 1 {
        return explore::exhaustive(w, &cfg.explore_options(false));
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| explore::exhaustive(w, &cfg.explore_options(true))),
        Err(_) => explore::exhaustive(w, &cfg.explore_options(false)),
    }
}

#[cfg(not(feature = "parallel"))]
fn exhaustive_with_workers(w: &Workload, cfg: &RunConfig, _workers: usize) -> Result<Exploration, StepError> {
    explore::exhaustive(w, &cfg.explore_options(false))
}

/// Replays the schedule of a report record and checks that it reproduces
/// the recorded verdict.
pub fn replay_record(cfg: &RunConfig, record: &Record) -> Result<RunResult, DriverError> {
    let w = cfg.workload()?;
    let (schedule, digest) = record
        .schedule()
        .ok_or_else(|| DriverError::Input("record has no schedule".into()))?;
    if digest != w.digest() {
        return Err(DriverError::Mismatch("record was produced by a different workload".into()));
    }
    let r = replay_schedule(cfg, schedule)?;
    let expected = record.violations();
    let reproduced = match record {
        Record::Run { violations, .. } => *violations == r.violations,
        _ => expected.iter().all(|v| r.violations.contains(v)),
    };
    if !reproduced {
        return Err(DriverError::Mismatch("replay produced a different verdict".into()));
    }
    Ok(r)
}

pub fn replay_schedule(cfg: &RunConfig, schedule: &str) -> Result<RunResult, DriverError> {
    let w = cfg.workload()?;
    let s = parse_schedule(schedule).map_err(DriverError::Input)?;
    explore::replay(&w, cfg.checks(), &s).map_err(|e| match e {
        StepError::NotEnabled(c) => DriverError::Mismatch(format!("choice {c} is not enabled")),
        e => DriverError::Step(e),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Dot,
    Json,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Format, String> {
        match s {
            "dot" => Ok(Format::Dot),
            "json" => Ok(Format::Json),
            _ => Err(format!("unknown format {s:?}")),
        }
    }
}

pub fn export_history(h: &History, format: Format) -> String {
    match format {
        Format::Dot => h.to_dot(),
        Format::Json => h.to_json(),
    }
}

/// History reached by running `schedule`; the abstract one unless
/// `concrete` is set.
pub fn export_schedule(cfg: &RunConfig, schedule: &str, concrete: bool, format: Format) -> Result<String, DriverError> {
    let w = cfg.workload()?;
    let s = parse_schedule(schedule).map_err(DriverError::Input)?;
    let world = explore::execute(&w, &s).map_err(|e| match e {
        StepError::NotEnabled(c) => DriverError::Mismatch(format!("choice {c} is not enabled")),
        e => DriverError::Step(e),
    })?;
    let h = if concrete { &world.concrete } else { &world.cfg.history };
    Ok(export_history(h, format))
}

/// Oracle verdict for a serialized history. Candidate return values come
/// from the history's own arguments.
pub fn oracle(h: &History, spec: SpecKind, cap: usize) -> Result<OracleVerdict, DriverError> {
    let retvals = linoracle::retvals_for(spec, h.events().map(|e| e.arg));
    linoracle::is_linearizable(h, &spec, &retvals, cap).map_err(|e| DriverError::Input(e.to_string()))
}
