//! Run configuration read from TOML.
//!
//! ```toml
//! structure = "tsqueue"
//! mode = "exhaustive"
//! threads = [["enq 1", "deq"], ["enq 2"]]
//!
//! [caps]
//! retries = 2
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::explore::ExploreOptions;
use crate::monitor::{Cadence, CheckConfig};
use crate::seqspec::SpecKind;
use crate::simsched::{Call, Mutation, Structure, Workload};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("bad config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ModeKind {
    #[default]
    Exhaustive,
    Random,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Caps {
    /// Largest history checked against the specification or the oracle.
    #[serde(default = "default_events")]
    pub events: usize,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default = "default_steps")]
    pub steps: usize,
}

fn default_events() -> usize {
    24
}

fn default_retries() -> u32 {
    2
}

fn default_steps() -> usize {
    400
}

fn default_runs() -> usize {
    100
}

fn default_true() -> bool {
    true
}

fn default_one() -> usize {
    1
}

impl Default for Caps {
    fn default() -> Self {
        Caps { events: default_events(), retries: default_retries(), steps: default_steps() }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub structure: Structure,
    /// Defaults to the structure's own specification.
    #[serde(default)]
    pub spec: Option<SpecKind>,
    pub threads: Vec<Vec<String>>,
    #[serde(default)]
    pub seeds: Vec<String>,
    #[serde(default)]
    pub mode: ModeKind,
    #[serde(default)]
    pub seed: u64,
    /// Number of random runs.
    #[serde(default = "default_runs")]
    pub runs: usize,
    #[serde(default)]
    pub cadence: Cadence,
    #[serde(default)]
    pub mutations: Vec<Mutation>,
    #[serde(default)]
    pub caps: Caps,
    #[serde(default = "default_true")]
    pub crosscheck: bool,
    /// Require abstract histories to be interval orders.
    #[serde(default = "default_true")]
    pub abstract_interval_order: bool,
    /// Exhaustive mode stops after this many violations.
    #[serde(default = "default_one")]
    pub max_violations: usize,
    #[serde(default)]
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<RunConfig, ConfigError> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.workload()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_owned(), source })?;
        RunConfig::parse(&text)
    }

    /// The workload, after checking every field.
    pub fn workload(&self) -> Result<Workload, ConfigError> {
        if let Some(spec) = self.spec {
            if spec != self.structure.spec() {
                return Err(ConfigError::Invalid(format!(
                    "{} implements a {}, not a {}",
                    self.structure,
                    self.structure.spec().name(),
                    spec.name()
                )));
            }
        }
        if self.caps.events == 0 || self.caps.retries == 0 || self.caps.steps == 0 || self.runs == 0 {
            return Err(ConfigError::Invalid("caps and run count must be positive".into()));
        }
        let parse = |ops: &[String]| -> Result<Vec<Call>, ConfigError> {
            ops.iter().map(|s| s.parse().map_err(ConfigError::Invalid)).collect()
        };
        let threads = self.threads.iter().map(|t| parse(t)).collect::<Result<Vec<_>, _>>()?;
        let w = Workload {
            structure: self.structure,
            threads,
            seeds: parse(&self.seeds)?,
            max_retries: self.caps.retries,
            max_steps: self.caps.steps,
            mutations: self.mutations.iter().copied().collect(),
        };
        w.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if w.total_ops() > self.caps.events {
            return Err(ConfigError::Invalid(format!(
                "{} operations exceed the event cap of {}",
                w.total_ops(),
                self.caps.events
            )));
        }
        Ok(w)
    }

    pub fn checks(&self) -> CheckConfig {
        CheckConfig {
            cadence: self.cadence,
            max_events: self.caps.events,
            crosscheck: self.crosscheck,
            abstract_interval_order: self.abstract_interval_order,
        }
    }

    pub fn explore_options(&self, parallel: bool) -> ExploreOptions {
        ExploreOptions { checks: self.checks(), max_violations: self.max_violations.max(1), parallel }
    }
}
