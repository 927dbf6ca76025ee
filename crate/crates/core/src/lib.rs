//! Deterministic concurrency test harness that checks linearizability of
//! concurrent data structures by building abstract histories at commitment
//! points.
//!
//! The pieces:
//! - [`history`]: partially ordered histories and their linear extensions.
//! - [`seqspec`]: sequential queue and set specifications.
//! - [`commitment`]: history updates, ghost state and the specification check.
//! - [`tsqueue`], [`hwqueue`], [`optset`]: instrumented step machines.
//! - [`simsched`] and [`explore`]: scheduling and schedule exploration.
//! - [`monitor`]: the checks run along every schedule.
//! - [`linoracle`]: brute-force linearizability, for cross-validation.

pub mod commitment;
pub mod config;
pub mod driver;
pub mod explore;
pub mod history;
pub mod hwqueue;
pub mod linoracle;
pub mod monitor;
pub mod optset;
pub mod report;
pub mod seqspec;
pub mod simsched;
pub mod tsqueue;
pub mod value;

pub use commitment::{check_abs, AbsVerdict, Configuration};
pub use explore::{exhaustive, random, replay, ExploreOptions, Exploration, RunResult, Status};
pub use history::{Event, EventId, History, OpResult};
pub use monitor::{Cadence, CheckConfig, Violation};
pub use seqspec::{member, QueueSpec, SeqSpec, SetSpec, SpecKind};
pub use simsched::{Call, Choice, Mutation, Structure, Workload, World};
pub use value::{Op, Value};
