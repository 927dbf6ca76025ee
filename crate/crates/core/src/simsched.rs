//! Deterministic step-by-step execution of operations under an explicit
//! schedule. Every thread runs its script in order; each scheduler move
//! invokes, steps or returns one thread.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeSet;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::commitment::{invoke_event, CommitError, Configuration, GhostState};
use crate::history::{EventId, History, HistoryError, MAX_EVENTS};
use crate::hwqueue::{self, HwFrame, HwShared};
use crate::monitor::Finding;
use crate::optset::{self, SetFrame, SetShared};
use crate::seqspec::SpecKind;
use crate::tsqueue::{self, TsFrame, TsShared};
use crate::value::{Op, ThreadId, Value};

/// Structure-specific shared memory.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DsState {
    None,
    Ts(TsShared),
    Hw(HwShared),
    Set(SetShared),
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SharedState {
    pub ds: DsState,
    pub arg: Vec<Value>,
    pub res: Vec<Value>,
}

impl SharedState {
    pub fn new(ds: DsState, threads: usize) -> SharedState {
        SharedState { ds, arg: vec![Value::Unit; threads], res: vec![Value::Unit; threads] }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Structure {
    #[serde(rename = "tsqueue")]
    TsQueue,
    #[serde(rename = "hwqueue")]
    HwQueue,
    #[serde(rename = "optset")]
    OptSet,
}

impl Structure {
    pub const ALL: [Structure; 3] = [Structure::TsQueue, Structure::HwQueue, Structure::OptSet];

    pub fn name(self) -> &'static str {
        match self {
            Structure::TsQueue => "tsqueue",
            Structure::HwQueue => "hwqueue",
            Structure::OptSet => "optset",
        }
    }

    pub fn spec(self) -> SpecKind {
        match self {
            Structure::TsQueue | Structure::HwQueue => SpecKind::Queue,
            Structure::OptSet => SpecKind::Set,
        }
    }

    pub fn supports(self, op: Op) -> bool {
        op.is_queue_op() == (self.spec() == SpecKind::Queue)
    }

    fn initial(self, threads: usize) -> (DsState, GhostState) {
        match self {
            Structure::TsQueue => (DsState::Ts(TsShared::new(threads)), GhostState::Ts(Default::default())),
            Structure::HwQueue => (DsState::Hw(HwShared::default()), GhostState::Slot(Default::default())),
            Structure::OptSet => (DsState::Set(SetShared::default()), GhostState::Node(Default::default())),
        }
    }

    /// Values the structure currently holds on behalf of completed
    /// operations, sorted.
    pub fn contents(self, cfg: &Configuration) -> Vec<Value> {
        let mut v = match self {
            Structure::TsQueue => tsqueue::queued_values(cfg),
            Structure::HwQueue => hwqueue::queued_values(cfg),
            Structure::OptSet => optset::members(cfg),
        };
        v.sort();
        v
    }
}

impl fmt::Display for Structure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Structure {
    type Err = String;

    fn from_str(s: &str) -> Result<Structure, String> {
        Structure::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| format!("unknown structure {s:?}"))
    }
}

/// Deliberate bugs used to check that the monitors catch real defects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mutation {
    /// Dequeue returns ⊥ after a sweep that found nothing.
    HwEmptiness,
    /// Dequeue accepts candidates younger than its start timestamp.
    #[serde(rename = "ts-skip-startts-guard")]
    TsSkipStartTsGuard,
    /// Dequeue commits neither scan edges nor removal edges.
    TsNoScanEdges,
    /// Insert and remove skip the `prev.next = curr && !prev.marked` check.
    SetSkipValidation,
    /// Removal orders the taken enqueue only before enqueues in the pools.
    #[serde(rename = "ts-inqueue-only-order")]
    TsInQueueOnlyOrder,
    /// Removal orders the taken enqueue only before untaken enqueues.
    HwUntakenOnlyOrder,
}

impl Mutation {
    pub const ALL: [Mutation; 6] = [
        Mutation::HwEmptiness,
        Mutation::TsSkipStartTsGuard,
        Mutation::TsNoScanEdges,
        Mutation::SetSkipValidation,
        Mutation::TsInQueueOnlyOrder,
        Mutation::HwUntakenOnlyOrder,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Mutation::HwEmptiness => "hw-emptiness",
            Mutation::TsSkipStartTsGuard => "ts-skip-startts-guard",
            Mutation::TsNoScanEdges => "ts-no-scan-edges",
            Mutation::SetSkipValidation => "set-skip-validation",
            Mutation::TsInQueueOnlyOrder => "ts-inqueue-only-order",
            Mutation::HwUntakenOnlyOrder => "hw-untaken-only-order",
        }
    }

    pub fn structure(self) -> Structure {
        match self {
            Mutation::HwEmptiness | Mutation::HwUntakenOnlyOrder => Structure::HwQueue,
            Mutation::TsSkipStartTsGuard | Mutation::TsNoScanEdges | Mutation::TsInQueueOnlyOrder => {
                Structure::TsQueue
            }
            Mutation::SetSkipValidation => Structure::OptSet,
        }
    }
}

impl fmt::Display for Mutation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Mutation {
    type Err = String;

    fn from_str(s: &str) -> Result<Mutation, String> {
        Mutation::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown mutation {s:?}"))
    }
}

/// Read-only context for a step.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct StepCtx {
    pub threads: usize,
    pub mutations: BTreeSet<Mutation>,
}

impl StepCtx {
    pub fn new(threads: usize, mutations: BTreeSet<Mutation>) -> StepCtx {
        StepCtx { threads, mutations }
    }

    pub fn has(&self, m: Mutation) -> bool {
        self.mutations.contains(&m)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Effect {
    Continue,
    Finished(Value),
    /// The operation restarts from its first step.
    Retry,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StepOutput {
    pub effect: Effect,
    /// Checks evaluated inside the step, at a commitment point.
    pub findings: Vec<Finding>,
}

impl StepOutput {
    pub fn cont() -> StepOutput {
        StepOutput { effect: Effect::Continue, findings: Vec::new() }
    }

    pub fn finished(v: Value) -> StepOutput {
        StepOutput { effect: Effect::Finished(v), findings: Vec::new() }
    }

    pub fn retry() -> StepOutput {
        StepOutput { effect: Effect::Retry, findings: Vec::new() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Frame {
    Ts(TsFrame),
    Hw(HwFrame),
    Set(SetFrame),
}

impl Frame {
    fn start(s: Structure, op: Op, arg: Value) -> Option<Frame> {
        match s {
            Structure::TsQueue => TsFrame::start(op, arg).map(Frame::Ts),
            Structure::HwQueue => HwFrame::start(op, arg).map(Frame::Hw),
            Structure::OptSet => SetFrame::start(op, arg).map(Frame::Set),
        }
    }

    pub fn arity(&self, threads: usize) -> usize {
        match self {
            Frame::Ts(f) => f.arity(threads),
            _ => 1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ThreadCont {
    Idle,
    Running(Frame),
    /// The operation has its result and waits for the return move.
    Done,
    /// Retry bound exceeded; the operation never returns.
    Stuck,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ThreadState {
    pub cont: ThreadCont,
    /// Index of the next script entry to invoke.
    pub next: usize,
    pub retries: u32,
}

/// An operation call in a thread script.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Call {
    pub op: Op,
    pub arg: Value,
}

impl Call {
    pub fn new(op: Op, arg: Value) -> Call {
        Call { op, arg }
    }
}

impl fmt::Display for Call {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.arg {
            Value::Unit => write!(f, "{}", self.op),
            a => write!(f, "{} {a}", self.op),
        }
    }
}

impl FromStr for Call {
    type Err = String;

    /// Parses `"enq 1"`, `"deq"`, `"insert 3"` and similar.
    fn from_str(s: &str) -> Result<Call, String> {
        let mut parts = s.split_whitespace();
        let name = parts.next().ok_or("empty operation")?;
        let op = Op::parse(name).ok_or_else(|| format!("unknown operation {name:?}"))?;
        let arg = match parts.next() {
            Some(a) => Value::Int(a.parse().map_err(|_| format!("bad argument {a:?}"))?),
            None => Value::Unit,
        };
        if parts.next().is_some() {
            return Err(format!("trailing input in {s:?}"));
        }
        let needs_arg = op != Op::Deq;
        if needs_arg != matches!(arg, Value::Int(_)) {
            return Err(format!("{op} takes {} argument", if needs_arg { "one" } else { "no" }));
        }
        Ok(Call { op, arg })
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Workload {
    pub structure: Structure,
    /// Per-thread scripts, invoked in order.
    pub threads: Vec<Vec<Call>>,
    /// Calls run to completion on thread 0 before the concurrent phase.
    #[serde(default)]
    pub seeds: Vec<Call>,
    pub max_retries: u32,
    pub max_steps: usize,
    #[serde(default)]
    pub mutations: BTreeSet<Mutation>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WorkloadError {
    #[error("workload has no threads")]
    NoThreads,
    #[error("bounds must be positive")]
    Bounds,
    #[error("{0} does not support {1}")]
    Unsupported(Structure, Op),
    #[error("mutation {0} does not apply to {1}")]
    Mutation(Mutation, Structure),
    #[error("{0} operations exceed the limit of {1}")]
    TooManyEvents(usize, usize),
    #[error("at most 64 threads are supported")]
    TooManyThreads,
}

impl Workload {
    pub fn new(structure: Structure, threads: Vec<Vec<Call>>) -> Workload {
        Workload { structure, threads, seeds: Vec::new(), max_retries: 2, max_steps: 400, mutations: BTreeSet::new() }
    }

    pub fn with_seeds(mut self, seeds: Vec<Call>) -> Workload {
        self.seeds = seeds;
        self
    }

    pub fn with_mutation(mut self, m: Mutation) -> Workload {
        self.mutations.insert(m);
        self
    }

    pub fn total_ops(&self) -> usize {
        self.seeds.len() + self.threads.iter().map(Vec::len).sum::<usize>()
    }

    pub fn validate(&self) -> Result<(), WorkloadError> {
        if self.threads.is_empty() {
            return Err(WorkloadError::NoThreads);
        }
        if self.threads.len() > 64 {
            return Err(WorkloadError::TooManyThreads);
        }
        if self.max_retries == 0 || self.max_steps == 0 {
            return Err(WorkloadError::Bounds);
        }
        for c in self.seeds.iter().chain(self.threads.iter().flatten()) {
            if !self.structure.supports(c.op) {
                return Err(WorkloadError::Unsupported(self.structure, c.op));
            }
        }
        if let Some(m) = self.mutations.iter().find(|m| m.structure() != self.structure) {
            return Err(WorkloadError::Mutation(*m, self.structure));
        }
        if self.total_ops() > MAX_EVENTS {
            return Err(WorkloadError::TooManyEvents(self.total_ops(), MAX_EVENTS));
        }
        Ok(())
    }

    pub fn ctx(&self) -> StepCtx {
        StepCtx::new(self.threads.len(), self.mutations.clone())
    }

    /// Stable digest used to tie recorded schedules to their workload.
    pub fn digest(&self) -> String {
        let json = serde_json::to_string(self).expect("workload serializes");
        let mut h = DefaultHasher::new();
        json.hash(&mut h);
        format!("{:016x}", h.finish())
    }
}

/// One scheduler move: thread, and the internal branch for steps that have
/// more than one.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Choice {
    pub thread: ThreadId,
    #[serde(default, skip_serializing_if = "is_zero")]
    pub branch: usize,
}

fn is_zero(b: &usize) -> bool {
    *b == 0
}

impl Choice {
    pub fn new(thread: ThreadId, branch: usize) -> Choice {
        Choice { thread, branch }
    }
}

impl fmt::Display for Choice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.branch == 0 {
            write!(f, "{}", self.thread)
        } else {
            write!(f, "{}.{}", self.thread, self.branch)
        }
    }
}

pub type Schedule = Vec<Choice>;

/// Renders a schedule as space-separated `thread[.branch]` tokens.
pub fn format_schedule(s: &[Choice]) -> String {
    s.iter().map(Choice::to_string).collect::<Vec<_>>().join(" ")
}

pub fn parse_schedule(s: &str) -> Result<Schedule, String> {
    s.split_whitespace()
        .map(|tok| {
            let (t, b) = tok.split_once('.').unwrap_or((tok, "0"));
            let thread = t.parse().map_err(|_| format!("bad thread in {tok:?}"))?;
            let branch = b.parse().map_err(|_| format!("bad branch in {tok:?}"))?;
            Ok(Choice { thread, branch })
        })
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Move {
    Invoke,
    Step,
    Ret,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum StepError {
    #[error("thread {0} is not idle")]
    NotIdle(ThreadId),
    #[error("choice {0} is not enabled")]
    NotEnabled(Choice),
    #[error("thread {0} cannot run {1}")]
    BadCall(ThreadId, Call),
    #[error("seed call {0} did not finish")]
    Seed(Call),
    #[error(transparent)]
    Commit(#[from] CommitError),
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error(transparent)]
    Workload(#[from] WorkloadError),
}

/// What a move did.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Outcome {
    pub kind: Move,
    pub thread: ThreadId,
    /// The frame before the move, for step moves.
    pub frame: Option<Frame>,
    pub findings: Vec<Finding>,
}

/// A configuration together with the concrete history and per-thread
/// control state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct World {
    pub cfg: Configuration,
    /// History built only from invocations and returns.
    pub concrete: History,
    pub threads: Vec<ThreadState>,
    /// Moves taken since the concurrent phase began.
    pub steps: usize,
}

impl World {
    /// Builds the initial world and runs the seed calls solo on thread 0.
    pub fn new(w: &Workload) -> Result<World, StepError> {
        w.validate()?;
        let n = w.threads.len();
        let (ds, ghost) = w.structure.initial(n);
        let mut world = World {
            cfg: Configuration::new(SharedState::new(ds, n), ghost, n),
            concrete: History::new(),
            threads: vec![ThreadState { cont: ThreadCont::Idle, next: 0, retries: 0 }; n],
            steps: 0,
        };
        let ctx = w.ctx();
        for &call in &w.seeds {
            world.start(w.structure, 0, call)?;
            let mut budget = w.max_steps;
            while matches!(world.threads[0].cont, ThreadCont::Running(_)) {
                if budget == 0 {
                    return Err(StepError::Seed(call));
                }
                budget -= 1;
                world.step_thread(w, &ctx, 0, 0)?;
            }
            if world.threads[0].cont != ThreadCont::Done {
                return Err(StepError::Seed(call));
            }
            world.ret(0)?;
        }
        for t in &mut world.threads {
            *t = ThreadState { cont: ThreadCont::Idle, next: 0, retries: 0 };
        }
        Ok(world)
    }

    /// Moves enabled in this world, in thread order.
    pub fn choices(&self, w: &Workload) -> Vec<Choice> {
        let mut out = Vec::new();
        for (t, ts) in self.threads.iter().enumerate() {
            match ts.cont {
                ThreadCont::Idle if ts.next < w.threads[t].len() => out.push(Choice::new(t, 0)),
                ThreadCont::Running(f) => {
                    out.extend((0..f.arity(w.threads.len())).map(|b| Choice::new(t, b)));
                }
                ThreadCont::Done => out.push(Choice::new(t, 0)),
                _ => {}
            }
        }
        out
    }

    pub fn is_enabled(&self, w: &Workload, c: Choice) -> bool {
        match self.threads.get(c.thread).map(|t| t.cont) {
            Some(ThreadCont::Idle) => c.branch == 0 && self.threads[c.thread].next < w.threads[c.thread].len(),
            Some(ThreadCont::Running(f)) => c.branch < f.arity(w.threads.len()),
            Some(ThreadCont::Done) => c.branch == 0,
            _ => false,
        }
    }

    /// No enabled moves, or the step bound is reached.
    pub fn is_terminal(&self, w: &Workload) -> bool {
        self.steps >= w.max_steps || self.choices(w).is_empty()
    }

    /// Some operation was cut off by a bound.
    pub fn bound_exhausted(&self, w: &Workload) -> bool {
        self.threads.iter().any(|t| t.cont == ThreadCont::Stuck)
            || (self.steps >= w.max_steps && !self.choices(w).is_empty())
    }

    pub fn advance(&mut self, w: &Workload, ctx: &StepCtx, c: Choice) -> Result<Outcome, StepError> {
        if !self.is_enabled(w, c) {
            return Err(StepError::NotEnabled(c));
        }
        let t = c.thread;
        let out = match self.threads[t].cont {
            ThreadCont::Idle => {
                let call = w.threads[t][self.threads[t].next];
                self.start(w.structure, t, call)?;
                Outcome { kind: Move::Invoke, thread: t, frame: None, findings: Vec::new() }
            }
            ThreadCont::Running(f) => {
                let findings = self.step_thread(w, ctx, t, c.branch)?;
                Outcome { kind: Move::Step, thread: t, frame: Some(f), findings }
            }
            ThreadCont::Done => {
                self.ret(t)?;
                self.threads[t].next += 1;
                Outcome { kind: Move::Ret, thread: t, frame: None, findings: Vec::new() }
            }
            ThreadCont::Stuck => return Err(StepError::NotEnabled(c)),
        };
        self.steps += 1;
        Ok(out)
    }

    fn start(&mut self, s: Structure, t: ThreadId, call: Call) -> Result<(), StepError> {
        if self.threads[t].cont != ThreadCont::Idle {
            return Err(StepError::NotIdle(t));
        }
        let frame = Frame::start(s, call.op, call.arg).ok_or(StepError::BadCall(t, call))?;
        let id = invoke_event(&mut self.cfg, t, call.op, call.arg)?;
        let cid = self.concrete.invoke(t, call.op, call.arg)?;
        debug_assert_eq!(id, cid);
        self.threads[t].cont = ThreadCont::Running(frame);
        self.threads[t].retries = 0;
        Ok(())
    }

    fn step_thread(&mut self, w: &Workload, ctx: &StepCtx, t: ThreadId, branch: usize) -> Result<Vec<Finding>, StepError> {
        let ThreadCont::Running(mut frame) = self.threads[t].cont else {
            return Err(StepError::NotEnabled(Choice::new(t, branch)));
        };
        let out = match &mut frame {
            Frame::Ts(f) => tsqueue::step(&mut self.cfg, t, f, branch, ctx)?,
            Frame::Hw(f) => hwqueue::step(&mut self.cfg, t, f, ctx)?,
            Frame::Set(f) => optset::step(&mut self.cfg, t, f, ctx)?,
        };
        let ts = &mut self.threads[t];
        ts.cont = ThreadCont::Running(frame);
        match out.effect {
            Effect::Continue => {}
            Effect::Finished(v) => {
                self.cfg.state.res[t] = v;
                ts.cont = ThreadCont::Done;
            }
            Effect::Retry => {
                ts.retries += 1;
                if ts.retries > w.max_retries {
                    ts.cont = ThreadCont::Stuck;
                }
            }
        }
        Ok(out.findings)
    }

    fn ret(&mut self, t: ThreadId) -> Result<(), StepError> {
        let id = self.concrete.last_of_thread(t).ok_or(StepError::NotIdle(t))?;
        self.concrete.complete_event(id, self.cfg.state.res[t])?;
        self.cfg.current[t] = None;
        self.threads[t].cont = ThreadCont::Idle;
        Ok(())
    }

    /// Frames of running threads.
    pub fn frames(&self) -> Vec<(ThreadId, Frame)> {
        self.threads
            .iter()
            .enumerate()
            .filter_map(|(t, ts)| match ts.cont {
                ThreadCont::Running(f) => Some((t, f)),
                _ => None,
            })
            .collect()
    }

    /// Events of threads with an operation in flight.
    pub fn active_events(&self) -> Vec<(ThreadId, Option<EventId>)> {
        self.threads
            .iter()
            .enumerate()
            .filter(|(_, ts)| !matches!(ts.cont, ThreadCont::Idle))
            .map(|(t, _)| (t, self.concrete.last_of_thread(t)))
            .collect()
    }

    /// 128-bit digest of everything that determines future behavior. The
    /// step counter is left out.
    pub fn fingerprint(&self) -> u128 {
        let half = |salt: u64| {
            let mut h = DefaultHasher::new();
            salt.hash(&mut h);
            self.cfg.hash(&mut h);
            self.concrete.hash(&mut h);
            self.threads.hash(&mut h);
            h.finish()
        };
        (u128::from(half(0)) << 64) | u128::from(half(1))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn calls(s: &[&str]) -> Vec<Call> {
        s.iter().map(|c| c.parse().unwrap()).collect()
    }

    fn run_to_end(w: &Workload, world: &mut World, pick: impl Fn(&[Choice]) -> Choice) {
        let ctx = w.ctx();
        while !world.is_terminal(w) {
            let c = pick(&world.choices(w));
            world.advance(w, &ctx, c).unwrap();
        }
    }

    #[test]
    fn call_parsing() {
        assert_eq!("enq 1".parse::<Call>(), Ok(Call::new(Op::Enq, Value::Int(1))));
        assert_eq!("deq".parse::<Call>(), Ok(Call::new(Op::Deq, Value::Unit)));
        assert!("deq 1".parse::<Call>().is_err());
        assert!("insert".parse::<Call>().is_err());
        assert!("pop 1".parse::<Call>().is_err());
        assert_eq!(Call::new(Op::Insert, Value::Int(3)).to_string().parse::<Call>().unwrap().arg, Value::Int(3));
    }

    #[test]
    fn schedule_round_trip() {
        let s = vec![Choice::new(0, 0), Choice::new(2, 1), Choice::new(1, 0)];
        assert_eq!(format_schedule(&s), "0 2.1 1");
        assert_eq!(parse_schedule("0 2.1 1").unwrap(), s);
        assert!(parse_schedule("x").is_err());
    }

    #[test]
    fn invoke_adds_event_after_completed() {
        let w = Workload::new(Structure::HwQueue, vec![calls(&["enq 1"]), calls(&["enq 2"])]);
        let mut world = World::new(&w).unwrap();
        let ctx = w.ctx();
        for _ in 0..4 {
            world.advance(&w, &ctx, Choice::new(0, 0)).unwrap();
        }
        assert!(world.advance(&w, &ctx, Choice::new(0, 0)).is_err());
        world.advance(&w, &ctx, Choice::new(1, 0)).unwrap();
        let (a, b) = (EventId(0), EventId(1));
        assert!(world.concrete.precedes(a, b));
        assert!(world.cfg.history.precedes(a, b));
    }

    #[test]
    fn finished_operation_completes_concrete_event_on_return() {
        let w = Workload::new(Structure::HwQueue, vec![calls(&["enq 7", "deq"])]);
        let mut world = World::new(&w).unwrap();
        run_to_end(&w, &mut world, |c| c[0]);
        let evs: Vec<_> = world.concrete.events().map(|e| e.result.value()).collect();
        assert_eq!(evs, vec![Some(Value::Unit), Some(Value::Int(7))]);
        assert!(!world.bound_exhausted(&w));
    }

    #[test]
    fn dequeue_on_empty_gets_stuck_after_retries() {
        let w = Workload::new(Structure::TsQueue, vec![calls(&["deq"])]);
        let mut world = World::new(&w).unwrap();
        run_to_end(&w, &mut world, |c| c[0]);
        assert_eq!(world.threads[0].cont, ThreadCont::Stuck);
        assert!(world.bound_exhausted(&w));
        assert_eq!(world.concrete.uncompleted().len(), 1);
    }

    #[test]
    fn seeds_run_before_the_concurrent_phase() {
        let w = Workload::new(Structure::OptSet, vec![calls(&["contains 2"])]).with_seeds(calls(&["insert 1", "insert 2"]));
        let mut world = World::new(&w).unwrap();
        assert_eq!(world.steps, 0);
        assert_eq!(world.concrete.len(), 2);
        run_to_end(&w, &mut world, |c| c[0]);
        assert_eq!(world.concrete.event(EventId(2)).unwrap().result.value(), Some(Value::Bool(true)));
    }

    #[test]
    fn workload_validation() {
        let bad = Workload::new(Structure::OptSet, vec![calls(&["enq 1"])]);
        assert!(matches!(bad.validate(), Err(WorkloadError::Unsupported(..))));
        let bad = Workload::new(Structure::OptSet, vec![calls(&["insert 1"])]).with_mutation(Mutation::HwEmptiness);
        assert!(matches!(bad.validate(), Err(WorkloadError::Mutation(..))));
        assert!(Workload::new(Structure::OptSet, vec![]).validate().is_err());
    }

    #[test]
    fn mutation_names_round_trip() {
        for m in Mutation::ALL {
            assert_eq!(m.name().parse::<Mutation>(), Ok(m));
            assert_eq!(serde_json::to_string(&m).unwrap(), format!("\"{}\"", m.name()));
        }
    }
}
