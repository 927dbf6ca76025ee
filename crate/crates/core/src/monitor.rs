//! Checks run after every scheduler move and at the end of each schedule.

use std::collections::hash_map::DefaultHasher;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::hash::{Hash, Hasher};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::commitment::{check_abs, validate_hupd, AbsVerdict};
use crate::history::{step_states, EventSet, History, WfViolation};
use crate::linoracle;
use crate::seqspec::{SeqSpec, SpecKind, SpecState};
use crate::simsched::{Choice, Frame, Move, Outcome, Structure, ThreadCont, Workload, World};
use crate::value::{Op, Value};
use crate::{hwqueue, optset, tsqueue};

/// A failed check reported from inside a step machine.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Finding {
    pub check: &'static str,
    pub detail: String,
}

impl Finding {
    pub fn new(check: &'static str, detail: impl Into<String>) -> Finding {
        Finding { check, detail: detail.into() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Category {
    /// The history-update discipline or a commit failed.
    Checker,
    /// The abstract history admits a linearization the specification rejects.
    Spec,
    /// A structure invariant or loop invariant failed.
    Invariant,
    WellFormedness,
    /// The method passed but the brute-force oracle disagrees.
    Discrepancy,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Violation {
    pub category: Category,
    pub check: String,
    pub detail: String,
    /// Number of moves taken when the check failed.
    pub step: usize,
    /// Schedule prefix reproducing the failure.
    pub schedule: Vec<Choice>,
}

impl Violation {
    pub fn new(category: Category, check: impl Into<String>, detail: impl Into<String>) -> Violation {
        Violation { category, check: check.into(), detail: detail.into(), step: 0, schedule: Vec::new() }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{:?}] {} at step {}: {}", self.category, self.check, self.step, self.detail)
    }
}

/// When the abstract history is checked against the specification.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Cadence {
    /// Only at terminal states.
    End,
    /// Whenever an event was completed, and at terminal states.
    #[default]
    OnComplete,
    /// After every move.
    Paranoid,
}

impl FromStr for Cadence {
    type Err = String;

    fn from_str(s: &str) -> Result<Cadence, String> {
        match s {
            "end" => Ok(Cadence::End),
            "on-complete" => Ok(Cadence::OnComplete),
            "paranoid" => Ok(Cadence::Paranoid),
            _ => Err(format!("unknown cadence {s:?}")),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CheckConfig {
    pub cadence: Cadence,
    /// Largest history handed to the specification check and the oracle.
    pub max_events: usize,
    /// Run the brute-force oracle at terminal states.
    pub crosscheck: bool,
    /// Require the abstract history to be an interval order. Commitment
    /// edges between overlapping operations can break this, so turning it
    /// off shows whether anything else fails.
    #[serde(default = "yes")]
    pub abstract_interval_order: bool,
}

fn yes() -> bool {
    true
}

impl Default for CheckConfig {
    fn default() -> Self {
        CheckConfig { cadence: Cadence::OnComplete, max_events: 24, crosscheck: true, abstract_interval_order: true }
    }
}

/// Runs the checks; caches verdicts by history digest.
#[derive(Clone, Debug)]
pub struct Checker {
    pub config: CheckConfig,
    structure: Structure,
    spec: SpecKind,
    retvals: Vec<Value>,
    abs_cache: HashMap<u64, Option<Violation>>,
    oracle_cache: HashMap<u64, Option<Violation>>,
}

fn digest<T: Hash>(x: &T) -> u64 {
    let mut h = DefaultHasher::new();
    x.hash(&mut h);
    h.finish()
}

impl Checker {
    pub fn new(w: &Workload, config: CheckConfig) -> Checker {
        Checker {
            config,
            structure: w.structure,
            spec: w.structure.spec(),
            retvals: linoracle::retvals_for(w.structure.spec(), w.seeds.iter().chain(w.threads.iter().flatten()).map(|c| c.arg)),
            abs_cache: HashMap::new(),
            oracle_cache: HashMap::new(),
        }
    }

    /// Checks after a move from `before` to `after`.
    pub fn check_move(&mut self, before: &World, after: &World, out: &Outcome) -> Vec<Violation> {
        let mut v: Vec<Violation> = out
            .findings
            .iter()
            .map(|f| Violation::new(Category::Invariant, f.check, f.detail.clone()))
            .collect();
        for (name, h) in [("abstract", &after.cfg.history), ("concrete", &after.concrete)] {
            for wf in h.check_wf() {
                if name == "abstract" && !self.config.abstract_interval_order && matches!(wf, WfViolation::IntervalOrder { .. }) {
                    continue;
                }
                v.push(Violation::new(Category::WellFormedness, wf.name(), format!("{name} history: {wf:?}")));
            }
        }
        match out.kind {
            Move::Invoke => {
                if let Some(d) = invocation_rule(&before.cfg.history, &after.cfg.history) {
                    v.push(Violation::new(Category::Checker, "invocation-adds-event", d));
                }
            }
            Move::Step | Move::Ret => {
                if !validate_hupd(&before.cfg.history, &after.cfg.history) {
                    v.push(Violation::new(
                        Category::Checker,
                        "history-update",
                        "step removed order or changed an event",
                    ));
                }
            }
        }
        v.extend(self.structure_checks(after).into_iter().map(|f| Violation::new(Category::Invariant, f.check, f.detail)));
        if out.kind == Move::Step {
            v.extend(self.env_checks(before, after, out).into_iter().map(|f| Violation::new(Category::Invariant, f.check, f.detail)));
        }
        v.extend(bookkeeping(after));
        let run_abs = match self.config.cadence {
            Cadence::End => false,
            Cadence::OnComplete => after.cfg.history.completed() != before.cfg.history.completed(),
            Cadence::Paranoid => true,
        };
        if run_abs {
            v.extend(self.abs(&after.cfg.history));
        }
        for x in &mut v {
            x.step = after.steps;
        }
        v
    }

    fn structure_checks(&self, w: &World) -> Vec<crate::monitor::Finding> {
        let cfg = &w.cfg;
        let mut out = match self.structure {
            Structure::TsQueue => tsqueue::check_inv(cfg),
            Structure::HwQueue => hwqueue::check_inv(cfg),
            Structure::OptSet => optset::check_inv(cfg),
        };
        for (t, f) in w.frames() {
            out.extend(match f {
                Frame::Ts(f) => tsqueue::check_thread(cfg, t, &f),
                Frame::Hw(f) => hwqueue::check_thread(cfg, t, &f),
                Frame::Set(f) => optset::check_thread(cfg, t, &f),
            });
        }
        out
    }

    fn env_checks(&self, before: &World, after: &World, out: &Outcome) -> Vec<Finding> {
        match self.structure {
            Structure::TsQueue => {
                let frames: Vec<_> = before
                    .frames()
                    .into_iter()
                    .filter_map(|(t, f)| match f {
                        Frame::Ts(f) => Some((t, f)),
                        _ => None,
                    })
                    .collect();
                let refs: Vec<_> = frames.iter().map(|(t, f)| (*t, f)).collect();
                tsqueue::check_env_step(&before.cfg, &after.cfg, out.thread, &refs)
            }
            Structure::OptSet => match out.frame {
                Some(Frame::Set(f)) if f.op == Op::Contains && optset::nodes(&before.cfg) != optset::nodes(&after.cfg) => {
                    vec![Finding::new("contains-never-mutates", format!("thread {} changed the node store", out.thread))]
                }
                _ => Vec::new(),
            },
            Structure::HwQueue => Vec::new(),
        }
    }

    /// Specification check of the abstract history, cached.
    pub fn abs(&mut self, h: &History) -> Option<Violation> {
        let key = digest(&h.floor());
        if let Some(v) = self.abs_cache.get(&key) {
            return v.clone();
        }
        let v = match check_abs(h, &self.spec, self.config.max_events) {
            Ok(AbsVerdict::Pass) => None,
            Ok(AbsVerdict::Fail { counterexample }) => {
                let seq: Vec<_> = counterexample.iter().map(|e| e.label()).collect();
                Some(Violation::new(
                    Category::Spec,
                    "linearizations-satisfy-spec",
                    format!("rejected linearization [{}]", seq.join("; ")),
                ))
            }
            Err(e) => Some(Violation::new(Category::Checker, "history-size", e.to_string())),
        };
        self.abs_cache.insert(key, v.clone());
        v
    }

    /// Checks at a terminal world. `clean` says whether the schedule so far
    /// passed every check; only then is the oracle consulted.
    pub fn check_end(&mut self, w: &World, clean: bool) -> Vec<Violation> {
        let mut v = Vec::new();
        if !validate_hupd(&w.concrete, &w.cfg.history) {
            v.push(Violation::new(
                Category::Checker,
                "concrete-updates-to-abstract",
                "abstract history is not an update of the concrete one",
            ));
        }
        v.extend(self.abs(&w.cfg.history));
        if v.is_empty() {
            if let Some(d) = self.contents_match(w) {
                v.push(Violation::new(Category::Spec, "linearized-contents-match", d));
            }
        }
        if clean && v.is_empty() && self.config.crosscheck {
            let key = digest(&w.concrete);
            let (spec, retvals, cap) = (&self.spec, &self.retvals, self.config.max_events);
            let found = self
                .oracle_cache
                .entry(key)
                .or_insert_with(|| linoracle::crosscheck(&w.concrete, true, spec, retvals, cap).ok().flatten())
                .clone();
            v.extend(found);
        }
        for x in &mut v {
            x.step = w.steps;
        }
        v
    }

    fn contents_match(&self, w: &World) -> Option<String> {
        let actual = self.structure.contents(&w.cfg);
        let finals = final_states(&w.cfg.history.floor(), &self.spec);
        for s in &finals {
            let mut held: Vec<Value> = match s {
                SpecState::Queue(q) => q.iter().copied().collect(),
                SpecState::Set(s) => s.iter().map(|&x| Value::Int(x)).collect(),
            };
            held.sort();
            if held != actual {
                return Some(format!("a linearization ends holding {held:?}, the structure holds {actual:?}"));
            }
        }
        None
    }
}

/// The invocation rule: exactly one new uncompleted event, ordered after
/// every completed event, old events and order unchanged.
fn invocation_rule(before: &History, after: &History) -> Option<String> {
    let new = after.ids().minus(before.ids());
    if new.len() != 1 || !before.ids().is_subset(after.ids()) {
        return Some(format!("expected one new event, got {}", new.len()));
    }
    let e = new.first()?;
    if after.event(e).is_some_and(|ev| ev.is_completed()) {
        return Some(format!("{e} was created completed"));
    }
    if after.predecessors(e) != before.completed() {
        return Some(format!("{e} is not ordered after exactly the completed events"));
    }
    if !after.successors(e).is_empty() {
        return Some(format!("{e} has successors"));
    }
    for ev in before.events() {
        if after.event(ev.id) != Some(ev) || after.successors(ev.id).minus(new) != before.successors(ev.id) {
            return Some(format!("{} changed", ev.id));
        }
    }
    None
}

/// Running threads own exactly the pending concrete events, and each
/// thread's current event is its last one.
fn bookkeeping(w: &World) -> Vec<Violation> {
    let mut v = Vec::new();
    let mut active = EventSet::EMPTY;
    for (t, ts) in w.threads.iter().enumerate() {
        let last = w.concrete.last_of_thread(t);
        let expect_pending = !matches!(ts.cont, ThreadCont::Idle);
        if expect_pending {
            if let Some(e) = last {
                active.insert(e);
            }
            if w.cfg.current[t] != last || w.cfg.history.last_of_thread(t) != last {
                v.push(Violation::new(
                    Category::Checker,
                    "current-event-is-last",
                    format!("thread {t}: current {:?}, last {last:?}", w.cfg.current[t]),
                ));
            }
        } else if w.cfg.current[t].is_some() {
            v.push(Violation::new(Category::Checker, "current-event-is-last", format!("idle thread {t} has a current event")));
        }
    }
    if active != w.concrete.uncompleted() {
        v.push(Violation::new(
            Category::Checker,
            "pending-events-match-threads",
            format!("pending {:?}, in flight {:?}", w.concrete.uncompleted(), active),
        ));
    }
    v
}

/// Every specification state reachable at the end of some linearization of
/// `h`. Memoized over (placed events, state).
pub fn final_states<S: SeqSpec>(h: &History, spec: &S) -> HashSet<S::State> {
    let mut out = HashSet::new();
    let mut seen = HashSet::new();
    collect(h, spec, EventSet::EMPTY, spec.initial(), &mut seen, &mut out);
    out
}

fn collect<S: SeqSpec>(
    h: &History,
    spec: &S,
    placed: EventSet,
    state: S::State,
    seen: &mut HashSet<(EventSet, S::State)>,
    out: &mut HashSet<S::State>,
) {
    let all = h.ids();
    if placed == all {
        out.insert(state);
        return;
    }
    if !seen.insert((placed, state.clone())) {
        return;
    }
    for e in all.minus(placed).iter() {
        if !h.predecessors(e).is_subset(placed) {
            continue;
        }
        let ev = h.event(e).expect("event present");
        let mut now = placed;
        now.insert(e);
        for next in step_states(spec, std::slice::from_ref(&state), ev) {
            collect(h, spec, now, next, seen, out);
        }
    }
}
