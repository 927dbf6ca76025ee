//! Abstract-history construction: event creation on invocation, history
//! updates at commitment points, ghost state, and the update discipline.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::history::{step_states, EventId, EventSet, History, HistoryError, SeqHistory};
use crate::optset::NodeId;
use crate::seqspec::SeqSpec;
use crate::simsched::SharedState;
use crate::tsqueue::Timestamp;
use crate::value::{Op, ThreadId, Value};

/// Proof-only state kept next to the abstract history.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GhostState {
    #[default]
    None,
    Ts(BTreeMap<EventId, Timestamp>),
    Slot(BTreeMap<EventId, usize>),
    Node(BTreeMap<EventId, NodeId>),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GhostValue {
    Ts(Timestamp),
    Slot(usize),
    Node(NodeId),
}

impl GhostState {
    pub fn ts(&self) -> Option<&BTreeMap<EventId, Timestamp>> {
        match self {
            GhostState::Ts(m) => Some(m),
            _ => None,
        }
    }

    pub fn slot(&self) -> Option<&BTreeMap<EventId, usize>> {
        match self {
            GhostState::Slot(m) => Some(m),
            _ => None,
        }
    }

    pub fn node(&self) -> Option<&BTreeMap<EventId, NodeId>> {
        match self {
            GhostState::Node(m) => Some(m),
            _ => None,
        }
    }

    fn set(&mut self, id: EventId, value: GhostValue) -> Result<(), CommitError> {
        match (self, value) {
            (GhostState::Ts(m), GhostValue::Ts(v)) => {
                m.insert(id, v);
            }
            (GhostState::Slot(m), GhostValue::Slot(v)) => {
                m.insert(id, v);
            }
            (GhostState::Node(m), GhostValue::Node(v)) => {
                m.insert(id, v);
            }
            _ => return Err(CommitError::GhostKind),
        }
        Ok(())
    }
}

/// Structure state, abstract history and ghost state, plus the event each
/// thread is currently executing.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Configuration {
    pub state: SharedState,
    pub history: History,
    pub ghost: GhostState,
    pub current: Vec<Option<EventId>>,
}

/// An update performed at a commitment point.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CommitAction {
    AddEdges(Vec<(EventId, EventId)>),
    Complete(EventId, Value),
    SetGhost(EventId, GhostValue),
    Compose(Vec<CommitAction>),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CommitError {
    #[error(transparent)]
    History(#[from] HistoryError),
    #[error("thread {0} already has an uncompleted event")]
    PendingEvent(ThreadId),
    #[error("thread {0} has no current event")]
    NoCurrentEvent(ThreadId),
    #[error("ghost update does not match the ghost state kind")]
    GhostKind,
    #[error("update is not a history update (events changed or order shrank)")]
    Discipline,
}

impl Configuration {
    pub fn new(state: SharedState, ghost: GhostState, threads: usize) -> Configuration {
        Configuration { state, history: History::new(), ghost, current: vec![None; threads] }
    }
}

/// Creates the event for a new invocation by thread `t`, ordered after every
/// completed event. Only `arg[t]` changes in the structure state.
pub fn invoke_event(cfg: &mut Configuration, t: ThreadId, op: Op, arg: Value) -> Result<EventId, CommitError> {
    let pending = cfg
        .history
        .events()
        .any(|e| e.thread == t && !e.is_completed());
    if pending || cfg.current[t].is_some() {
        return Err(CommitError::PendingEvent(t));
    }
    let id = cfg.history.invoke(t, op, arg)?;
    cfg.state.arg[t] = arg;
    cfg.current[t] = Some(id);
    Ok(id)
}

/// The event of the operation thread `t` is executing.
pub fn my_eid(cfg: &Configuration, t: ThreadId) -> Result<EventId, CommitError> {
    cfg.current.get(t).copied().flatten().ok_or(CommitError::NoCurrentEvent(t))
}

/// Applies a commitment action atomically and checks that the history change
/// is a history update. On error the configuration is left untouched.
pub fn apply_commit(cfg: &mut Configuration, action: CommitAction) -> Result<(), CommitError> {
    let mut history = cfg.history.clone();
    let mut ghost = cfg.ghost.clone();
    apply_into(&mut history, &mut ghost, action)?;
    if !validate_hupd(&cfg.history, &history) {
        return Err(CommitError::Discipline);
    }
    cfg.history = history;
    cfg.ghost = ghost;
    Ok(())
}

fn apply_into(h: &mut History, g: &mut GhostState, action: CommitAction) -> Result<(), CommitError> {
    match action {
        CommitAction::AddEdges(edges) => h.add_edges(edges)?,
        CommitAction::Complete(id, v) => h.complete_event(id, v)?,
        CommitAction::SetGhost(id, v) => g.set(id, v)?,
        CommitAction::Compose(parts) => {
            for p in parts {
                apply_into(h, g, p)?;
            }
        }
    }
    Ok(())
}

/// Whether `after` is reachable from `before` by adding order edges and
/// completing uncompleted events, keeping thread, operation and argument.
pub fn validate_hupd(before: &History, after: &History) -> bool {
    if before.ids() != after.ids() {
        return false;
    }
    for (a, b) in before.events().zip(after.events()) {
        if (a.thread, a.op, a.arg) != (b.thread, b.op, b.arg) {
            return false;
        }
        if a.is_completed() && a.result != b.result {
            return false;
        }
    }
    before.order_pairs().into_iter().all(|(x, y)| after.precedes(x, y))
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AbsVerdict {
    Pass,
    /// A linearization of the completed part that the specification rejects.
    Fail { counterexample: SeqHistory },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("{events} completed events exceed the cap of {cap}")]
pub struct SizeLimit {
    pub events: usize,
    pub cap: usize,
}

/// Checks that every linear extension of the completed part of `h` is
/// accepted by `spec`.
pub fn check_abs<S: SeqSpec>(h: &History, spec: &S, cap: usize) -> Result<AbsVerdict, SizeLimit> {
    let f = h.floor();
    if f.len() > cap {
        return Err(SizeLimit { events: f.len(), cap });
    }
    let mut search = AbsSearch { h: &f, spec, all: f.ids(), good: HashSet::new() };
    match search.find_rejected(EventSet::EMPTY, vec![spec.initial()]) {
        None => Ok(AbsVerdict::Pass),
        Some(order) => {
            let counterexample = order.iter().map(|&i| *f.event(i).unwrap()).collect();
            Ok(AbsVerdict::Fail { counterexample })
        }
    }
}

struct AbsSearch<'a, S: SeqSpec> {
    h: &'a History,
    spec: &'a S,
    all: EventSet,
    good: HashSet<(EventSet, Vec<S::State>)>,
}

impl<S: SeqSpec> AbsSearch<'_, S> {
    fn minimal(&self, placed: EventSet) -> Vec<EventId> {
        self.all
            .minus(placed)
            .iter()
            .filter(|&e| self.h.predecessors(e).intersect(self.all).is_subset(placed))
            .collect()
    }

    fn find_rejected(&mut self, placed: EventSet, states: Vec<S::State>) -> Option<Vec<EventId>> {
        if placed == self.all {
            return None;
        }
        let key = (placed, states);
        if self.good.contains(&key) {
            return None;
        }
        for e in self.minimal(placed) {
            let ev = self.h.event(e).unwrap();
            let next = step_states(self.spec, &key.1, ev);
            let mut now = placed;
            now.insert(e);
            if next.is_empty() {
                let mut out = vec![e];
                out.extend(self.any_completion(now));
                return Some(out);
            }
            if let Some(rest) = self.find_rejected(now, next) {
                let mut out = vec![e];
                out.extend(rest);
                return Some(out);
            }
        }
        self.good.insert(key);
        None
    }

    fn any_completion(&self, mut placed: EventSet) -> Vec<EventId> {
        let mut out = Vec::new();
        while placed != self.all {
            let e = self.minimal(placed)[0];
            placed.insert(e);
            out.push(e);
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::history::{Event, OpResult};
    use crate::seqspec::QueueSpec;

    fn cfg(threads: usize) -> Configuration {
        Configuration::new(SharedState::new(crate::simsched::DsState::None, threads), GhostState::None, threads)
    }

    #[test]
    fn invocation_orders_after_completed_events_only() {
        let mut c = cfg(3);
        let a = invoke_event(&mut c, 0, Op::Enq, Value::Int(1)).unwrap();
        assert!(c.history.order_pairs().is_empty());
        apply_commit(&mut c, CommitAction::Complete(a, Value::Unit)).unwrap();
        c.current[0] = None;
        let u = invoke_event(&mut c, 1, Op::Enq, Value::Int(2)).unwrap();
        let n = invoke_event(&mut c, 2, Op::Deq, Value::Unit).unwrap();
        assert_eq!(c.history.predecessors(n), EventSet::single(a));
        assert!(!c.history.precedes(u, n));
        assert_eq!(c.state.arg[2], Value::Unit);
        assert_eq!(c.state.arg[1], Value::Int(2));
        assert_eq!(my_eid(&c, 2), Ok(n));
    }

    #[test]
    fn second_invocation_without_completion_is_rejected() {
        let mut c = cfg(1);
        invoke_event(&mut c, 0, Op::Enq, Value::Int(1)).unwrap();
        assert_eq!(invoke_event(&mut c, 0, Op::Enq, Value::Int(2)), Err(CommitError::PendingEvent(0)));
        assert_eq!(my_eid(&cfg(1), 0), Err(CommitError::NoCurrentEvent(0)));
    }

    #[test]
    fn failed_commit_leaves_configuration_intact() {
        let mut c = cfg(2);
        let a = invoke_event(&mut c, 0, Op::Deq, Value::Unit).unwrap();
        let b = invoke_event(&mut c, 1, Op::Deq, Value::Unit).unwrap();
        let before = c.clone();
        let bad = CommitAction::AddEdges(vec![(a, b)]);
        assert!(matches!(
            apply_commit(&mut c, bad),
            Err(CommitError::History(HistoryError::SourceUncompleted { .. }))
        ));
        assert_eq!(c, before);
        apply_commit(&mut c, CommitAction::Compose(vec![])).unwrap();
        assert_eq!(c, before);
    }

    #[test]
    fn hupd_accepts_edges_and_completions_only() {
        let mut h = History::new();
        let a = h.invoke(0, Op::Enq, Value::Int(1)).unwrap();
        let b = h.invoke(1, Op::Enq, Value::Int(2)).unwrap();
        assert!(validate_hupd(&h, &h));
        let mut h2 = h.clone();
        h2.complete_event(a, Value::Unit).unwrap();
        h2.add_edges([(a, b)]).unwrap();
        assert!(validate_hupd(&h, &h2));
        assert!(!validate_hupd(&h2, &h));
        let renamed = History::from_raw(
            h.events().map(|e| if e.id == b { Event { op: Op::Deq, ..*e } } else { *e }),
            [],
        )
        .unwrap();
        assert!(!validate_hupd(&h, &renamed));
    }

    fn fig2(deq_ret: i64, enq2_first: bool) -> History {
        let e = |i| EventId(i);
        let enq = |i: u32, t, v| Event { id: e(i), thread: t, op: Op::Enq, arg: Value::Int(v), result: OpResult::Done(Value::Unit) };
        let deq = Event { id: e(3), thread: 2, op: Op::Deq, arg: Value::Unit, result: OpResult::Done(Value::Int(deq_ret)) };
        let mut h = History::from_raw([enq(0, 0, 1), enq(1, 1, 2), enq(2, 0, 3), deq], []).unwrap();
        h.add_edges([(e(0), e(2)), (e(0), e(3)), (e(1), e(3)), (e(2), e(3))]).unwrap();
        if enq2_first {
            h.add_edges([(e(1), e(0))]).unwrap();
        } else {
            h.add_edges([(e(0), e(1))]).unwrap();
        }
        h
    }

    #[test]
    fn abs_accepts_committed_enqueue_order() {
        assert_eq!(check_abs(&History::new(), &QueueSpec, 16), Ok(AbsVerdict::Pass));
        assert_eq!(check_abs(&fig2(1, false), &QueueSpec, 16), Ok(AbsVerdict::Pass));
        assert_eq!(check_abs(&fig2(2, true), &QueueSpec, 16), Ok(AbsVerdict::Pass));
    }

    #[test]
    fn abs_reports_a_rejected_linearization() {
        match check_abs(&fig2(3, true), &QueueSpec, 16).unwrap() {
            AbsVerdict::Fail { counterexample } => {
                assert_eq!(counterexample.len(), 4);
                assert!(!crate::seqspec::member(&counterexample, &QueueSpec));
            }
            AbsVerdict::Pass => panic!("expected failure"),
        }
        assert_eq!(check_abs(&fig2(1, false), &QueueSpec, 2), Err(SizeLimit { events: 4, cap: 2 }));
    }
}
