//! Sequential specifications as replayable state machines.

use std::collections::{BTreeSet, VecDeque};
use std::fmt::Debug;
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::history::{step_states, Event};
use crate::value::{Op, Value};

/// A sequential specification: an initial state and a (possibly
/// nondeterministic) transition function. An empty result means the
/// operation is not allowed in that state.
pub trait SeqSpec {
    type State: Clone + Eq + Hash + Debug;

    fn initial(&self) -> Self::State;

    fn apply(&self, state: &Self::State, op: Op, arg: Value) -> Vec<(Self::State, Value)>;
}

/// FIFO queue. A dequeue on the empty queue is undefined.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct QueueSpec;

impl SeqSpec for QueueSpec {
    type State = VecDeque<Value>;

    fn initial(&self) -> Self::State {
        VecDeque::new()
    }

    fn apply(&self, state: &Self::State, op: Op, arg: Value) -> Vec<(Self::State, Value)> {
        match op {
            Op::Enq => {
                let mut next = state.clone();
                next.push_back(arg);
                vec![(next, Value::Unit)]
            }
            Op::Deq => {
                let mut next = state.clone();
                match next.pop_front() {
                    Some(front) => vec![(next, front)],
                    None => Vec::new(),
                }
            }
            _ => Vec::new(),
        }
    }
}

/// Integer set with insert, remove and membership test.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct SetSpec;

impl SeqSpec for SetSpec {
    type State = BTreeSet<i64>;

    fn initial(&self) -> Self::State {
        BTreeSet::new()
    }

    fn apply(&self, state: &Self::State, op: Op, arg: Value) -> Vec<(Self::State, Value)> {
        let Some(v) = arg.as_int() else {
            return Vec::new();
        };
        let mut next = state.clone();
        let ret = match op {
            Op::Insert => next.insert(v),
            Op::Remove => next.remove(&v),
            Op::Contains => next.contains(&v),
            _ => return Vec::new(),
        };
        vec![(next, Value::Bool(ret))]
    }
}

/// Runtime selection between the built-in specifications.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpecKind {
    Queue,
    Set,
}

/// State of a [`SpecKind`] machine.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SpecState {
    Queue(VecDeque<Value>),
    Set(BTreeSet<i64>),
}

impl SpecKind {
    pub fn parse(name: &str) -> Option<SpecKind> {
        match name {
            "queue" => Some(SpecKind::Queue),
            "set" => Some(SpecKind::Set),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpecKind::Queue => "queue",
            SpecKind::Set => "set",
        }
    }
}

impl SeqSpec for SpecKind {
    type State = SpecState;

    fn initial(&self) -> SpecState {
        match self {
            SpecKind::Queue => SpecState::Queue(QueueSpec.initial()),
            SpecKind::Set => SpecState::Set(SetSpec.initial()),
        }
    }

    fn apply(&self, state: &SpecState, op: Op, arg: Value) -> Vec<(SpecState, Value)> {
        match state {
            SpecState::Queue(q) => QueueSpec
                .apply(q, op, arg)
                .into_iter()
                .map(|(s, r)| (SpecState::Queue(s), r))
                .collect(),
            SpecState::Set(s) => SetSpec
                .apply(s, op, arg)
                .into_iter()
                .map(|(s, r)| (SpecState::Set(s), r))
                .collect(),
        }
    }
}

/// Whether replaying `seq` from the initial state can reproduce every
/// recorded result. Thread ids are ignored.
pub fn member<S: SeqSpec>(seq: &[Event], spec: &S) -> bool {
    final_states(seq, spec).is_some()
}

/// The states reachable after replaying `seq`, or `None` if it is rejected.
pub fn final_states<S: SeqSpec>(seq: &[Event], spec: &S) -> Option<Vec<S::State>> {
    let mut states = vec![spec.initial()];
    for ev in seq {
        if !ev.is_completed() {
            return None;
        }
        states = step_states(spec, &states, ev);
        if states.is_empty() {
            return None;
        }
    }
    Some(states)
}
