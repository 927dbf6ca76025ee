//! Events, partially ordered histories and the operations over them.

use std::collections::HashSet;
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seqspec::SeqSpec;
use crate::value::{Op, ThreadId, Value};

/// Histories are stored as bitsets, so one history holds at most this many
/// event ids.
pub const MAX_EVENTS: usize = 64;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventId(pub u32);

impl EventId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for EventId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}", self.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum OpResult {
    Todo,
    Done(Value),
}

impl OpResult {
    pub fn is_done(self) -> bool {
        matches!(self, OpResult::Done(_))
    }

    pub fn value(self) -> Option<Value> {
        match self {
            OpResult::Done(v) => Some(v),
            OpResult::Todo => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Event {
    pub id: EventId,
    pub thread: ThreadId,
    pub op: Op,
    pub arg: Value,
    pub result: OpResult,
}

impl Event {
    pub fn is_completed(&self) -> bool {
        self.result.is_done()
    }

    /// Label in the `t:op(arg):res` form used by the DOT export.
    pub fn label(&self) -> String {
        let arg = match self.arg {
            Value::Unit => String::new(),
            v => v.to_string(),
        };
        match self.result {
            OpResult::Todo => format!("{}:{}({})", self.thread, self.op, arg),
            OpResult::Done(r) => format!("{}:{}({}):{}", self.thread, self.op, arg, r),
        }
    }
}

/// A completed sequence of events, read front to back.
pub type SeqHistory = Vec<Event>;

/// A set of event ids backed by a single machine word.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventSet(u64);

impl EventSet {
    pub const EMPTY: EventSet = EventSet(0);

    pub fn single(id: EventId) -> EventSet {
        EventSet(1u64 << id.0)
    }

    pub fn bits(self) -> u64 {
        self.0
    }

    pub fn from_bits(bits: u64) -> EventSet {
        EventSet(bits)
    }

    pub fn contains(self, id: EventId) -> bool {
        id.index() < MAX_EVENTS && self.0 & (1u64 << id.0) != 0
    }

    pub fn insert(&mut self, id: EventId) {
        self.0 |= 1u64 << id.0;
    }

    pub fn remove(&mut self, id: EventId) {
        self.0 &= !(1u64 << id.0);
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }

    pub fn len(self) -> usize {
        self.0.count_ones() as usize
    }

    pub fn union(self, other: EventSet) -> EventSet {
        EventSet(self.0 | other.0)
    }

    pub fn intersect(self, other: EventSet) -> EventSet {
        EventSet(self.0 & other.0)
    }

    pub fn minus(self, other: EventSet) -> EventSet {
        EventSet(self.0 & !other.0)
    }

    pub fn is_subset(self, other: EventSet) -> bool {
        self.0 & !other.0 == 0
    }

    pub fn first(self) -> Option<EventId> {
        if self.0 == 0 {
            None
        } else {
            Some(EventId(self.0.trailing_zeros()))
        }
    }

    pub fn iter(self) -> EventSetIter {
        EventSetIter(self.0)
    }
}

impl FromIterator<EventId> for EventSet {
    fn from_iter<I: IntoIterator<Item = EventId>>(iter: I) -> Self {
        let mut s = EventSet::EMPTY;
        for id in iter {
            s.insert(id);
        }
        s
    }
}

impl IntoIterator for EventSet {
    type Item = EventId;
    type IntoIter = EventSetIter;
    fn into_iter(self) -> EventSetIter {
        self.iter()
    }
}

pub struct EventSetIter(u64);

impl Iterator for EventSetIter {
    type Item = EventId;
    fn next(&mut self) -> Option<EventId> {
        if self.0 == 0 {
            return None;
        }
        let i = self.0.trailing_zeros();
        self.0 &= self.0 - 1;
        Some(EventId(i))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HistoryError {
    #[error("event {0} is not in the history")]
    UnknownEvent(EventId),
    #[error("edge {from} -> {to} leaves an uncompleted event")]
    SourceUncompleted { from: EventId, to: EventId },
    #[error("adding the edges would order {0} before itself")]
    Cycle(EventId),
    #[error("event {0} is already completed")]
    AlreadyCompleted(EventId),
    #[error("event {0} is already present")]
    DuplicateEvent(EventId),
    #[error("a history holds at most {MAX_EVENTS} events")]
    TooManyEvents,
    #[error("malformed history json: {0}")]
    Json(String),
}

/// A well-formedness violation, tagged with the property it breaks and the
/// witnessing event ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "invariant", rename_all = "kebab-case")]
pub enum WfViolation {
    OrderIrreflexive { id: EventId },
    OrderTransitive { a: EventId, b: EventId, c: EventId },
    ThreadTotal { thread: ThreadId, a: EventId, b: EventId },
    UncompletedMaximal { id: EventId, succ: EventId },
    IntervalOrder { i1: EventId, i2: EventId, i3: EventId, i4: EventId },
    KnownIds { id: EventId },
}

impl WfViolation {
    /// Short kebab-case name of the violated property.
    pub fn name(&self) -> &'static str {
        match self {
            WfViolation::OrderIrreflexive { .. } => "order-irreflexive",
            WfViolation::OrderTransitive { .. } => "order-transitive",
            WfViolation::ThreadTotal { .. } => "thread-total",
            WfViolation::UncompletedMaximal { .. } => "uncompleted-maximal",
            WfViolation::IntervalOrder { .. } => "interval-order",
            WfViolation::KnownIds { .. } => "known-ids",
        }
    }
}

/// A set of events with a strict partial order `R`, kept transitively closed.
///
/// Event ids index directly into the backing vectors; `succ[i]` holds every
/// `j` with `i ≺ j`.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash)]
pub struct History {
    slots: Vec<Option<Event>>,
    succ: Vec<EventSet>,
}

impl History {
    pub fn new() -> History {
        History::default()
    }

    /// Builds a history from raw parts without closing or validating the
    /// order, so that malformed inputs can be handed to [`History::check_wf`].
    pub fn from_raw(
        events: impl IntoIterator<Item = Event>,
        order: impl IntoIterator<Item = (EventId, EventId)>,
    ) -> Result<History, HistoryError> {
        let mut h = History::new();
        for e in events {
            h.insert_event(e)?;
        }
        for (a, b) in order {
            if a.index() >= MAX_EVENTS || b.index() >= MAX_EVENTS {
                return Err(HistoryError::TooManyEvents);
            }
            h.grow(a.index().max(b.index()) + 1);
            h.succ[a.index()].insert(b);
        }
        Ok(h)
    }

    fn grow(&mut self, len: usize) {
        if self.slots.len() < len {
            self.slots.resize(len, None);
            self.succ.resize(len, EventSet::EMPTY);
        }
    }

    pub fn len(&self) -> usize {
        self.slots.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The id the next [`History::push_event`] will allocate.
    pub fn next_id(&self) -> EventId {
        EventId(self.slots.len() as u32)
    }

    pub fn events(&self) -> impl Iterator<Item = &Event> + '_ {
        self.slots.iter().filter_map(|s| s.as_ref())
    }

    pub fn event(&self, id: EventId) -> Option<&Event> {
        self.slots.get(id.index()).and_then(|s| s.as_ref())
    }

    pub fn contains(&self, id: EventId) -> bool {
        self.event(id).is_some()
    }

    pub fn ids(&self) -> EventSet {
        self.events().map(|e| e.id).collect()
    }

    pub fn completed(&self) -> EventSet {
        self.events().filter(|e| e.is_completed()).map(|e| e.id).collect()
    }

    pub fn uncompleted(&self) -> EventSet {
        self.events().filter(|e| !e.is_completed()).map(|e| e.id).collect()
    }

    pub fn precedes(&self, a: EventId, b: EventId) -> bool {
        self.succ.get(a.index()).is_some_and(|s| s.contains(b))
    }

    pub fn successors(&self, a: EventId) -> EventSet {
        self.succ.get(a.index()).copied().unwrap_or_default()
    }

    pub fn predecessors(&self, b: EventId) -> EventSet {
        let mut p = EventSet::EMPTY;
        for (i, s) in self.succ.iter().enumerate() {
            if s.contains(b) {
                p.insert(EventId(i as u32));
            }
        }
        p
    }

    /// Every ordered pair of the (closed) order.
    pub fn order_pairs(&self) -> Vec<(EventId, EventId)> {
        let mut out = Vec::new();
        for (i, s) in self.succ.iter().enumerate() {
            for j in s.iter() {
                out.push((EventId(i as u32), j));
            }
        }
        out
    }

    /// Appends a fresh uncompleted event with no order edges.
    pub fn push_event(&mut self, thread: ThreadId, op: Op, arg: Value) -> Result<EventId, HistoryError> {
        let id = self.next_id();
        self.insert_event(Event { id, thread, op, arg, result: OpResult::Todo })?;
        Ok(id)
    }

    /// Inserts an event under its own id.
    pub fn insert_event(&mut self, e: Event) -> Result<(), HistoryError> {
        if e.id.index() >= MAX_EVENTS {
            return Err(HistoryError::TooManyEvents);
        }
        if self.contains(e.id) {
            return Err(HistoryError::DuplicateEvent(e.id));
        }
        self.grow(e.id.index() + 1);
        self.slots[e.id.index()] = Some(e);
        Ok(())
    }

    /// Adds a fresh uncompleted event ordered after every completed event.
    pub fn invoke(&mut self, thread: ThreadId, op: Op, arg: Value) -> Result<EventId, HistoryError> {
        let done = self.completed();
        let id = self.push_event(thread, op, arg)?;
        for j in done.iter() {
            self.succ[j.index()].insert(id);
        }
        Ok(id)
    }

    /// Adds the given edges and closes the order transitively. Either all
    /// edges are added or the history is left untouched.
    pub fn add_edges(
        &mut self,
        edges: impl IntoIterator<Item = (EventId, EventId)>,
    ) -> Result<(), HistoryError> {
        let done = self.completed();
        let mut succ = self.succ.clone();
        for (a, b) in edges {
            for x in [a, b] {
                if !self.contains(x) {
                    return Err(HistoryError::UnknownEvent(x));
                }
            }
            if a == b {
                return Err(HistoryError::Cycle(a));
            }
            if !done.contains(a) {
                return Err(HistoryError::SourceUncompleted { from: a, to: b });
            }
            if succ[a.index()].contains(b) {
                continue;
            }
            // Everything at or below `a` now precedes everything at or above `b`.
            let below: Vec<usize> = (0..succ.len())
                .filter(|&i| i == a.index() || succ[i].contains(a))
                .collect();
            let above = succ[b.index()].union(EventSet::single(b));
            for i in below {
                succ[i] = succ[i].union(above);
            }
        }
        for (i, s) in succ.iter().enumerate() {
            let id = EventId(i as u32);
            if s.contains(id) {
                return Err(HistoryError::Cycle(id));
            }
            let added = s.minus(self.succ[i]);
            if !added.is_empty() && !done.contains(id) {
                return Err(HistoryError::SourceUncompleted { from: id, to: added.first().unwrap() });
            }
        }
        self.succ = succ;
        Ok(())
    }

    /// Non-mutating form of [`History::add_edges`].
    pub fn with_edges(
        &self,
        edges: impl IntoIterator<Item = (EventId, EventId)>,
    ) -> Result<History, HistoryError> {
        let mut h = self.clone();
        h.add_edges(edges)?;
        Ok(h)
    }

    pub fn complete_event(&mut self, id: EventId, value: Value) -> Result<(), HistoryError> {
        let slot = self
            .slots
            .get_mut(id.index())
            .and_then(|s| s.as_mut())
            .ok_or(HistoryError::UnknownEvent(id))?;
        if slot.is_completed() {
            return Err(HistoryError::AlreadyCompleted(id));
        }
        slot.result = OpResult::Done(value);
        Ok(())
    }

    /// Restriction to completed events.
    pub fn floor(&self) -> History {
        let keep = self.completed();
        let mut h = self.clone();
        for (i, slot) in h.slots.iter_mut().enumerate() {
            if !keep.contains(EventId(i as u32)) {
                *slot = None;
                h.succ[i] = EventSet::EMPTY;
            } else {
                h.succ[i] = h.succ[i].intersect(keep);
            }
        }
        h.trim();
        h
    }

    fn trim(&mut self) {
        while matches!(self.slots.last(), Some(None)) && self.succ.last() == Some(&EventSet::EMPTY) {
            self.slots.pop();
            self.succ.pop();
        }
    }

    /// True iff both histories have the same events and every edge of `self`
    /// is also an edge of `other`.
    pub fn refines(&self, other: &History) -> bool {
        if self.ids() != other.ids() {
            return false;
        }
        if self.events().zip(other.events()).any(|(a, b)| a != b) {
            return false;
        }
        self.order_pairs().into_iter().all(|(a, b)| other.precedes(a, b))
    }

    /// The R-maximal event of thread `t`, if any.
    pub fn last_of_thread(&self, t: ThreadId) -> Option<EventId> {
        let mine: EventSet = self.events().filter(|e| e.thread == t).map(|e| e.id).collect();
        mine.iter()
            .filter(|&i| self.successors(i).intersect(mine).is_empty())
            .last()
    }

    pub fn check_wf(&self) -> Vec<WfViolation> {
        let mut out = Vec::new();
        let ids = self.ids();
        for (i, s) in self.succ.iter().enumerate() {
            let a = EventId(i as u32);
            if !s.is_empty() && !ids.contains(a) {
                out.push(WfViolation::KnownIds { id: a });
            }
            if let Some(b) = s.minus(ids).first() {
                out.push(WfViolation::KnownIds { id: b });
            }
        }
        for a in ids.iter() {
            let sa = self.successors(a);
            if sa.contains(a) {
                out.push(WfViolation::OrderIrreflexive { id: a });
            }
            for b in sa.iter() {
                if let Some(c) = self.successors(b).minus(sa).first() {
                    out.push(WfViolation::OrderTransitive { a, b, c });
                }
            }
        }
        let evs: Vec<&Event> = self.events().collect();
        for (x, ea) in evs.iter().enumerate() {
            for eb in &evs[x + 1..] {
                if ea.thread == eb.thread && !self.precedes(ea.id, eb.id) && !self.precedes(eb.id, ea.id) {
                    out.push(WfViolation::ThreadTotal { thread: ea.thread, a: ea.id, b: eb.id });
                }
            }
        }
        for e in &evs {
            if !e.is_completed() {
                if let Some(succ) = self.successors(e.id).first() {
                    out.push(WfViolation::UncompletedMaximal { id: e.id, succ });
                }
            }
        }
        // (i1≺i2 ∧ i3≺i4) ⇒ (i1≺i4 ∨ i3≺i2) fails exactly when two successor
        // sets are incomparable.
        for (x, ea) in evs.iter().enumerate() {
            for eb in &evs[x + 1..] {
                let s1 = self.successors(ea.id).intersect(ids);
                let s3 = self.successors(eb.id).intersect(ids);
                if let (Some(i2), Some(i4)) = (s1.minus(s3).first(), s3.minus(s1).first()) {
                    out.push(WfViolation::IntervalOrder { i1: ea.id, i2, i3: eb.id, i4 });
                }
            }
        }
        out
    }

    /// Linear extensions of the order, optionally pruned by replaying a
    /// sequential specification along each prefix.
    pub fn linear_extensions<'a, S: SeqSpec>(&'a self, prune: Option<&'a S>) -> LinearExtensions<'a, S> {
        LinearExtensions::new(self, prune)
    }

    /// Pairs of the transitive reduction of the order.
    pub fn transitive_reduction(&self) -> Vec<(EventId, EventId)> {
        let mut out = Vec::new();
        for (a, b) in self.order_pairs() {
            let between = self.successors(a).intersect(self.predecessors(b));
            if between.is_empty() {
                out.push((a, b));
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        let doc = HistoryDoc { events: self.events().copied().collect(), order: self.order_pairs() };
        serde_json::to_string(&doc).expect("history serializes")
    }

    pub fn from_json(s: &str) -> Result<History, HistoryError> {
        let doc: HistoryDoc = serde_json::from_str(s).map_err(|e| HistoryError::Json(e.to_string()))?;
        History::from_raw(doc.events, doc.order)
    }

    pub fn to_dot(&self) -> String {
        let mut s = String::from("digraph history {\n");
        for e in self.events() {
            let style = if e.is_completed() { "solid" } else { "dashed" };
            let _ = writeln!(s, "  {} [label=\"{}\", style={}];", e.id, e.label(), style);
        }
        for (a, b) in self.transitive_reduction() {
            let _ = writeln!(s, "  {a} -> {b};");
        }
        s.push_str("}\n");
        s
    }
}

impl Serialize for History {
    fn serialize<Ser: serde::Serializer>(&self, ser: Ser) -> Result<Ser::Ok, Ser::Error> {
        HistoryDoc { events: self.events().copied().collect(), order: self.order_pairs() }.serialize(ser)
    }
}

impl<'de> Deserialize<'de> for History {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> Result<History, D::Error> {
        let doc = HistoryDoc::deserialize(de)?;
        History::from_raw(doc.events, doc.order).map_err(serde::de::Error::custom)
    }
}

#[derive(Serialize, Deserialize)]
struct HistoryDoc {
    events: Vec<Event>,
    order: Vec<(EventId, EventId)>,
}

struct Frame<St> {
    choices: Vec<EventId>,
    next: usize,
    states: Vec<St>,
}

/// Iterator over the linear extensions of a history.
///
/// With pruning enabled, prefixes that the specification cannot reproduce
/// are cut, and [`LinearExtensions::rejected`] reports whether any cut
/// happened so far.
pub struct LinearExtensions<'a, S: SeqSpec> {
    history: &'a History,
    prune: Option<&'a S>,
    all: EventSet,
    preds: Vec<EventSet>,
    stack: Vec<Frame<S::State>>,
    order: Vec<EventId>,
    placed: EventSet,
    rejected: bool,
    started: bool,
}

impl<'a, S: SeqSpec> LinearExtensions<'a, S> {
    fn new(history: &'a History, prune: Option<&'a S>) -> Self {
        let all = history.ids();
        let len = history.slots.len();
        let mut preds = vec![EventSet::EMPTY; len];
        for (a, b) in history.order_pairs() {
            if b.index() < len {
                preds[b.index()].insert(a);
            }
        }
        LinearExtensions {
            history,
            prune,
            all,
            preds,
            stack: Vec::new(),
            order: Vec::new(),
            placed: EventSet::EMPTY,
            rejected: false,
            started: false,
        }
    }

    /// Whether some extension has been cut because the specification rejected it.
    pub fn rejected(&self) -> bool {
        self.rejected
    }

    fn minimal(&self) -> Vec<EventId> {
        let rest = self.all.minus(self.placed);
        rest.iter()
            .filter(|e| self.preds[e.index()].intersect(self.all).is_subset(self.placed))
            .collect()
    }

    fn emit(&self) -> SeqHistory {
        self.order.iter().map(|&i| *self.history.event(i).unwrap()).collect()
    }
}

impl<S: SeqSpec> Iterator for LinearExtensions<'_, S> {
    type Item = SeqHistory;

    fn next(&mut self) -> Option<SeqHistory> {
        if !self.started {
            self.started = true;
            if self.all.is_empty() {
                return Some(Vec::new());
            }
            let states = self.prune.map(|s| vec![s.initial()]).unwrap_or_default();
            let choices = self.minimal();
            self.stack.push(Frame { choices, next: 0, states });
        }
        loop {
            let depth = self.stack.len();
            if depth == 0 {
                return None;
            }
            while self.order.len() >= depth {
                let e = self.order.pop().unwrap();
                self.placed.remove(e);
            }
            let frame = self.stack.last_mut().unwrap();
            if frame.next == frame.choices.len() {
                self.stack.pop();
                continue;
            }
            let e = frame.choices[frame.next];
            frame.next += 1;
            let mut next_states = Vec::new();
            if let Some(spec) = self.prune {
                let ev = self.history.event(e).unwrap();
                next_states = step_states(spec, &frame.states, ev);
                if next_states.is_empty() {
                    self.rejected = true;
                    continue;
                }
            }
            self.order.push(e);
            self.placed.insert(e);
            if self.placed == self.all {
                return Some(self.emit());
            }
            let choices = self.minimal();
            self.stack.push(Frame { choices, next: 0, states: next_states });
        }
    }
}

/// Advances a set of specification states by one event, keeping only the
/// successors that reproduce the event's recorded result.
pub(crate) fn step_states<S: SeqSpec>(spec: &S, states: &[S::State], ev: &Event) -> Vec<S::State> {
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for st in states {
        for (next, ret) in spec.apply(st, ev.op, ev.arg) {
            let ok = match ev.result {
                OpResult::Done(v) => v == ret,
                OpResult::Todo => true,
            };
            if ok && seen.insert(next.clone()) {
                out.push(next);
            }
        }
    }
    out
}
