//! Optimistic set: a sorted linked list with marked nodes and validated
//! atomic updates. Nodes are never reclaimed.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::commitment::{apply_commit, my_eid, CommitAction, CommitError, Configuration, GhostValue};
use crate::history::{EventId, EventSet, History};
use crate::monitor::Finding;
use crate::simsched::{DsState, Mutation, StepCtx, StepOutput};
use crate::value::{Op, ThreadId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub u32);

pub const HEAD: NodeId = NodeId(0);
pub const TAIL: NodeId = NodeId(1);

/// Node keys; the sentinels hold the extreme values.
pub type Key = i64;
pub const NEG_INF: Key = i64::MIN;
pub const POS_INF: Key = i64::MAX;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Node {
    pub next: Option<NodeId>,
    pub val: Key,
    pub marked: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetShared {
    pub nodes: Vec<Node>,
}

impl Default for SetShared {
    fn default() -> Self {
        SetShared {
            nodes: vec![
                Node { next: Some(TAIL), val: NEG_INF, marked: false },
                Node { next: None, val: POS_INF, marked: false },
            ],
        }
    }
}

impl SetShared {
    pub fn node(&self, n: NodeId) -> &Node {
        &self.nodes[n.0 as usize]
    }

    fn node_mut(&mut self, n: NodeId) -> &mut Node {
        &mut self.nodes[n.0 as usize]
    }

    pub fn ids(&self) -> impl Iterator<Item = NodeId> {
        (0..self.nodes.len() as u32).map(NodeId)
    }

    /// Whether `b` is reachable from `a` by following `next` zero or more times.
    pub fn reachable(&self, a: NodeId, b: NodeId) -> bool {
        let mut cur = Some(a);
        let mut hops = 0;
        while let Some(n) = cur {
            if n == b {
                return true;
            }
            hops += 1;
            if hops > self.nodes.len() {
                return false;
            }
            cur = self.node(n).next;
        }
        false
    }

    /// Keys of nodes reachable from the head, sentinels excluded.
    pub fn members(&self) -> Vec<Key> {
        let mut out = Vec::new();
        let mut cur = self.node(HEAD).next;
        while let Some(n) = cur {
            if n == TAIL || out.len() > self.nodes.len() {
                break;
            }
            out.push(self.node(n).val);
            cur = self.node(n).next;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SetPc {
    /// Read `head.next`.
    ReadFirst,
    /// Advance `curr` one node.
    Advance,
    /// Validate and update (insert and remove only).
    Validate,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SetFrame {
    pub op: Op,
    pub v: Key,
    pub pc: SetPc,
    pub prev: NodeId,
    pub curr: NodeId,
}

impl SetFrame {
    pub fn start(op: Op, arg: Value) -> Option<SetFrame> {
        let v = arg.as_int()?;
        matches!(op, Op::Insert | Op::Remove | Op::Contains)
            .then_some(SetFrame { op, v, pc: SetPc::ReadFirst, prev: HEAD, curr: HEAD })
    }
}

fn shared(cfg: &Configuration) -> &SetShared {
    match &cfg.state.ds {
        DsState::Set(s) => s,
        _ => panic!("set step on a different structure"),
    }
}

fn shared_mut(cfg: &mut Configuration) -> &mut SetShared {
    match &mut cfg.state.ds {
        DsState::Set(s) => s,
        _ => panic!("set step on a different structure"),
    }
}

fn ghost(cfg: &Configuration) -> &BTreeMap<EventId, NodeId> {
    static EMPTY: BTreeMap<EventId, NodeId> = BTreeMap::new();
    cfg.ghost.node().unwrap_or(&EMPTY)
}

fn succeeded(h: &History, e: EventId, op: Op) -> bool {
    h.event(e).is_some_and(|ev| ev.op == op && ev.result.value() == Some(Value::Bool(true)))
}

/// The successful insert that created node `n`.
pub fn ins_of(h: &History, g: &BTreeMap<EventId, NodeId>, n: NodeId) -> Option<EventId> {
    g.iter().find(|(e, &m)| m == n && succeeded(h, **e, Op::Insert)).map(|(e, _)| *e)
}

/// The successful remove that marked node `n`.
pub fn rem_of(h: &History, g: &BTreeMap<EventId, NodeId>, n: NodeId) -> Option<EventId> {
    g.iter()
        .find(|(e, &m)| m == n && h.event(**e).is_some_and(|ev| ev.op == Op::Remove))
        .map(|(e, _)| *e)
}

/// Result of looking up the last successful remove of a key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LastRem {
    None,
    Last(EventId),
    /// Successful removes exist but none follows all the others.
    Ambiguous,
}

pub fn last_rem_of(h: &History, v: Key) -> LastRem {
    let rems: Vec<EventId> = h
        .events()
        .filter(|e| e.op == Op::Remove && e.arg == Value::Int(v) && e.result.value() == Some(Value::Bool(true)))
        .map(|e| e.id)
        .collect();
    if rems.is_empty() {
        return LastRem::None;
    }
    let all_removes: Vec<EventId> =
        h.events().filter(|e| e.op == Op::Remove && e.arg == Value::Int(v)).map(|e| e.id).collect();
    rems.iter()
        .find(|&&i| all_removes.iter().all(|&j| j == i || h.precedes(j, i)))
        .map_or(LastRem::Ambiguous, |&i| LastRem::Last(i))
}

fn same_arg(h: &History, v: Key) -> EventSet {
    h.events().filter(|e| e.arg == Value::Int(v)).map(|e| e.id).collect()
}

pub fn step(cfg: &mut Configuration, t: ThreadId, f: &mut SetFrame, ctx: &StepCtx) -> Result<StepOutput, CommitError> {
    let me = my_eid(cfg, t)?;
    match f.pc {
        SetPc::ReadFirst | SetPc::Advance => {
            if f.pc == SetPc::ReadFirst {
                f.prev = HEAD;
                f.curr = shared(cfg).node(HEAD).next.expect("head has a successor");
            } else {
                f.prev = f.curr;
                f.curr = shared(cfg).node(f.curr).next.expect("non-tail node has a successor");
            }
            if shared(cfg).node(f.curr).val < f.v {
                f.pc = SetPc::Advance;
                return Ok(StepOutput::cont());
            }
            if f.op == Op::Contains {
                return commit_contains(cfg, me, f);
            }
            f.pc = SetPc::Validate;
            Ok(StepOutput::cont())
        }
        SetPc::Validate => {
            let s = shared(cfg);
            let p = s.node(f.prev);
            let valid = p.next == Some(f.curr) && !p.marked;
            if !valid && !ctx.has(Mutation::SetSkipValidation) {
                f.pc = SetPc::ReadFirst;
                return Ok(StepOutput::retry());
            }
            let found = s.node(f.curr).val == f.v;
            let (res, node) = match f.op {
                Op::Insert if !found => {
                    let n = NodeId(s.nodes.len() as u32);
                    (true, Some(n))
                }
                Op::Remove if found => (true, Some(f.curr)),
                _ => (false, None),
            };
            let mut parts = vec![CommitAction::Complete(me, Value::Bool(res))];
            if let Some(n) = node {
                parts.push(CommitAction::SetGhost(me, GhostValue::Node(n)));
            }
            apply_commit(cfg, CommitAction::Compose(parts))?;
            order_ins_rem(cfg, me, f.v)?;
            let s = shared_mut(cfg);
            match (f.op, node) {
                (Op::Insert, Some(n)) => {
                    s.nodes.push(Node { next: Some(f.curr), val: f.v, marked: false });
                    s.node_mut(f.prev).next = Some(n);
                }
                (Op::Remove, Some(c)) => {
                    s.node_mut(c).marked = true;
                    let after = s.node(c).next;
                    s.node_mut(f.prev).next = after;
                }
                _ => {}
            }
            Ok(StepOutput::finished(Value::Bool(res)))
        }
    }
}

/// Orders the completed insert or remove `me` after every completed event
/// on the same key, and every pending insert or remove on that key after it.
fn order_ins_rem(cfg: &mut Configuration, me: EventId, v: Key) -> Result<(), CommitError> {
    let h = &cfg.history;
    let keyed = same_arg(h, v);
    let before: Vec<_> = keyed.intersect(h.completed()).iter().filter(|&e| e != me).map(|e| (e, me)).collect();
    apply_commit(cfg, CommitAction::AddEdges(before))?;
    let h = &cfg.history;
    let after: Vec<_> = keyed
        .intersect(h.uncompleted())
        .iter()
        .filter(|&e| h.event(e).is_some_and(|ev| ev.op != Op::Contains))
        .map(|e| (me, e))
        .collect();
    apply_commit(cfg, CommitAction::AddEdges(after))
}

fn commit_contains(cfg: &mut Configuration, me: EventId, f: &mut SetFrame) -> Result<StepOutput, CommitError> {
    let mut out = StepOutput::finished(Value::Bool(false));
    out.findings = contains_lemmas(cfg, me, f);
    let found = shared(cfg).node(f.curr).val == f.v;
    out.effect = crate::simsched::Effect::Finished(Value::Bool(found));
    let h = &cfg.history;
    let obs = if found {
        let i = ins_of(h, ghost(cfg), f.curr);
        if i.is_none() {
            out.findings.push(Finding::new("unmarked-node-live", format!("{me} found node {:?} with no insert", f.curr)));
        }
        i
    } else {
        match last_rem_of(h, f.v) {
            LastRem::None => None,
            LastRem::Last(i) => Some(i),
            LastRem::Ambiguous => {
                out.findings.push(Finding::new(
                    "same-key-updates-linear",
                    format!("successful removes of {} have no last element", f.v),
                ));
                None
            }
        }
    };
    let mut parts = vec![CommitAction::Complete(me, Value::Bool(found))];
    if let Some(o) = obs {
        parts.push(CommitAction::AddEdges(vec![(o, me)]));
    }
    apply_commit(cfg, CommitAction::Compose(parts))?;
    let h = &cfg.history;
    let after: Vec<_> = same_arg(h, f.v)
        .iter()
        .filter(|&i| i != me && !h.precedes(i, me))
        .map(|i| (me, i))
        .collect();
    apply_commit(cfg, CommitAction::AddEdges(after))?;
    Ok(out)
}

/// Before a contains commits: returning true, no successful remove of the
/// key lies between the node's insert and the contains; returning false, no
/// successful insert lies between the last successful remove (or the start)
/// and the contains.
fn contains_lemmas(cfg: &Configuration, me: EventId, f: &SetFrame) -> Vec<Finding> {
    let mut out = Vec::new();
    let h = &cfg.history;
    let s = shared(cfg);
    let curr_val = s.node(f.curr).val;
    let keyed = same_arg(h, f.v);
    if curr_val == f.v {
        if let Some(ins) = ins_of(h, ghost(cfg), f.curr) {
            for i in keyed.iter().filter(|&i| succeeded(h, i, Op::Remove)) {
                if h.precedes(ins, i) && h.precedes(i, me) {
                    out.push(Finding::new(
                        "contains-true-no-remove-between",
                        format!("{i} removes {} between {ins} and {me}", f.v),
                    ));
                }
            }
        }
    } else {
        let last = last_rem_of(h, f.v);
        for i in keyed.iter().filter(|&i| succeeded(h, i, Op::Insert)) {
            let after_last = match last {
                LastRem::Last(r) => h.precedes(r, i),
                _ => true,
            };
            if after_last && h.precedes(i, me) {
                out.push(Finding::new(
                    "contains-false-no-insert-between",
                    format!("{i} inserts {} after the last remove and before {me}", f.v),
                ));
            }
        }
    }
    out
}

pub fn check_inv(cfg: &Configuration) -> Vec<Finding> {
    let mut out = Vec::new();
    let h = &cfg.history;
    let s = shared(cfg);
    let g = ghost(cfg);

    let updates: Vec<_> = h
        .events()
        .filter(|e| e.is_completed() && matches!(e.op, Op::Insert | Op::Remove))
        .collect();
    for (x, a) in updates.iter().enumerate() {
        for b in &updates[x + 1..] {
            if a.arg == b.arg && !h.precedes(a.id, b.id) && !h.precedes(b.id, a.id) {
                out.push(Finding::new("same-key-updates-linear", format!("{} and {} are unordered", a.id, b.id)));
            }
        }
    }
    let successful_update_between = |from: EventId, to: Option<EventId>, key: Key| {
        h.events().find(|e| {
            e.arg == Value::Int(key)
                && e.op != Op::Contains
                && e.result.value() == Some(Value::Bool(true))
                && h.precedes(from, e.id)
                && to.is_none_or(|to| h.precedes(e.id, to))
        })
    };
    for n in s.ids().filter(|&n| n != HEAD && n != TAIL) {
        let node = s.node(n);
        let ins = ins_of(h, g, n);
        let rem = rem_of(h, g, n);
        if !node.marked {
            match (ins, rem) {
                (Some(i), None) => {
                    if let Some(e) = successful_update_between(i, None, node.val) {
                        out.push(Finding::new(
                            "unmarked-node-live",
                            format!("{} succeeds on {} after {i}, which inserted live node {n:?}", e.id, node.val),
                        ));
                    }
                }
                _ => out.push(Finding::new(
                    "unmarked-node-live",
                    format!("unmarked node {n:?} has insert {ins:?} and remove {rem:?}"),
                )),
            }
        } else {
            match (ins, rem) {
                (Some(i), Some(r)) => {
                    if let Some(e) = successful_update_between(i, Some(r), node.val) {
                        out.push(Finding::new(
                            "marked-node-removed",
                            format!("{} succeeds on {} between {i} and {r}", e.id, node.val),
                        ));
                    }
                    if !h.precedes(i, r) {
                        out.push(Finding::new("remove-after-insert", format!("{i} does not precede {r}")));
                    }
                }
                _ => out.push(Finding::new(
                    "marked-node-removed",
                    format!("marked node {n:?} has insert {ins:?} and remove {rem:?}"),
                )),
            }
        }
    }
    for n in s.ids() {
        if let Some(m) = s.node(n).next {
            if s.node(n).val > s.node(m).val {
                out.push(Finding::new("reachable-keys-sorted", format!("{n:?} points to smaller key at {m:?}")));
            }
        }
        let reach = s.reachable(HEAD, n);
        if reach == s.node(n).marked {
            out.push(Finding::new(
                "reachable-iff-unmarked",
                format!("{n:?} reachable={reach} marked={}", s.node(n).marked),
            ));
        }
        if !s.reachable(n, TAIL) {
            out.push(Finding::new("tail-reachable", format!("tail is not reachable from {n:?}")));
        }
    }
    for e in h.events().filter(|e| matches!(e.op, Op::Insert | Op::Remove)) {
        let ok = e.result.value() == Some(Value::Bool(true));
        if ok != g.contains_key(&e.id) {
            out.push(Finding::new(
                "node-map-matches-success",
                format!("{} result {:?} but node map entry {:?}", e.id, e.result, g.get(&e.id)),
            ));
        }
    }
    for (e, n) in g {
        let key = h.event(*e).and_then(|ev| ev.arg.as_int());
        if key != Some(s.node(*n).val) {
            out.push(Finding::new(
                "node-map-key-matches",
                format!("{e} has argument {key:?} but node {n:?} holds {}", s.node(*n).val),
            ));
        }
    }
    out
}

/// Loop invariant of a contains traversal.
pub fn check_thread(cfg: &Configuration, t: ThreadId, f: &SetFrame) -> Vec<Finding> {
    let mut out = Vec::new();
    let Some(me) = cfg.current[t] else {
        return out;
    };
    if f.op != Op::Contains || f.pc != SetPc::Advance {
        return out;
    }
    let h = &cfg.history;
    let s = shared(cfg);
    let g = ghost(cfg);
    for n in s.ids().filter(|&n| s.node(n).val == f.v) {
        let node = s.node(n);
        if s.reachable(f.curr, n) {
            if node.marked && rem_of(h, g, n).is_some_and(|r| h.precedes(r, me)) {
                out.push(Finding::new(
                    "traversal-reachable-keys",
                    format!("{me} can still reach {n:?}, which was removed before it started"),
                ));
            }
        } else if !node.marked && ins_of(h, g, n).is_some_and(|i| h.precedes(i, me)) {
            out.push(Finding::new(
                "traversal-unreachable-keys",
                format!("{me} cannot reach live {n:?}, which was inserted before it started"),
            ));
        }
    }
    out
}

/// Keys currently in the set.
pub fn members(cfg: &Configuration) -> Vec<Value> {
    shared(cfg).members().into_iter().map(Value::Int).collect()
}

pub fn nodes(cfg: &Configuration) -> &[Node] {
    &shared(cfg).nodes
}
