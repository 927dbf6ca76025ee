//! Herlihy-Wing queue over an unbounded array of slots.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::commitment::{apply_commit, my_eid, CommitAction, CommitError, Configuration, GhostValue};
use crate::history::{EventId, EventSet};
use crate::monitor::Finding;
use crate::simsched::{DsState, Mutation, StepCtx, StepOutput};
use crate::value::{Op, ThreadId, Value};

/// `back` is the first unused slot; cells past the end of `array` are empty.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct HwShared {
    pub back: usize,
    pub array: Vec<Option<Value>>,
}

impl HwShared {
    pub fn cell(&self, k: usize) -> Option<Value> {
        self.array.get(k).copied().flatten()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HwFrame {
    /// `slot` is set by the first step.
    Enq { v: Value, slot: Option<usize> },
    /// `n` is the snapshot of `back`; `k` the next slot to swap.
    Deq { n: Option<usize>, k: usize },
}

impl HwFrame {
    pub fn start(op: Op, arg: Value) -> Option<HwFrame> {
        match op {
            Op::Enq => Some(HwFrame::Enq { v: arg, slot: None }),
            Op::Deq => Some(HwFrame::Deq { n: None, k: 0 }),
            _ => None,
        }
    }
}

fn shared(cfg: &Configuration) -> &HwShared {
    match &cfg.state.ds {
        DsState::Hw(s) => s,
        _ => panic!("Herlihy-Wing step on a different structure"),
    }
}

fn shared_mut(cfg: &mut Configuration) -> &mut HwShared {
    match &mut cfg.state.ds {
        DsState::Hw(s) => s,
        _ => panic!("Herlihy-Wing step on a different structure"),
    }
}

fn ghost(cfg: &Configuration) -> &BTreeMap<EventId, usize> {
    static EMPTY: BTreeMap<EventId, usize> = BTreeMap::new();
    cfg.ghost.slot().unwrap_or(&EMPTY)
}

/// Enqueue events by phase: slot taken but not written, value present, value
/// removed.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct HwSets {
    pub with_slot: EventSet,
    pub untaken: EventSet,
    pub taken: EventSet,
}

pub fn hw_sets(cfg: &Configuration) -> HwSets {
    let s = shared(cfg);
    let mut sets = HwSets::default();
    for (&id, &k) in ghost(cfg) {
        let Some(e) = cfg.history.event(id) else { continue };
        if e.op != Op::Enq {
            continue;
        }
        match (e.is_completed(), s.cell(k)) {
            (false, None) => sets.with_slot.insert(id),
            (true, Some(v)) if v == e.arg => sets.untaken.insert(id),
            (true, None) => sets.taken.insert(id),
            _ => {}
        }
    }
    sets
}

fn event_at_slot(cfg: &Configuration, k: usize) -> Option<EventId> {
    ghost(cfg).iter().find(|(_, &s)| s == k).map(|(id, _)| *id)
}

pub fn step(cfg: &mut Configuration, t: ThreadId, frame: &mut HwFrame, ctx: &StepCtx) -> Result<StepOutput, CommitError> {
    let me = my_eid(cfg, t)?;
    match frame {
        HwFrame::Enq { v, slot } => match *slot {
            None => {
                let s = shared_mut(cfg);
                let k = s.back;
                s.back += 1;
                if s.array.len() < s.back {
                    s.array.resize(s.back, None);
                }
                apply_commit(cfg, CommitAction::SetGhost(me, GhostValue::Slot(k)))?;
                *slot = Some(k);
                Ok(StepOutput::cont())
            }
            Some(k) => {
                shared_mut(cfg).array[k] = Some(*v);
                apply_commit(cfg, CommitAction::Complete(me, Value::Unit))?;
                Ok(StepOutput::finished(Value::Unit))
            }
        },
        HwFrame::Deq { n, k } => match *n {
            None => {
                let back = shared(cfg).back;
                *n = Some(back);
                *k = 0;
                if back == 0 {
                    return empty_sweep(cfg, me, frame, ctx);
                }
                Ok(StepOutput::cont())
            }
            Some(bound) => {
                let slot = *k;
                let taken = shared_mut(cfg).array.get_mut(slot).and_then(|c| c.take());
                if let Some(v) = taken {
                    let enq = event_at_slot(cfg, slot);
                    let mut parts = vec![CommitAction::Complete(me, v)];
                    if let Some(enq) = enq {
                        parts.push(CommitAction::AddEdges(removal_edges(cfg, me, enq, ctx)));
                    }
                    apply_commit(cfg, CommitAction::Compose(parts))?;
                    let mut out = StepOutput::finished(v);
                    if enq.is_none() {
                        out.findings.push(Finding::new("occupied-cells-untaken", format!("slot {slot} has no enqueue")));
                    }
                    return Ok(out);
                }
                *k += 1;
                if *k >= bound {
                    return empty_sweep(cfg, me, frame, ctx);
                }
                Ok(StepOutput::cont())
            }
        },
    }
}

fn empty_sweep(cfg: &mut Configuration, me: EventId, frame: &mut HwFrame, ctx: &StepCtx) -> Result<StepOutput, CommitError> {
    *frame = HwFrame::Deq { n: None, k: 0 };
    if ctx.has(Mutation::HwEmptiness) {
        apply_commit(cfg, CommitAction::Complete(me, Value::Unit))?;
        return Ok(StepOutput::finished(Value::Unit));
    }
    Ok(StepOutput::retry())
}

/// The removed enqueue before the current dequeue, before every untaken or
/// still unfinished enqueue; the current dequeue before every pending one.
fn removal_edges(cfg: &Configuration, me: EventId, enq: EventId, ctx: &StepCtx) -> Vec<(EventId, EventId)> {
    let h = &cfg.history;
    let mut later = hw_sets(cfg).untaken;
    if !ctx.has(Mutation::HwUntakenOnlyOrder) {
        for e in h.uncompleted().iter() {
            if h.event(e).is_some_and(|ev| ev.op == Op::Enq) {
                later.insert(e);
            }
        }
    }
    later.remove(enq);
    let mut edges = vec![(enq, me)];
    edges.extend(later.iter().map(|e| (enq, e)));
    for d in h.uncompleted().iter() {
        if d != me && h.event(d).is_some_and(|ev| ev.op == Op::Deq) {
            edges.push((me, d));
        }
    }
    edges
}

pub fn check_inv(cfg: &Configuration) -> Vec<Finding> {
    let mut out = Vec::new();
    let h = &cfg.history;
    let s = shared(cfg);
    let g = ghost(cfg);
    let sets = hw_sets(cfg);
    let op = |e: EventId| h.event(e).map(|ev| ev.op);

    for d in h.completed().iter().filter(|&d| op(d) == Some(Op::Deq)) {
        for d2 in h.uncompleted().iter().filter(|&d2| op(d2) == Some(Op::Deq)) {
            if !h.precedes(d, d2) {
                out.push(Finding::new(
                    "completed-dequeues-precede-pending",
                    format!("{d} is not ordered before pending {d2}"),
                ));
            }
        }
    }
    for e1 in sets.untaken.iter() {
        for e2 in sets.untaken.iter() {
            if h.precedes(e1, e2) && g[&e1] >= g[&e2] {
                out.push(Finding::new(
                    "untaken-order-matches-slots",
                    format!("{e1} precedes {e2} but holds slot {} >= {}", g[&e1], g[&e2]),
                ));
            }
        }
    }
    for (&e, &k) in g {
        if !h.contains(e) || k >= s.back {
            out.push(Finding::new("slots-below-back", format!("{e} holds slot {k}, back is {}", s.back)));
        }
    }
    let mut owners: BTreeMap<usize, EventId> = BTreeMap::new();
    for (&e, &k) in g {
        if let Some(prev) = owners.insert(k, e) {
            out.push(Finding::new("slots-injective", format!("{prev} and {e} share slot {k}")));
        }
    }
    let limit = s.back.max(s.array.len());
    for k in 0..limit {
        let owner = owners.get(&k).copied();
        let in_set = |set: EventSet| owner.is_some_and(|e| set.contains(e));
        let occupied = s.cell(k).is_some();
        if occupied != in_set(sets.untaken) {
            out.push(Finding::new(
                "occupied-cells-untaken",
                format!("slot {k} occupied={occupied} but its owner {owner:?} is not untaken"),
            ));
        }
        let explained = s.back <= k || owner.is_none() || in_set(sets.taken) || in_set(sets.with_slot);
        if !occupied != explained {
            out.push(Finding::new(
                "empty-cells-accounted",
                format!("slot {k} empty={} does not match its owner {owner:?}", !occupied),
            ));
        }
    }
    out
}

/// Loop invariant of a dequeue sweep, and minimality of the enqueue it is
/// about to take.
pub fn check_thread(cfg: &Configuration, t: ThreadId, frame: &HwFrame) -> Vec<Finding> {
    let mut out = Vec::new();
    let (Some(me), HwFrame::Deq { n: Some(n), k }) = (cfg.current[t], frame) else {
        return out;
    };
    let (n, k) = (*n, *k);
    let h = &cfg.history;
    let g = ghost(cfg);
    let s = shared(cfg);
    let untaken = hw_sets(cfg).untaken;
    for e in untaken.iter().filter(|e| g[e] < k) {
        for e2 in untaken.iter().filter(|e2| k <= g[e2] && g[e2] < n) {
            if h.precedes(e, e2) {
                out.push(Finding::new(
                    "swept-enqueues-unordered-with-rest",
                    format!("{me}: {e} at swept slot {} precedes {e2} at slot {}", g[&e], g[&e2]),
                ));
            }
        }
        if h.precedes(e, me) {
            out.push(Finding::new(
                "swept-enqueues-not-before-dequeue",
                format!("{e} at swept slot {} precedes {me}", g[&e]),
            ));
        }
    }
    if n > s.back {
        out.push(Finding::new("sweep-bound-below-back", format!("{me}: n={n} exceeds back={}", s.back)));
    }
    if s.cell(k).is_some() {
        if let Some(enq) = event_at_slot(cfg, k) {
            for e in untaken.iter() {
                if h.precedes(e, enq) {
                    out.push(Finding::new(
                        "removed-enqueue-minimal",
                        format!("untaken {e} precedes {enq}, which {me} is about to take"),
                    ));
                }
            }
        }
    }
    out
}

/// Values of untaken enqueues.
pub fn queued_values(cfg: &Configuration) -> Vec<Value> {
    let h = &cfg.history;
    let mut v: Vec<Value> = hw_sets(cfg).untaken.iter().filter_map(|e| h.event(e).map(|ev| ev.arg)).collect();
    v.sort();
    v
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::commitment::{invoke_event, GhostState};
    use crate::simsched::SharedState;

    fn hw_cfg(threads: usize) -> Configuration {
        Configuration::new(
            SharedState::new(DsState::Hw(HwShared::default()), threads),
            GhostState::Slot(BTreeMap::new()),
            threads,
        )
    }

    fn ctx() -> StepCtx {
        StepCtx::new(2, Default::default())
    }

    #[test]
    fn enqueue_phases() {
        let mut c = hw_cfg(2);
        invoke_event(&mut c, 0, Op::Enq, Value::Int(5)).unwrap();
        let e = c.current[0].unwrap();
        let mut f = HwFrame::start(Op::Enq, Value::Int(5)).unwrap();
        step(&mut c, 0, &mut f, &ctx()).unwrap();
        assert_eq!(shared(&c).back, 1);
        assert_eq!(ghost(&c)[&e], 0);
        assert_eq!(hw_sets(&c).with_slot, EventSet::single(e));
        step(&mut c, 0, &mut f, &ctx()).unwrap();
        assert_eq!(hw_sets(&c).untaken, EventSet::single(e));
        assert!(check_inv(&c).is_empty());
    }

    #[test]
    fn fresh_state_satisfies_invariant() {
        assert!(check_inv(&hw_cfg(1)).is_empty());
    }

    #[test]
    fn misordered_slots_are_reported() {
        let mut c = hw_cfg(2);
        let mut ids = Vec::new();
        for t in 0..2 {
            let e = invoke_event(&mut c, t, Op::Enq, Value::Int(t as i64)).unwrap();
            ids.push(e);
        }
        for &(t, slot) in &[(1usize, 0usize), (0, 1)] {
            let s = shared_mut(&mut c);
            s.back += 1;
            s.array.push(Some(Value::Int(t as i64)));
            apply_commit(
                &mut c,
                CommitAction::Compose(vec![
                    CommitAction::SetGhost(ids[t], GhostValue::Slot(slot)),
                    CommitAction::Complete(ids[t], Value::Unit),
                ]),
            )
            .unwrap();
        }
        apply_commit(&mut c, CommitAction::AddEdges(vec![(ids[0], ids[1])])).unwrap();
        let names: Vec<_> = check_inv(&c).into_iter().map(|f| f.check).collect();
        assert_eq!(names, vec!["untaken-order-matches-slots"]);
    }
}
