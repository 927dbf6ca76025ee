//! Brute-force linearizability checker: try every completion of the
//! pending events and search for a sequential witness that respects the
//! real-time order.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::commitment::SizeLimit;
use crate::history::{step_states, EventId, EventSet, History};
use crate::monitor::{Category, Violation};
use crate::seqspec::{SeqSpec, SpecKind};
use crate::value::Value;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Witness {
    /// The completed history that was linearized.
    pub completion: History,
    /// A total order of its events accepted by the specification.
    pub order: Vec<EventId>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleVerdict {
    pub linearizable: bool,
    pub witness: Option<Witness>,
    /// Completions tried before the verdict.
    pub completions: usize,
}

/// Candidate return values for pending events: for queues every enqueued
/// value plus ⊥, for sets both booleans.
pub fn retvals_for(spec: SpecKind, args: impl IntoIterator<Item = Value>) -> Vec<Value> {
    match spec {
        SpecKind::Queue => {
            let mut v: Vec<Value> = args.into_iter().filter(|a| *a != Value::Unit).collect();
            v.push(Value::Unit);
            v.sort();
            v.dedup();
            v
        }
        SpecKind::Set => vec![Value::Bool(false), Value::Bool(true)],
    }
}

/// Whether `h` can be completed (dropping some pending events, giving the
/// rest return values from `retvals`) to a history with a linearization
/// accepted by `spec`.
pub fn is_linearizable<S: SeqSpec>(
    h: &History,
    spec: &S,
    retvals: &[Value],
    cap: usize,
) -> Result<OracleVerdict, SizeLimit> {
    if h.len() > cap {
        return Err(SizeLimit { events: h.len(), cap });
    }
    let pending: Vec<EventId> = h.uncompleted().iter().collect();
    let mut subsets: Vec<u64> = (0..1u64 << pending.len()).collect();
    subsets.sort_by_key(|m| (m.count_ones(), *m));
    let mut completions = 0;
    for mask in subsets {
        let kept: Vec<EventId> = pending.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, e)| *e).collect();
        let dropped: EventSet = pending.iter().copied().filter(|e| !kept.contains(e)).collect();
        let base = restrict(h, h.ids().minus(dropped));
        let mut choice = vec![0usize; kept.len()];
        loop {
            let mut c = base.clone();
            for (e, &r) in kept.iter().zip(&choice) {
                c.complete_event(*e, retvals[r]).expect("pending event");
            }
            completions += 1;
            if let Some(order) = linearize(&c, spec) {
                return Ok(OracleVerdict { linearizable: true, witness: Some(Witness { completion: c, order }), completions });
            }
            if !next_assignment(&mut choice, retvals.len()) {
                break;
            }
        }
    }
    Ok(OracleVerdict { linearizable: false, witness: None, completions })
}

fn next_assignment(choice: &mut [usize], base: usize) -> bool {
    for c in choice.iter_mut() {
        *c += 1;
        if *c < base {
            return true;
        }
        *c = 0;
    }
    false
}

fn restrict(h: &History, keep: EventSet) -> History {
    let events: Vec<_> = h.events().filter(|e| keep.contains(e.id)).copied().collect();
    let order: Vec<_> = h
        .order_pairs()
        .into_iter()
        .filter(|(a, b)| keep.contains(*a) && keep.contains(*b))
        .collect();
    History::from_raw(events, order).expect("restriction of a valid history")
}

/// A total order of the (all completed) events of `h` extending its order
/// and accepted by `spec`.
fn linearize<S: SeqSpec>(h: &History, spec: &S) -> Option<Vec<EventId>> {
    let mut failed = HashSet::new();
    let mut path = Vec::new();
    search(h, spec, EventSet::EMPTY, spec.initial(), &mut failed, &mut path).then_some(path)
}

fn search<S: SeqSpec>(
    h: &History,
    spec: &S,
    placed: EventSet,
    state: S::State,
    failed: &mut HashSet<(EventSet, S::State)>,
    path: &mut Vec<EventId>,
) -> bool {
    let all = h.ids();
    if placed == all {
        return true;
    }
    if failed.contains(&(placed, state.clone())) {
        return false;
    }
    for e in all.minus(placed).iter() {
        if !h.predecessors(e).is_subset(placed) {
            continue;
        }
        let ev = h.event(e).expect("event present");
        let mut now = placed;
        now.insert(e);
        for next in step_states(spec, std::slice::from_ref(&state), ev) {
            path.push(e);
            if search(h, spec, now, next, failed, path) {
                return true;
            }
            path.pop();
        }
    }
    failed.insert((placed, state));
    false
}

/// If the method accepted a run, the oracle must accept its concrete
/// history. Returns the discrepancy otherwise.
pub fn crosscheck<S: SeqSpec>(
    concrete: &History,
    method_passed: bool,
    spec: &S,
    retvals: &[Value],
    cap: usize,
) -> Result<Option<Violation>, SizeLimit> {
    if !method_passed {
        return Ok(None);
    }
    let v = is_linearizable(concrete, spec, retvals, cap)?;
    Ok((!v.linearizable).then(|| {
        Violation::new(
            Category::Discrepancy,
            "oracle-agrees",
            "abstract-history checks passed but the concrete history is not linearizable",
        )
    }))
}
