//! Time-stamped queue over single-producer pools with interval timestamps.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::commitment::{apply_commit, my_eid, CommitAction, CommitError, Configuration, GhostValue};
use crate::history::{EventId, EventSet, History};
use crate::monitor::Finding;
use crate::simsched::{DsState, Effect, Mutation, StepCtx, StepOutput};
use crate::value::{Op, ThreadId, Value};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Timestamp {
    Top,
    Interval(i64, i64),
}

/// `(s1,e1) < (s2,e2)` iff `e1 < s2`; every interval is below `Top`.
pub fn ts_lt(a: Timestamp, b: Timestamp) -> bool {
    match (a, b) {
        (Timestamp::Interval(_, e1), Timestamp::Interval(s2, _)) => e1 < s2,
        (Timestamp::Interval(..), Timestamp::Top) => true,
        (Timestamp::Top, _) => false,
    }
}

pub type PoolId = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PoolEntry {
    pub pid: PoolId,
    pub val: Value,
    pub ts: Timestamp,
}

/// Shared state: one pool per thread and the timestamp counter.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TsShared {
    pub pools: Vec<Vec<PoolEntry>>,
    pub counter: i64,
    pub next_pid: PoolId,
}

impl TsShared {
    pub fn new(threads: usize) -> TsShared {
        TsShared { pools: vec![Vec::new(); threads], counter: 1, next_pid: 0 }
    }

    pub fn insert(&mut self, t: ThreadId, v: Value) -> PoolId {
        let pid = self.next_pid;
        self.next_pid += 1;
        self.pools[t].push(PoolEntry { pid, val: v, ts: Timestamp::Top });
        pid
    }

    pub fn set_timestamp(&mut self, t: ThreadId, pid: PoolId, ts: Timestamp) {
        if let Some(e) = self.pools[t].iter_mut().find(|e| e.pid == pid) {
            e.ts = ts;
        }
    }

    pub fn get_oldest(&self, t: ThreadId) -> Option<(PoolId, Timestamp)> {
        self.pools[t].first().map(|e| (e.pid, e.ts))
    }

    pub fn remove(&mut self, t: ThreadId, pid: PoolId) -> Option<Value> {
        let pos = self.pools[t].iter().position(|e| e.pid == pid)?;
        Some(self.pools[t].remove(pos).val)
    }
}

/// The timestamp generator as a small step machine: read the counter, try
/// to bump it, and on failure read it once more.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NewTimestamp {
    Read,
    Cas(i64),
    Reread(i64),
}

impl NewTimestamp {
    /// Executes one atomic step; returns the timestamp once generated.
    pub fn step(&mut self, counter: &mut i64) -> Option<Timestamp> {
        match *self {
            NewTimestamp::Read => {
                *self = NewTimestamp::Cas(*counter);
                None
            }
            NewTimestamp::Cas(ts) => {
                if *counter == ts {
                    *counter = ts + 1;
                    Some(Timestamp::Interval(ts, ts))
                } else {
                    *self = NewTimestamp::Reread(ts);
                    None
                }
            }
            NewTimestamp::Reread(ts) => Some(Timestamp::Interval(ts, *counter - 1)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EnqPc {
    Insert,
    Stamp(NewTimestamp),
    SetTimestamp,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct EnqFrame {
    pub v: Value,
    pub pc: EnqPc,
    pub pid: Option<PoolId>,
    pub ts: Option<Timestamp>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DeqPc {
    Stamp(NewTimestamp),
    Scan,
    Remove,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct DeqFrame {
    pub pc: DeqPc,
    pub start_ts: Option<Timestamp>,
    pub cand_pid: Option<PoolId>,
    pub cand_ts: Timestamp,
    pub cand_tid: Option<ThreadId>,
    pub cand: Option<EventId>,
    /// First pool visited in this pass.
    pub start: usize,
    /// Pools visited so far in this pass.
    pub iters: usize,
    /// Bitmask of visited threads.
    pub visited: u64,
    /// Bitmask of enqueue events that were completed, in the visited pool,
    /// not above `start_ts` and ordered before this dequeue when it looked.
    pub observed: u64,
}

impl DeqFrame {
    fn fresh() -> DeqFrame {
        DeqFrame {
            pc: DeqPc::Stamp(NewTimestamp::Read),
            start_ts: None,
            cand_pid: None,
            cand_ts: Timestamp::Top,
            cand_tid: None,
            cand: None,
            start: 0,
            iters: 0,
            visited: 0,
            observed: 0,
        }
    }

    fn scanning(&self) -> bool {
        matches!(self.pc, DeqPc::Scan | DeqPc::Remove)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TsFrame {
    Enq(EnqFrame),
    Deq(DeqFrame),
}

impl TsFrame {
    pub fn start(op: Op, arg: Value) -> Option<TsFrame> {
        match op {
            Op::Enq => Some(TsFrame::Enq(EnqFrame { v: arg, pc: EnqPc::Insert, pid: None, ts: None })),
            Op::Deq => Some(TsFrame::Deq(DeqFrame::fresh())),
            _ => None,
        }
    }

    /// Number of scheduler branches at the next step: the first pool scan
    /// picks the starting pool.
    pub fn arity(&self, threads: usize) -> usize {
        match self {
            TsFrame::Deq(d) if d.pc == DeqPc::Scan && d.iters == 0 => threads,
            _ => 1,
        }
    }
}

fn shared(cfg: &Configuration) -> &TsShared {
    match &cfg.state.ds {
        DsState::Ts(s) => s,
        _ => panic!("time-stamped queue step on a different structure"),
    }
}

fn shared_mut(cfg: &mut Configuration) -> &mut TsShared {
    match &mut cfg.state.ds {
        DsState::Ts(s) => s,
        _ => panic!("time-stamped queue step on a different structure"),
    }
}

fn ghost(cfg: &Configuration) -> &BTreeMap<EventId, Timestamp> {
    static EMPTY: BTreeMap<EventId, Timestamp> = BTreeMap::new();
    cfg.ghost.ts().unwrap_or(&EMPTY)
}

/// The enqueue event of thread `t` whose ghost timestamp is `ts`.
pub fn enq_of(h: &History, g: &BTreeMap<EventId, Timestamp>, t: ThreadId, ts: Timestamp) -> Option<EventId> {
    g.iter()
        .find(|(id, &gts)| gts == ts && h.event(**id).is_some_and(|e| e.thread == t && e.op == Op::Enq))
        .map(|(id, _)| *id)
}

/// Enqueue events whose values are currently in the pools.
pub fn in_queue(cfg: &Configuration) -> EventSet {
    let s = shared(cfg);
    let g = ghost(cfg);
    let mut out = EventSet::EMPTY;
    for (t, pool) in s.pools.iter().enumerate() {
        for entry in pool {
            if let Some(id) = enq_of(&cfg.history, g, t, entry.ts) {
                out.insert(id);
            }
        }
    }
    out
}

/// Completed in-pool enqueues ordered before `d`, not above its start
/// timestamp, from pools it has visited. This is the literal set; an
/// enqueue can enter it after its pool was visited, while still pending.
pub fn seen_literal(cfg: &Configuration, d: EventId, frame: &DeqFrame) -> EventSet {
    let Some(start_ts) = frame.start_ts else {
        return EventSet::EMPTY;
    };
    let g = ghost(cfg);
    let h = &cfg.history;
    in_queue(cfg)
        .intersect(h.completed())
        .iter()
        .filter(|&e| {
            h.precedes(e, d)
                && g.get(&e).is_some_and(|&ts| !ts_lt(start_ts, ts))
                && h.event(e).is_some_and(|ev| frame.visited & (1u64 << ev.thread) != 0)
        })
        .collect()
}

/// The enqueues whose values dequeue `d` actually saw: members of the
/// literal set that already qualified when their pool was visited.
pub fn seen(cfg: &Configuration, d: EventId, frame: &DeqFrame) -> EventSet {
    seen_literal(cfg, d, frame).intersect(EventSet::from_bits(frame.observed))
}

pub fn step(
    cfg: &mut Configuration,
    t: ThreadId,
    frame: &mut TsFrame,
    branch: usize,
    ctx: &StepCtx,
) -> Result<StepOutput, CommitError> {
    let me = my_eid(cfg, t)?;
    match frame {
        TsFrame::Enq(f) => enqueue_step(cfg, t, me, f),
        TsFrame::Deq(f) => dequeue_step(cfg, me, f, branch, ctx),
    }
}

fn enqueue_step(cfg: &mut Configuration, t: ThreadId, me: EventId, f: &mut EnqFrame) -> Result<StepOutput, CommitError> {
    match f.pc {
        EnqPc::Insert => {
            let pid = shared_mut(cfg).insert(t, f.v);
            apply_commit(cfg, CommitAction::SetGhost(me, GhostValue::Ts(Timestamp::Top)))?;
            f.pid = Some(pid);
            f.pc = EnqPc::Stamp(NewTimestamp::Read);
            Ok(StepOutput::cont())
        }
        EnqPc::Stamp(mut nts) => {
            let generated = nts.step(&mut shared_mut(cfg).counter);
            match generated {
                Some(ts) => {
                    f.ts = Some(ts);
                    f.pc = EnqPc::SetTimestamp;
                }
                None => f.pc = EnqPc::Stamp(nts),
            }
            Ok(StepOutput::cont())
        }
        EnqPc::SetTimestamp => {
            let (pid, ts) = (f.pid.expect("inserted"), f.ts.expect("stamped"));
            shared_mut(cfg).set_timestamp(t, pid, ts);
            apply_commit(
                cfg,
                CommitAction::Compose(vec![
                    CommitAction::SetGhost(me, GhostValue::Ts(ts)),
                    CommitAction::Complete(me, Value::Unit),
                ]),
            )?;
            Ok(StepOutput::finished(Value::Unit))
        }
    }
}

fn dequeue_step(
    cfg: &mut Configuration,
    me: EventId,
    f: &mut DeqFrame,
    branch: usize,
    ctx: &StepCtx,
) -> Result<StepOutput, CommitError> {
    match f.pc {
        DeqPc::Stamp(mut nts) => {
            match nts.step(&mut shared_mut(cfg).counter) {
                Some(ts) => {
                    *f = DeqFrame { pc: DeqPc::Scan, start_ts: Some(ts), ..DeqFrame::fresh() };
                }
                None => f.pc = DeqPc::Stamp(nts),
            }
            Ok(StepOutput::cont())
        }
        DeqPc::Scan => {
            let n = ctx.threads;
            if f.iters == 0 {
                f.start = branch % n;
            }
            let k = (f.start + f.iters) % n;
            let start_ts = f.start_ts.expect("start timestamp generated");
            let oldest = shared(cfg).get_oldest(k);
            let mut out = StepOutput::cont();
            if !ctx.has(Mutation::TsNoScanEdges) {
                let g = ghost(cfg);
                let edges: Vec<_> = in_queue(cfg)
                    .intersect(cfg.history.completed())
                    .iter()
                    .filter(|e| g.get(e).is_some_and(|&ts| !ts_lt(start_ts, ts)))
                    .map(|e| (e, me))
                    .collect();
                apply_commit(cfg, CommitAction::AddEdges(edges))?;
            }
            if let Some((pid, ts)) = oldest {
                let guard = ctx.has(Mutation::TsSkipStartTsGuard) || !ts_lt(start_ts, ts);
                if ts_lt(ts, f.cand_ts) && guard {
                    f.cand_pid = Some(pid);
                    f.cand_ts = ts;
                    f.cand_tid = Some(k);
                    f.cand = enq_of(&cfg.history, ghost(cfg), k, ts);
                    if f.cand.is_none() {
                        out.findings.push(Finding::new(
                            "pool-entry-has-enqueue",
                            format!("no enqueue of thread {k} carries timestamp {ts:?}"),
                        ));
                    }
                }
            }
            f.visited |= 1u64 << k;
            let h = &cfg.history;
            let g = ghost(cfg);
            for entry in &shared(cfg).pools[k] {
                if let Some(e) = enq_of(h, g, k, entry.ts) {
                    if h.event(e).is_some_and(|ev| ev.is_completed())
                        && !ts_lt(start_ts, entry.ts)
                        && h.precedes(e, me)
                    {
                        f.observed |= 1u64 << e.index();
                    }
                }
            }
            f.iters += 1;
            if f.iters == n {
                if f.cand_pid.is_some() {
                    f.pc = DeqPc::Remove;
                } else {
                    *f = DeqFrame::fresh();
                    out.effect = Effect::Retry;
                }
            }
            Ok(out)
        }
        DeqPc::Remove => {
            let (tid, pid) = (f.cand_tid.expect("candidate"), f.cand_pid.expect("candidate"));
            match shared_mut(cfg).remove(tid, pid) {
                Some(v) => {
                    let mut parts = vec![CommitAction::Complete(me, v)];
                    if !ctx.has(Mutation::TsNoScanEdges) {
                        parts.push(CommitAction::AddEdges(removal_edges(cfg, me, f.cand, ctx)));
                    }
                    apply_commit(cfg, CommitAction::Compose(parts))?;
                    Ok(StepOutput::finished(v))
                }
                None => {
                    *f = DeqFrame::fresh();
                    Ok(StepOutput::retry())
                }
            }
        }
    }
}

/// Edges committed by a successful removal: the removed enqueue before every
/// enqueue still in the pools or not yet finished, and the current dequeue
/// before every uncompleted dequeue.
fn removal_edges(cfg: &Configuration, me: EventId, cand: Option<EventId>, ctx: &StepCtx) -> Vec<(EventId, EventId)> {
    let h = &cfg.history;
    let mut edges = Vec::new();
    if let Some(c) = cand {
        let mut later = in_queue(cfg);
        if !ctx.has(Mutation::TsInQueueOnlyOrder) {
            for e in h.uncompleted().iter() {
                if h.event(e).is_some_and(|ev| ev.op == Op::Enq) {
                    later.insert(e);
                }
            }
        }
        later.remove(c);
        edges.extend(later.iter().map(|e| (c, e)));
    }
    for d in h.uncompleted().iter() {
        if d != me && h.event(d).is_some_and(|ev| ev.op == Op::Deq) {
            edges.push((me, d));
        }
    }
    edges
}

/// Structure invariant checks over a configuration.
pub fn check_inv(cfg: &Configuration) -> Vec<Finding> {
    let mut out = Vec::new();
    let h = &cfg.history;
    let s = shared(cfg);
    let g = ghost(cfg);
    let inq = in_queue(cfg);
    let done = h.completed();
    let op = |e: EventId| h.event(e).map(|ev| ev.op);

    for i in done.iter().filter(|&i| op(i) == Some(Op::Deq)) {
        for j in h.uncompleted().iter().filter(|&j| op(j) == Some(Op::Deq)) {
            if !h.precedes(i, j) {
                out.push(Finding::new(
                    "completed-dequeues-precede-pending",
                    format!("{i} is not ordered before pending {j}"),
                ));
            }
        }
    }
    for i in done.minus(inq).iter().filter(|&i| op(i) == Some(Op::Enq)) {
        for j in inq.iter() {
            if !h.precedes(i, j) {
                out.push(Finding::new(
                    "dequeued-enqueues-precede-queued",
                    format!("dequeued {i} is not ordered before queued {j}"),
                ));
            }
        }
    }
    for i in inq.iter() {
        for j in inq.iter() {
            if h.precedes(i, j) && !ts_lt(g[&i], g[&j]) {
                out.push(Finding::new(
                    "queued-order-matches-timestamps",
                    format!("{i} precedes {j} but {:?} is not below {:?}", g[&i], g[&j]),
                ));
            }
        }
    }
    for (t, pool) in s.pools.iter().enumerate() {
        for (x, a) in pool.iter().enumerate() {
            for b in &pool[x + 1..] {
                let (ea, eb) = (enq_of(h, g, t, a.ts), enq_of(h, g, t, b.ts));
                if let (Some(ea), Some(eb)) = (ea, eb) {
                    if !h.precedes(ea, eb) {
                        out.push(Finding::new(
                            "pool-order-matches-history",
                            format!("pool {t} holds {ea} before {eb} but they are not ordered"),
                        ));
                    }
                }
            }
            let matched = g.iter().any(|(id, &ts)| {
                ts == a.ts && h.event(*id).is_some_and(|e| e.thread == t && e.op == Op::Enq && e.arg == a.val)
            });
            if !matched {
                out.push(Finding::new(
                    "pool-entry-has-enqueue",
                    format!("pool {t} entry {} has no matching enqueue", a.pid),
                ));
            }
        }
    }
    for (id, ts) in g {
        if let Timestamp::Interval(_, b) = ts {
            if *b >= s.counter {
                out.push(Finding::new(
                    "timestamps-below-counter",
                    format!("{id} has timestamp ending at {b}, counter is {}", s.counter),
                ));
            }
        }
        if op(*id) != Some(Op::Enq) {
            out.push(Finding::new("timestamps-only-on-enqueues", format!("{id} is not an enqueue")));
        }
    }
    for (a, ta) in g {
        for (b, tb) in g.range(EventId(a.0 + 1)..) {
            let same_thread = h.event(*a).map(|e| e.thread) == h.event(*b).map(|e| e.thread);
            if same_thread && ta == tb {
                out.push(Finding::new(
                    "per-thread-timestamps-distinct",
                    format!("{a} and {b} share timestamp {ta:?}"),
                ));
            }
        }
    }
    for e in h.events().filter(|e| e.op == Op::Enq) {
        let top_or_none = g.get(&e.id).is_none_or(|&ts| ts == Timestamp::Top);
        if e.is_completed() == top_or_none {
            out.push(Finding::new(
                "pending-enqueues-have-top-timestamp",
                format!("{} completion does not match its timestamp {:?}", e.id, g.get(&e.id)),
            ));
        }
    }
    out
}

/// Per-thread checks: the dequeue loop invariant with candidate minimality,
/// and the timestamp postcondition of an enqueue that has stamped.
pub fn check_thread(cfg: &Configuration, t: ThreadId, frame: &TsFrame) -> Vec<Finding> {
    let mut out = Vec::new();
    let Some(me) = cfg.current[t] else {
        return out;
    };
    let h = &cfg.history;
    let g = ghost(cfg);
    match frame {
        TsFrame::Enq(f) => {
            if let (EnqPc::SetTimestamp, Some(ts)) = (f.pc, f.ts) {
                for i in in_queue(cfg).iter().filter(|&i| h.precedes(i, me)) {
                    if !ts_lt(g[&i], ts) {
                        out.push(Finding::new(
                            "new-timestamp-exceeds-predecessors",
                            format!("{i} precedes {me} but {:?} is not below {ts:?}", g[&i]),
                        ));
                    }
                }
            }
        }
        TsFrame::Deq(f) if f.scanning() => {
            let seen_set = seen(cfg, me, f);
            let no_cand = seen_set.is_empty() && f.cand_pid.is_none();
            let inq = in_queue(cfg);
            let cand = f.cand_tid.and_then(|k| enq_of(h, g, k, f.cand_ts));
            let is_cand = match cand {
                Some(c) if f.cand_pid.is_some() => {
                    let cts = g[&c];
                    let min_ts = seen_set.iter().all(|e| !ts_lt(g[&e], cts));
                    let kept = !inq.contains(c) || seen_set.contains(c);
                    min_ts && kept && f.cand == Some(c)
                }
                _ => false,
            };
            if !no_cand && !is_cand {
                out.push(Finding::new(
                    "dequeue-candidate-loop-invariant",
                    format!("{me}: neither without candidate nor with a minimal seen candidate (cand {cand:?}, seen {:?})", seen_set.iter().collect::<Vec<_>>()),
                ));
            }
            if let (true, Some(c)) = (is_cand, cand) {
                if inq.contains(c) {
                    for e in inq.iter() {
                        let visited = h.event(e).is_some_and(|ev| f.visited & (1u64 << ev.thread) != 0);
                        if visited && h.precedes(e, c) {
                            out.push(Finding::new(
                                "candidate-minimal-in-history",
                                format!("{e} from a visited pool precedes candidate {c}"),
                            ));
                        }
                    }
                }
            }
        }
        TsFrame::Deq(_) => {}
    }
    out
}

/// The seen set of every scanning dequeue only shrinks when another thread
/// steps.
pub fn check_env_step(
    before: &Configuration,
    after: &Configuration,
    stepped: ThreadId,
    frames: &[(ThreadId, &TsFrame)],
) -> Vec<Finding> {
    let mut out = Vec::new();
    for &(t, frame) in frames {
        if t == stepped {
            continue;
        }
        let TsFrame::Deq(f) = frame else {
            continue;
        };
        if !f.scanning() {
            continue;
        }
        let Some(d) = after.current[t] else {
            continue;
        };
        let was = seen(before, d, f);
        let now = seen(after, d, f);
        if !now.is_subset(was) {
            out.push(Finding::new(
                "seen-set-only-shrinks",
                format!("step of thread {stepped} grew the seen set of {d}"),
            ));
        }
    }
    out
}

/// Values of completed enqueues still in the pools, for comparing against
/// the contents of the sequential queue after a linearization.
pub fn queued_values(cfg: &Configuration) -> Vec<Value> {
    let h = &cfg.history;
    let mut v: Vec<Value> = in_queue(cfg)
        .intersect(h.completed())
        .iter()
        .filter_map(|e| h.event(e).map(|ev| ev.arg))
        .collect();
    v.sort();
    v
}
