//! Acceptance criteria 1-8. Each criterion prints one PASS/FAIL line to
//! stderr (bypassing the test harness capture); the test fails if any does.

use std::collections::BTreeSet;
use std::io::Write;
use std::time::{Duration, Instant};

use polarize_core::history::History;
use polarize_core::linoracle::{is_linearizable, retvals_for};
use polarize_core::simsched::format_schedule;
use polarize_core::tsqueue::{ts_lt, NewTimestamp, Timestamp};
use polarize_core::{
    check_abs, exhaustive, member, random, replay, AbsVerdict, Call, CheckConfig, Choice, Event, EventId,
    ExploreOptions, Mutation, Op, OpResult, QueueSpec, SeqSpec, SpecKind, Status, Structure, Value, Workload,
    World,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn report(n: usize, name: &str, elapsed: Duration, v: &Verdict) {
    let line = format!(
        "criterion {n} {name}: {} ({:.2?}) {}\n",
        if v.pass { "PASS" } else { "FAIL" },
        elapsed,
        v.detail
    );
    // Direct writes are not captured by the test harness.
    let _ = std::io::stderr().write_all(line.as_bytes());
}

fn ev(id: u32, thread: usize, op: Op, arg: Value, result: Option<Value>) -> Event {
    Event { id: EventId(id), thread, op, arg, result: result.map_or(OpResult::Todo, OpResult::Done) }
}

fn enq(id: u32, t: usize, v: i64) -> Event {
    ev(id, t, Op::Enq, Value::Int(v), Some(Value::Unit))
}

fn deq(id: u32, t: usize, r: Value) -> Event {
    ev(id, t, Op::Deq, Value::Unit, Some(r))
}

fn calls(s: &[&str]) -> Vec<Call> {
    s.iter().map(|c| c.parse().unwrap()).collect()
}

fn describe(w: &Workload) -> String {
    let threads: Vec<String> = w
        .threads
        .iter()
        .map(|t| t.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(", "))
        .collect();
    format!("{} [{}]", w.structure, threads.join(" | "))
}

fn workload(s: Structure, threads: &[&[&str]], seeds: &[&str]) -> Workload {
    Workload::new(s, threads.iter().map(|t| calls(t)).collect()).with_seeds(calls(seeds))
}

/// Enq(1) ≺ Enq(3) on one thread, Enq(2) overlapping both, and a dequeue
/// after all three returning `r`.
fn figure_one(r: Value) -> History {
    let events = [enq(0, 0, 1), enq(1, 1, 2), enq(2, 0, 3), deq(3, 2, r)];
    let order = [(0, 2), (0, 3), (1, 3), (2, 3)].map(|(a, b)| (EventId(a), EventId(b)));
    History::from_raw(events, order).unwrap()
}

fn criterion_1() -> Verdict {
    let enqs = History::from_raw([enq(0, 0, 1), enq(1, 1, 2), enq(2, 0, 3)], [(EventId(0), EventId(2))]).unwrap();
    let n = enqs.linear_extensions::<QueueSpec>(None).count();
    let allowed: Vec<i64> = (1..=3)
        .filter(|&r| figure_one(Value::Int(r)).linear_extensions(Some(&QueueSpec)).next().is_some())
        .collect();
    Verdict { pass: n == 3 && allowed == [1, 2], detail: format!("{n} extensions, dequeue may return {allowed:?}") }
}

fn criterion_2() -> Verdict {
    let seq = |first: i64, second: i64| [enq(0, 0, first), enq(1, 0, second), enq(2, 0, 3), deq(3, 0, Value::Int(2))];
    let a = member(&seq(2, 1), &QueueSpec);
    let b = member(&seq(1, 2), &QueueSpec);
    Verdict { pass: a && !b, detail: format!("[Enq(2);Enq(1);Enq(3);Deq():2] -> {a}, [Enq(1);Enq(2);Enq(3);Deq():2] -> {b}") }
}

struct SuiteResult {
    workloads: usize,
    states: usize,
    failing: Vec<String>,
    /// Failing workloads whose violations are all the interval-order clause
    /// on abstract histories.
    interval_only: usize,
}

/// Full checks on every workload; reports the first violation of each.
fn run_suite(cases: &[Workload]) -> SuiteResult {
    let mut r = SuiteResult { workloads: cases.len(), states: 0, failing: Vec::new(), interval_only: 0 };
    for w in cases {
        let e = exhaustive(w, &ExploreOptions::default()).unwrap();
        r.states += e.states;
        if let Some(v) = e.violations.first() {
            if v.check == "interval-order" && v.detail.starts_with("abstract") {
                r.interval_only += 1;
            }
            r.failing.push(format!("{}: {v} [{}]", describe(w), format_schedule(&v.schedule)));
        }
    }
    r
}

/// The same workloads with the abstract interval-order clause switched off;
/// `sample` workloads are too large to enumerate and get random runs.
fn without_interval_order(cases: &[Workload], sample: &[usize]) -> (usize, Vec<String>) {
    let mut checks = CheckConfig::default();
    checks.abstract_interval_order = false;
    let opts = ExploreOptions { checks, ..Default::default() };
    let mut runs = 0usize;
    let mut bad = Vec::new();
    for (i, w) in cases.iter().enumerate() {
        if sample.contains(&i) {
            for r in random(w, checks, 7, 300).unwrap() {
                runs += 1;
                if let Some(v) = r.violations.first() {
                    bad.push(format!("{}: {v}", describe(w)));
                    break;
                }
            }
        } else {
            let e = exhaustive(w, &opts).unwrap();
            runs += e.states;
            if let Some(v) = e.violations.first() {
                bad.push(format!("{}: {v}", describe(w)));
            }
        }
    }
    (runs, bad)
}

fn suite_verdict(cases: &[Workload], sample: &[usize]) -> Verdict {
    let r = run_suite(cases);
    let mut detail = format!(
        "{} workloads, {} states, {} with violations",
        r.workloads,
        r.states,
        r.failing.len()
    );
    if !r.failing.is_empty() {
        let (n, bad) = without_interval_order(cases, sample);
        detail += &format!(
            "; {} of them only on abstract interval order; with that clause off: {} further violations over {n} states/runs",
            r.interval_only,
            bad.len()
        );
        for f in r.failing.iter().chain(&bad) {
            detail += &format!("\n    {f}");
        }
    }
    Verdict { pass: r.failing.is_empty(), detail }
}

fn queue_catalogue(s: Structure) -> Vec<Workload> {
    let cases: [&[&[&str]]; 11] = [
        &[&["enq 1"], &["deq"]],
        &[&["enq 1", "enq 2"], &["deq", "deq"]],
        &[&["enq 1", "deq"], &["enq 2", "deq"]],
        &[&["deq", "enq 1"], &["deq", "enq 2"]],
        &[&["enq 1", "enq 2"], &["enq 3", "deq"]],
        &[&["enq 1", "deq", "enq 2"], &["deq"]],
        &[&["deq"], &["enq 1", "enq 2"]],
        &[&["enq 1", "enq 2", "enq 3"], &["deq", "deq"]],
        &[&["enq 1"], &["enq 2"], &["deq"]],
        &[&["enq 1", "enq 3"], &["enq 2"], &["deq"]],
        &[&["enq 1", "enq 3"], &["enq 2", "deq"], &["deq"]],
    ];
    cases.iter().map(|t| workload(s, t, &[])).collect()
}

/// The last two queue workloads have three threads and too many states to
/// enumerate with the interval-order clause off.
const LARGE_QUEUE_CASES: [usize; 2] = [9, 10];

fn set_catalogue() -> Vec<Workload> {
    let cases: [(&[&[&str]], &[&str]); 11] = [
        (&[&["insert 1"], &["insert 1"]], &[]),
        (&[&["insert 1"], &["remove 1"]], &[]),
        (&[&["insert 1"], &["contains 1"]], &[]),
        (&[&["insert 1", "remove 1"], &["insert 1", "contains 1"]], &[]),
        (&[&["insert 1", "remove 2"], &["insert 2", "contains 1"]], &[]),
        (&[&["remove 2"], &["contains 2", "insert 2"]], &["insert 2"]),
        (&[&["insert 2", "insert 3"], &["remove 2", "contains 3"]], &["insert 1"]),
        (&[&["insert 1"], &["insert 2"], &["contains 1"]], &[]),
        (&[&["remove 1"], &["insert 1"], &["contains 1"]], &["insert 1"]),
        (&[&["insert 3", "remove 3"], &["contains 3"], &["insert 2"]], &[]),
        (SET_SCENARIO, &["insert 1", "insert 2", "insert 4"]),
    ];
    cases.iter().map(|(t, s)| workload(Structure::OptSet, t, s)).collect()
}

const SET_SCENARIO: &[&[&str]] = &[&["remove 1", "remove 2"], &["contains 2", "insert 3"], &["contains 3"]];

fn criterion_3() -> Verdict {
    suite_verdict(&queue_catalogue(Structure::TsQueue), &LARGE_QUEUE_CASES)
}

/// Runs `t` until its current operation has returned.
fn finish_op(w: &Workload, world: &mut World, t: usize, schedule: &mut Vec<Choice>) {
    let ctx = w.ctx();
    let start = world.threads[t].next;
    while world.threads[t].next == start {
        let c = Choice::new(t, 0);
        world.advance(w, &ctx, c).unwrap();
        schedule.push(c);
    }
}

/// The set scenario: both contains operations reach the node holding 1,
/// then remove 1, remove 2, contains 2, insert 3 and contains 3 finish in
/// that order. Returns the abstract history and the schedule.
fn set_scenario() -> (World, Vec<Choice>) {
    let w = workload(Structure::OptSet, SET_SCENARIO, &["insert 1", "insert 2", "insert 4"]);
    let ctx = w.ctx();
    let mut world = World::new(&w).unwrap();
    let mut s = Vec::new();
    for t in [1, 1, 2, 2] {
        world.advance(&w, &ctx, Choice::new(t, 0)).unwrap();
        s.push(Choice::new(t, 0));
    }
    for t in [0, 0, 1, 1, 2] {
        finish_op(&w, &mut world, t, &mut s);
    }
    (world, s)
}

fn set_scenario_check() -> (bool, String) {
    let (world, schedule) = set_scenario();
    let w = workload(Structure::OptSet, SET_SCENARIO, &["insert 1", "insert 2", "insert 4"]);
    let checked = replay(&w, CheckConfig::default(), &schedule).unwrap();
    let h = world.cfg.history.floor();
    let label = |e: &Event| format!("{}({}):{}", e.op.name(), e.arg, e.result.value().unwrap());
    let expected = [
        "insert(1):true",
        "insert(2):true",
        "insert(4):true",
        "remove(1):true",
        "contains(2):true",
        "remove(2):true",
        "contains(3):false",
        "insert(3):true",
    ];
    let found = h
        .linear_extensions(Some(&SpecKind::Set))
        .any(|ext| ext.iter().map(label).collect::<Vec<_>>() == expected);
    let abs = check_abs(&world.cfg.history, &SpecKind::Set, 24).unwrap();
    let ok = found && abs == AbsVerdict::Pass && checked.violations.is_empty();
    let mut detail = format!(
        "set scenario: stated linearization among extensions {found}, abs {}, run checks {}",
        if abs == AbsVerdict::Pass { "pass" } else { "fail" },
        if checked.violations.is_empty() { "pass".to_string() } else { checked.violations[0].to_string() }
    );
    if !ok {
        detail += &format!(" [{}]", format_schedule(&schedule));
    }
    (ok, detail)
}

fn criterion_4() -> Verdict {
    let hw = suite_verdict(&queue_catalogue(Structure::HwQueue), &[]);
    let set = suite_verdict(&set_catalogue(), &[]);
    let (scenario, sdetail) = set_scenario_check();
    Verdict {
        pass: hw.pass && set.pass && scenario,
        detail: format!("hwqueue: {}\n  optset: {}\n  {sdetail}", hw.detail, set.detail),
    }
}

/// Every interleaving of two timestamp generators. `a` and `b` are the
/// remaining step sequences; a generator's call spans from its first to its
/// last step.
fn timestamp_interleavings() -> Vec<(Vec<usize>, Timestamp, Timestamp)> {
    fn go(
        counter: i64,
        m: [NewTimestamp; 2],
        done: [Option<Timestamp>; 2],
        trace: Vec<usize>,
        out: &mut Vec<(Vec<usize>, Timestamp, Timestamp)>,
    ) {
        if let [Some(a), Some(b)] = done {
            out.push((trace, a, b));
            return;
        }
        for t in 0..2 {
            if done[t].is_some() {
                continue;
            }
            let (mut c, mut m2, mut d2, mut tr) = (counter, m, done, trace.clone());
            d2[t] = m2[t].step(&mut c);
            tr.push(t);
            go(c, m2, d2, tr, out);
        }
    }
    let mut out = Vec::new();
    go(1, [NewTimestamp::Read; 2], [None; 2], Vec::new(), &mut out);
    out
}

fn criterion_5() -> Verdict {
    let runs = timestamp_interleavings();
    let mut sequential_ok = true;
    let mut sequential = 0;
    let mut incomparable = 0;
    for (trace, a, b) in &runs {
        let a_last = trace.iter().rposition(|&t| t == 0).unwrap();
        let b_first = trace.iter().position(|&t| t == 1).unwrap();
        let b_last = trace.iter().rposition(|&t| t == 1).unwrap();
        let a_first = trace.iter().position(|&t| t == 0).unwrap();
        if a_last < b_first {
            sequential += 1;
            sequential_ok &= ts_lt(*a, *b);
        } else if b_last < a_first {
            sequential += 1;
            sequential_ok &= ts_lt(*b, *a);
        } else if !ts_lt(*a, *b) && !ts_lt(*b, *a) {
            incomparable += 1;
        }
    }
    Verdict {
        pass: sequential_ok && sequential > 0 && incomparable > 0,
        detail: format!(
            "{} interleavings, {sequential} sequential all ordered: {sequential_ok}, {incomparable} overlapping incomparable",
            runs.len()
        ),
    }
}

fn criterion_6() -> Verdict {
    let cases: Vec<(Mutation, Workload)> = vec![
        (Mutation::HwEmptiness, workload(Structure::HwQueue, &[&["enq 1"], &["deq"]], &[])),
        (Mutation::TsSkipStartTsGuard, workload(Structure::TsQueue, &[&["enq 1"], &["enq 2"], &["deq"]], &[])),
        (Mutation::TsNoScanEdges, workload(Structure::TsQueue, &[&["enq 1", "enq 2"], &["deq", "deq"]], &[])),
        (Mutation::SetSkipValidation, workload(Structure::OptSet, &[&["insert 1"], &["insert 2"]], &[])),
        (Mutation::TsInQueueOnlyOrder, workload(Structure::TsQueue, &[&["enq 1", "enq 2"], &["deq"], &["enq 3"]], &[])),
        (Mutation::HwUntakenOnlyOrder, workload(Structure::HwQueue, &[&["enq 1", "enq 2"], &["deq"], &["enq 3"]], &[])),
    ];
    let mut detected = 0;
    let mut lines = Vec::new();
    for (m, w) in &cases {
        let w = w.clone().with_mutation(*m);
        let e = exhaustive(&w, &ExploreOptions::default()).unwrap();
        match e.violations.first() {
            Some(v) => {
                detected += 1;
                lines.push(format!("{}: {:?} {}", m.name(), v.category, v.check));
            }
            None => lines.push(format!("{}: not detected", m.name())),
        }
    }
    Verdict { pass: detected == cases.len(), detail: format!("{detected}/{} detected ({})", cases.len(), lines.join("; ")) }
}

/// A random history over at most five events: intervals on a time line,
/// at most one pending operation per thread, arbitrary results.
fn random_history(rng: &mut ChaCha8Rng, spec: SpecKind) -> History {
    let n = rng.gen_range(1..=5);
    let mut clock = [0u32; 3];
    let mut events = Vec::new();
    let mut spans = Vec::new();
    let mut pending = [false; 3];
    for i in 0..n {
        let t = rng.gen_range(0..3);
        if pending[t] {
            continue;
        }
        let start = clock[t] + rng.gen_range(0..3);
        let is_pending = rng.gen_bool(0.2);
        let end = if is_pending { u32::MAX } else { start + rng.gen_range(1..4) };
        clock[t] = end.saturating_add(1);
        pending[t] = is_pending;
        let v = rng.gen_range(1..=3);
        let (op, arg, res) = match spec {
            SpecKind::Queue => {
                if rng.gen_bool(0.5) {
                    (Op::Enq, Value::Int(v), Value::Unit)
                } else {
                    let r = if rng.gen_bool(0.2) { Value::Unit } else { Value::Int(rng.gen_range(1..=3)) };
                    (Op::Deq, Value::Unit, r)
                }
            }
            SpecKind::Set => {
                let op = [Op::Insert, Op::Remove, Op::Contains][rng.gen_range(0..3)];
                (op, Value::Int(rng.gen_range(1..=2)), Value::Bool(rng.gen_bool(0.5)))
            }
        };
        spans.push((EventId(i), start, end));
        events.push(ev(i, t, op, arg, (!is_pending).then_some(res)));
    }
    let mut order = Vec::new();
    for &(a, _, ea) in &spans {
        for &(b, sb, _) in &spans {
            if ea < sb {
                order.push((a, b));
            }
        }
    }
    History::from_raw(events, order).unwrap()
}

/// Linearizability by enumeration: every way to drop or complete pending
/// events, then every permutation, replayed through the specification.
fn brute_force(h: &History, spec: SpecKind, retvals: &[Value]) -> bool {
    let events: Vec<Event> = h.events().copied().collect();
    let pending: Vec<usize> = (0..events.len()).filter(|&i| !events[i].is_completed()).collect();
    // Each pending event is dropped (index 0) or completed with retvals[k-1].
    let choices = retvals.len() + 1;
    let total = choices.pow(pending.len() as u32);
    for code in 0..total {
        let mut c = code;
        let mut kept = events.clone();
        let mut drop = BTreeSet::new();
        for &p in &pending {
            let k = c % choices;
            c /= choices;
            if k == 0 {
                drop.insert(p);
            } else {
                kept[p].result = OpResult::Done(retvals[k - 1]);
            }
        }
        let seq: Vec<Event> = kept.into_iter().enumerate().filter(|(i, _)| !drop.contains(i)).map(|(_, e)| e).collect();
        if permutations(seq.len()).iter().any(|perm| {
            let order_ok = perm
                .iter()
                .enumerate()
                .all(|(i, &a)| perm[i + 1..].iter().all(|&b| !h.precedes(seq[b].id, seq[a].id)));
            order_ok && replay_spec(perm.iter().map(|&i| &seq[i]), spec)
        }) {
            return true;
        }
    }
    false
}

fn replay_spec<'a>(seq: impl Iterator<Item = &'a Event>, spec: SpecKind) -> bool {
    let mut states = vec![spec.initial()];
    for e in seq {
        let want = e.result.value().unwrap();
        states = states
            .iter()
            .flat_map(|s| spec.apply(s, e.op, e.arg))
            .filter(|(_, r)| *r == want)
            .map(|(s, _)| s)
            .collect();
        if states.is_empty() {
            return false;
        }
    }
    true
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for i in 0..=p.len() {
            let mut q = p.clone();
            q.insert(i, n - 1);
            out.push(q);
        }
    }
    out
}

fn criterion_7() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut agree = 0;
    let mut linearizable = 0;
    let mut first_bad = None;
    for i in 0..200 {
        let spec = if i % 2 == 0 { SpecKind::Queue } else { SpecKind::Set };
        let h = random_history(&mut rng, spec);
        let retvals = retvals_for(spec, h.events().map(|e| e.arg));
        let fast = is_linearizable(&h, &spec, &retvals, 12).unwrap().linearizable;
        let slow = brute_force(&h, spec, &retvals);
        linearizable += usize::from(slow);
        if fast == slow {
            agree += 1;
        } else if first_bad.is_none() {
            first_bad = Some(h.to_json());
        }
    }
    Verdict {
        pass: agree == 200,
        detail: format!("{agree}/200 agree ({linearizable} linearizable){}", first_bad.map_or(String::new(), |h| format!(", first disagreement {h}"))),
    }
}

fn criterion_8() -> Verdict {
    let w = workload(Structure::TsQueue, &[&["enq 1", "deq"], &["enq 2", "deq"], &["enq 3"]], &[]);
    let checks = CheckConfig::default();
    let runs = random(&w, checks, 11, 100).unwrap();
    let again = random(&w, checks, 11, 100).unwrap();
    let mut same = 0;
    for (r, r2) in runs.iter().zip(&again) {
        let rep = replay(&w, checks, &r.schedule).unwrap();
        let identical = |x: &polarize_core::RunResult| {
            x.schedule == r.schedule
                && x.status == r.status
                && x.violations == r.violations
                && x.concrete == r.concrete
                && x.abstract_history == r.abstract_history
                && x.world.fingerprint() == r.world.fingerprint()
        };
        if identical(&rep) && identical(r2) {
            same += 1;
        }
    }
    let completed = runs.iter().filter(|r| r.status != Status::Partial).count();
    Verdict { pass: same == 100, detail: format!("{same}/100 replays identical, {completed} runs finished") }
}

#[test]
fn acceptance_criteria() {
    let criteria: [(&str, fn() -> Verdict); 8] = [
        ("figure-one-extensions", criterion_1),
        ("queue-membership", criterion_2),
        ("tsqueue-exhaustive", criterion_3),
        ("hwqueue-and-optset-exhaustive", criterion_4),
        ("timestamp-order", criterion_5),
        ("mutations-detected", criterion_6),
        ("oracle-self-test", criterion_7),
        ("replay-determinism", criterion_8),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let v = f();
        report(i + 1, name, t.elapsed(), &v);
        if !v.pass {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
