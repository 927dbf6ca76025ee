//! Commitment edges may order an operation after another one that overlaps
//! it in real time. Combined with program order this can leave the abstract
//! history outside the interval orders, on all three structures. These
//! schedules pin that down; everything else checked along them holds.

use polarize_core::history::WfViolation;
use polarize_core::simsched::parse_schedule;
use polarize_core::{explore, Call, CheckConfig, Structure, Workload};

fn workload(s: Structure, threads: &[&[&str]], seeds: &[&str]) -> Workload {
    let calls = |ops: &[&str]| ops.iter().map(|c| c.parse::<Call>().unwrap()).collect::<Vec<_>>();
    Workload::new(s, threads.iter().map(|t| calls(t)).collect()).with_seeds(calls(seeds))
}

fn check(w: &Workload, schedule: &str) {
    let s = parse_schedule(schedule).unwrap();
    let world = explore::execute(w, &s).unwrap();
    let wf = world.cfg.history.check_wf();
    assert!(
        !wf.is_empty() && wf.iter().all(|v| matches!(v, WfViolation::IntervalOrder { .. })),
        "{wf:?}"
    );
    assert!(world.concrete.check_wf().is_empty());

    let strict = explore::replay(w, CheckConfig::default(), &s).unwrap();
    assert_eq!(strict.violations.len(), 1);
    assert_eq!(strict.violations[0].check, "interval-order");

    let mut relaxed = CheckConfig::default();
    relaxed.abstract_interval_order = false;
    let r = explore::replay(w, relaxed, &s).unwrap();
    assert!(r.violations.is_empty(), "{:?}", r.violations);
}

#[test]
fn tsqueue_scan_edge_breaks_interval_order() {
    let w = workload(Structure::TsQueue, &[&["enq 1", "deq"], &["enq 2"], &["deq"]], &[]);
    check(&w, "0 0 1 1 1 1 2 2 2 0 0 0 0 0 0 0 0 0 0 1 1 2");
}

#[test]
fn hwqueue_removal_edge_breaks_interval_order() {
    let w = workload(Structure::HwQueue, &[&["enq 1", "enq 3"], &["enq 2", "deq"], &["deq"]], &[]);
    check(&w, "0 0 1 1 1 1 1 1 1 2 0 0 0 0 0 0 1");
}

#[test]
fn optset_contains_edge_breaks_interval_order() {
    let w = workload(
        Structure::OptSet,
        &[&["remove 1", "remove 2"], &["contains 2", "insert 3"], &["contains 3"]],
        &["insert 1", "insert 2", "insert 4"],
    );
    check(&w, "0 0 1 1 1 1 1 1 1 1 2 0 0 0 0 0 0 1 1 1 1 2");
}
