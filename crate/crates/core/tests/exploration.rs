//! Exhaustive search counts checked against a plain enumerator.

use polarize_core::{exhaustive, Call, ExploreOptions, Structure, Workload, World};

fn workload(s: Structure, threads: &[&[&str]], seeds: &[&str]) -> Workload {
    let calls = |ops: &[&str]| ops.iter().map(|c| c.parse::<Call>().unwrap()).collect::<Vec<_>>();
    Workload::new(s, threads.iter().map(|t| calls(t)).collect()).with_seeds(calls(seeds))
}

/// Maximal move sequences, enumerated without memoization or checks.
fn count_paths(w: &Workload, world: &World) -> u128 {
    if world.is_terminal(w) {
        return 1;
    }
    let ctx = w.ctx();
    world
        .choices(w)
        .into_iter()
        .map(|c| {
            let mut next = world.clone();
            next.advance(w, &ctx, c).unwrap();
            count_paths(w, &next)
        })
        .sum()
}

#[test]
fn schedule_counts_match_plain_enumeration() {
    for w in [
        workload(Structure::HwQueue, &[&["enq 1"], &["deq"]], &[]),
        workload(Structure::HwQueue, &[&["enq 1"], &["enq 2"]], &[]),
        workload(Structure::TsQueue, &[&["enq 1"], &["deq"]], &[]),
        workload(Structure::TsQueue, &[&["enq 1"], &["enq 2"]], &[]),
        workload(Structure::OptSet, &[&["insert 1", "contains 1"], &["remove 1"]], &[]),
        workload(Structure::OptSet, &[&["remove 2"], &["contains 2"]], &["insert 2"]),
    ] {
        let e = exhaustive(&w, &ExploreOptions::default()).unwrap();
        assert!(e.passed(), "{:?}", e.violations);
        assert_eq!(e.schedules, count_paths(&w, &World::new(&w).unwrap()), "{:?}", w.threads);
    }
}

#[cfg(feature = "parallel")]
#[test]
fn parallel_search_agrees_with_sequential() {
    for w in [
        workload(Structure::HwQueue, &[&["enq 1", "deq"], &["enq 2", "deq"]], &[]),
        workload(Structure::TsQueue, &[&["enq 1", "deq"], &["enq 2", "deq"]], &[]),
        workload(Structure::OptSet, &[&["insert 1", "remove 2"], &["insert 2", "contains 1"]], &[]),
    ] {
        let seq = exhaustive(&w, &ExploreOptions { parallel: false, ..Default::default() }).unwrap();
        let par = exhaustive(&w, &ExploreOptions { parallel: true, ..Default::default() }).unwrap();
        assert_eq!(seq.schedules, par.schedules);
        assert_eq!(seq.passed(), par.passed());
    }
}
