//! A dequeue can visit a pool while an enqueue into it is still pending.
//! The enqueue may later finish with a timestamp below the dequeue's and be
//! ordered before it through another pool's scan. It then satisfies the
//! literal seen-set condition although the dequeue never saw its value.

use polarize_core::commitment::my_eid;
use polarize_core::simsched::{parse_schedule, Frame};
use polarize_core::tsqueue::{seen, seen_literal, TsFrame};
use polarize_core::{explore, Call, CheckConfig, Structure, Workload, World};

const SCHEDULE: &str = "0 0 0 0 0 0 0 0 0 0 0 0 1 1 1 1 2 2 2 2 2 2 2 2 2 2 2 2.1 1 1 2";

fn workload() -> Workload {
    let calls = |ops: &[&str]| ops.iter().map(|c| c.parse::<Call>().unwrap()).collect::<Vec<_>>();
    Workload::new(
        Structure::TsQueue,
        vec![calls(&["enq 1", "enq 3"]), calls(&["enq 2"]), calls(&["deq", "deq"])],
    )
}

#[test]
fn literal_seen_set_admits_unobserved_enqueue() {
    let w = workload();
    let ctx = w.ctx();
    let mut world = World::new(&w).unwrap();
    let mut diverged = false;
    for c in parse_schedule(SCHEDULE).unwrap() {
        world.advance(&w, &ctx, c).unwrap();
        for (t, f) in world.frames() {
            if let Frame::Ts(TsFrame::Deq(d)) = f {
                let me = my_eid(&world.cfg, t).unwrap();
                let literal = seen_literal(&world.cfg, me, &d);
                let actual = seen(&world.cfg, me, &d);
                assert!(actual.is_subset(literal));
                diverged |= actual != literal;
            }
        }
    }
    assert!(diverged);
}

#[test]
fn schedule_passes_with_observed_seen_set() {
    let w = workload();
    let r = explore::replay(&w, CheckConfig::default(), &parse_schedule(SCHEDULE).unwrap()).unwrap();
    assert!(r.violations.is_empty(), "{:?}", r.violations);
}
