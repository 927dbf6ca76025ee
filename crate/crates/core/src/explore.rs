//! Schedule exploration: exhaustive depth-first search with state merging,
//! seeded random sampling, and replay of recorded schedules.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::history::History;
use crate::monitor::{CheckConfig, Checker, Violation};
use crate::simsched::{Choice, StepCtx, StepError, Workload, World};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Completed,
    /// A retry or step bound cut some operation off.
    BoundExhausted,
    /// Stopped at the first violation.
    Violated,
    /// A replayed schedule ended before a terminal state.
    Partial,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunResult {
    pub schedule: Vec<Choice>,
    pub status: Status,
    pub concrete: History,
    #[serde(rename = "abstract")]
    pub abstract_history: History,
    pub violations: Vec<Violation>,
    pub world: World,
}

impl RunResult {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExploreOptions {
    pub checks: CheckConfig,
    /// Stop after this many violating schedules.
    pub max_violations: usize,
    /// Split the search over the rayon pool.
    pub parallel: bool,
}

impl Default for ExploreOptions {
    fn default() -> Self {
        ExploreOptions { checks: CheckConfig::default(), max_violations: 1, parallel: false }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exploration {
    /// Number of distinct schedules, counting those that end at a violation.
    pub schedules: u128,
    /// Distinct states expanded.
    pub states: usize,
    /// Terminal states where a bound cut an operation off.
    pub bound_exhausted: usize,
    pub violations: Vec<Violation>,
    /// The search stopped early because of `max_violations`.
    pub truncated: bool,
}

impl Exploration {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }

    fn absorb(&mut self, other: Exploration, weight: u128) {
        self.schedules += weight * other.schedules;
        self.states += other.states;
        self.bound_exhausted += other.bound_exhausted;
        self.violations.extend(other.violations);
        self.truncated |= other.truncated;
    }
}

/// Explores every schedule of `w`.
pub fn exhaustive(w: &Workload, opts: &ExploreOptions) -> Result<Exploration, StepError> {
    let root = World::new(w)?;
    #[cfg(feature = "parallel")]
    if opts.parallel {
        return Ok(parallel::run(w, opts, root));
    }
    let mut dfs = Dfs::new(w, opts);
    let n = dfs.visit(&root, &mut Vec::new());
    let mut e = dfs.finish();
    e.schedules = n;
    Ok(e)
}

struct Dfs<'a> {
    w: &'a Workload,
    ctx: StepCtx,
    checker: Checker,
    max_violations: usize,
    memo: HashMap<u128, u128>,
    out: Exploration,
}

impl<'a> Dfs<'a> {
    fn new(w: &'a Workload, opts: &ExploreOptions) -> Dfs<'a> {
        Dfs {
            w,
            ctx: w.ctx(),
            checker: Checker::new(w, opts.checks),
            max_violations: opts.max_violations.max(1),
            memo: HashMap::new(),
            out: Exploration::default(),
        }
    }

    fn finish(mut self) -> Exploration {
        self.out.states = self.memo.len();
        self.out
    }

    fn stopped(&self) -> bool {
        self.out.violations.len() >= self.max_violations
    }

    fn report(&mut self, mut v: Vec<Violation>, path: &[Choice]) {
        for x in &mut v {
            x.schedule = path.to_vec();
        }
        self.out.violations.extend(v);
        if self.stopped() {
            self.out.truncated = true;
        }
    }

    /// Number of schedules from `world`, which has already passed its
    /// transition checks.
    fn visit(&mut self, world: &World, path: &mut Vec<Choice>) -> u128 {
        let key = world.fingerprint();
        if let Some(&n) = self.memo.get(&key) {
            return n;
        }
        let n = if world.is_terminal(self.w) {
            if world.bound_exhausted(self.w) {
                self.out.bound_exhausted += 1;
            }
            let v = self.checker.check_end(world, true);
            if !v.is_empty() {
                self.report(v, path);
            }
            1
        } else {
            let mut total = 0;
            for c in world.choices(self.w) {
                if self.stopped() {
                    break;
                }
                path.push(c);
                total += self.child(world, c, path);
                path.pop();
            }
            total
        };
        if !self.stopped() {
            self.memo.insert(key, n);
        }
        n
    }

    fn child(&mut self, world: &World, c: Choice, path: &mut Vec<Choice>) -> u128 {
        let mut next = world.clone();
        match next.advance(self.w, &self.ctx, c) {
            Ok(out) => {
                let v = self.checker.check_move(world, &next, &out);
                if v.is_empty() {
                    self.visit(&next, path)
                } else {
                    self.report(v, path);
                    1
                }
            }
            Err(e) => {
                self.report(vec![step_failure(e, next.steps + 1)], path);
                1
            }
        }
    }
}

fn step_failure(e: StepError, step: usize) -> Violation {
    use crate::monitor::Category;
    let mut v = Violation::new(Category::Checker, "commit-succeeds", e.to_string());
    v.step = step;
    v
}

#[cfg(feature = "parallel")]
mod parallel {
    use std::collections::BTreeMap;

    use rayon::prelude::*;

    use super::*;

    struct Node {
        world: World,
        path: Vec<Choice>,
        weight: u128,
    }

    /// Expands the tree breadth-first until the frontier is wide enough,
    /// then searches each frontier state on its own worker. Identical
    /// frontier states are merged and weighted by the number of paths
    /// reaching them.
    pub(super) fn run(w: &Workload, opts: &ExploreOptions, root: World) -> Exploration {
        let ctx = w.ctx();
        let target = rayon::current_num_threads() * 8;
        let mut checker = Checker::new(w, opts.checks);
        let mut head = Exploration::default();
        let mut frontier = vec![Node { world: root, path: Vec::new(), weight: 1 }];
        let max_violations = opts.max_violations.max(1);
        while !frontier.is_empty() && frontier.len() < target && head.violations.len() < max_violations {
            let mut next: BTreeMap<u128, Node> = BTreeMap::new();
            let mut grew = false;
            for node in frontier {
                if node.world.is_terminal(w) {
                    let key = node.world.fingerprint();
                    next.entry(key)
                        .and_modify(|n| n.weight += node.weight)
                        .or_insert(node);
                    continue;
                }
                grew = true;
                for c in node.world.choices(w) {
                    let mut path = node.path.clone();
                    path.push(c);
                    let mut child = node.world.clone();
                    let failure = match child.advance(w, &ctx, c) {
                        Ok(out) => checker.check_move(&node.world, &child, &out),
                        Err(e) => vec![step_failure(e, child.steps + 1)],
                    };
                    if !failure.is_empty() {
                        head.schedules += node.weight;
                        for mut v in failure {
                            v.schedule = path.clone();
                            head.violations.push(v);
                        }
                        continue;
                    }
                    let key = child.fingerprint();
                    next.entry(key)
                        .and_modify(|n| n.weight += node.weight)
                        .or_insert(Node { world: child, path, weight: node.weight });
                }
            }
            frontier = next.into_values().collect();
            if !grew {
                break;
            }
        }
        if head.violations.len() >= max_violations {
            head.truncated = true;
            return head;
        }
        let parts: Vec<(u128, Exploration)> = frontier
            .par_iter()
            .map(|node| {
                let mut dfs = Dfs::new(w, opts);
                let mut path = node.path.clone();
                let n = dfs.visit(&node.world, &mut path);
                let mut e = dfs.finish();
                e.schedules = n;
                (node.weight, e)
            })
            .collect();
        for (weight, e) in parts {
            head.absorb(e, weight);
        }
        if head.violations.len() > max_violations {
            head.violations.truncate(max_violations);
            head.truncated = true;
        }
        head
    }
}

/// Runs `n` schedules picked uniformly at each move: first a thread, then
/// one of its branches. Run `i` uses stream `i` of the seeded generator.
pub fn random(
    w: &Workload,
    checks: CheckConfig,
    seed: u64,
    n: usize,
) -> Result<Vec<RunResult>, StepError> {
    let root = World::new(w)?;
    let mut checker = Checker::new(w, checks);
    let ctx = w.ctx();
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        let mut world = root.clone();
        let mut schedule = Vec::new();
        let mut violations = Vec::new();
        while !world.is_terminal(w) {
            let choices = world.choices(w);
            let mut threads: Vec<usize> = choices.iter().map(|c| c.thread).collect();
            threads.dedup();
            let t = threads[rng.gen_range(0..threads.len())];
            let mine: Vec<Choice> = choices.into_iter().filter(|c| c.thread == t).collect();
            let c = mine[rng.gen_range(0..mine.len())];
            schedule.push(c);
            violations = take_move(w, &ctx, &mut checker, &mut world, c, &schedule);
            if !violations.is_empty() {
                break;
            }
        }
        out.push(finish_run(w, &mut checker, world, schedule, violations, true));
    }
    Ok(out)
}

fn take_move(
    w: &Workload,
    ctx: &StepCtx,
    checker: &mut Checker,
    world: &mut World,
    c: Choice,
    schedule: &[Choice],
) -> Vec<Violation> {
    let before = world.clone();
    let mut v = match world.advance(w, ctx, c) {
        Ok(out) => checker.check_move(&before, world, &out),
        Err(e) => vec![step_failure(e, before.steps + 1)],
    };
    for x in &mut v {
        x.schedule = schedule.to_vec();
    }
    v
}

fn finish_run(
    w: &Workload,
    checker: &mut Checker,
    world: World,
    schedule: Vec<Choice>,
    mut violations: Vec<Violation>,
    complete: bool,
) -> RunResult {
    let status = if !violations.is_empty() {
        Status::Violated
    } else if !world.is_terminal(w) || !complete {
        Status::Partial
    } else {
        let mut end = checker.check_end(&world, true);
        for x in &mut end {
            x.schedule = schedule.clone();
        }
        violations = end;
        if !violations.is_empty() {
            Status::Violated
        } else if world.bound_exhausted(w) {
            Status::BoundExhausted
        } else {
            Status::Completed
        }
    };
    RunResult {
        concrete: world.concrete.clone(),
        abstract_history: world.cfg.history.clone(),
        schedule,
        status,
        violations,
        world,
    }
}

/// Re-executes a recorded schedule with all checks. Fails if some choice is
/// not enabled where it is taken.
pub fn replay(w: &Workload, checks: CheckConfig, schedule: &[Choice]) -> Result<RunResult, StepError> {
    let mut world = World::new(w)?;
    let mut checker = Checker::new(w, checks);
    let ctx = w.ctx();
    let mut violations = Vec::new();
    for (i, &c) in schedule.iter().enumerate() {
        if !world.is_enabled(w, c) || world.is_terminal(w) {
            return Err(StepError::NotEnabled(c));
        }
        violations = take_move(w, &ctx, &mut checker, &mut world, c, &schedule[..=i]);
        if !violations.is_empty() {
            if i + 1 != schedule.len() {
                return Err(StepError::NotEnabled(schedule[i + 1]));
            }
            break;
        }
    }
    Ok(finish_run(w, &mut checker, world, schedule.to_vec(), violations, true))
}

/// Runs a schedule with checks disabled, for exporting histories.
pub fn execute(w: &Workload, schedule: &[Choice]) -> Result<World, StepError> {
    let mut world = World::new(w)?;
    let ctx = w.ctx();
    for &c in schedule {
        world.advance(w, &ctx, c)?;
    }
    Ok(world)
}
