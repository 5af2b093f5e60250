use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::learner::{run_sequence, Snapshot, EVAL_RESET_SEED};
use crate::domain::{space_of, Controllable, Outcome, SpaceId};
use crate::envs::{validate_goal, EnvConfig, Environment, World};
use crate::interest::competence;
use crate::models::{infer_controllable, TaskModel};
use crate::strategies::Variant;

/// Seed of the randomized part of each benchmark.
pub const BENCHMARK_SEED: u64 = 11;
/// Benchmark goals must be solvable by a scripted sequence this short.
pub const MAX_SCRIPTED_LENGTH: usize = 4;
pub const REACH_TOLERANCE: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Benchmark {
    pub env: String,
    pub goals: Vec<Outcome>,
}

impl Benchmark {
    /// Candidate goals of the world kept only where the scripted solver
    /// reaches them.
    pub fn build(env: &EnvConfig) -> Self {
        let world = env.build();
        let goals = world
            .benchmark_candidates(BENCHMARK_SEED)
            .into_iter()
            .filter(|g| validate_goal(&world, EVAL_RESET_SEED, g, REACH_TOLERANCE, MAX_SCRIPTED_LENGTH).is_some())
            .collect();
        Benchmark { env: env.id().to_string(), goals }
    }

    pub fn spaces(&self) -> Vec<SpaceId> {
        let mut s: Vec<SpaceId> = self.goals.iter().map(|g| g.space).collect();
        s.sort();
        s.dedup();
        s
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GoalResult {
    /// Normalized distance to the goal, 1 when nothing could be executed.
    pub error: f64,
    /// Executed primitive count, `None` when resolution failed.
    pub length: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpaceMetrics {
    pub space: SpaceId,
    pub goals: usize,
    pub resolved: usize,
    pub mean_error: f64,
    /// Mean over resolved goals; NaN when none resolved.
    pub mean_length: f64,
}

/// Exploitation: the best known controllables for the goal, without noise.
fn exploit(snap: &Snapshot, world: &mut World, goal: &Outcome) -> GoalResult {
    let failure = GoalResult { error: 1.0, length: None };
    let context = world.reset(EVAL_RESET_SEED);
    let spaces = world.spaces().to_vec();
    let variant = snap.config.variant;
    let lc = if variant == Variant::Chime && snap.affordances.controllable().contains(&goal.space) {
        vec![Controllable::Goal(goal.clone())]
    } else {
        match infer_controllable(&TaskModel::generic(goal.space, &spaces), &snap.memory, &spaces, goal, snap.config.resolve.length_penalty) {
            Ok(inf) => match variant {
                Variant::Chime => inf.controllables,
                // procedural variants resolve the goal itself below
                _ => vec![Controllable::Goal(goal.clone())],
            },
            Err(_) => return failure,
        }
    };
    let run = run_sequence(
        variant,
        world,
        &lc,
        &context,
        &snap.memory,
        &snap.hierarchy,
        &snap.affordances,
        &snap.config.resolve,
    );
    let Ok(x) = run else { return failure };
    let Ok(space) = space_of(&spaces, goal.space) else { return failure };
    let reached = x.observation.get(&goal.space).cloned().flatten().map(|v| Outcome::new(goal.space, v));
    let c = competence(goal, reached.as_ref(), space).unwrap_or(-1.0);
    GoalResult { error: -c, length: Some(x.action.len()) }
}

/// Per-goal results in benchmark order. The parallel and sequential paths
/// compute identical values.
pub fn evaluate_goals(snap: &Snapshot, bench: &Benchmark, parallel: bool) -> Vec<GoalResult> {
    let template = snap.config.env.build();
    let one = |g: &Outcome| exploit(snap, &mut template.clone(), g);
    if parallel {
        bench.goals.par_iter().map(one).collect()
    } else {
        bench.goals.iter().map(one).collect()
    }
}

pub fn aggregate(bench: &Benchmark, results: &[GoalResult]) -> Vec<SpaceMetrics> {
    bench
        .spaces()
        .into_iter()
        .map(|space| {
            let rs: Vec<&GoalResult> = bench
                .goals
                .iter()
                .zip(results)
                .filter(|(g, _)| g.space == space)
                .map(|(_, r)| r)
                .collect();
            let lengths: Vec<usize> = rs.iter().filter_map(|r| r.length).collect();
            SpaceMetrics {
                space,
                goals: rs.len(),
                resolved: lengths.len(),
                mean_error: rs.iter().map(|r| r.error).sum::<f64>() / rs.len() as f64,
                mean_length: if lengths.is_empty() {
                    f64::NAN
                } else {
                    lengths.iter().sum::<usize>() as f64 / lengths.len() as f64
                },
            }
        })
        .collect()
}

pub fn evaluate(snap: &Snapshot, bench: &Benchmark) -> Vec<SpaceMetrics> {
    aggregate(bench, &evaluate_goals(snap, bench, true))
}
