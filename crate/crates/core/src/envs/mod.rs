//! Deterministic simulated worlds with known task hierarchies.

pub mod arm;
pub mod linear;
pub mod pusher;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use arm::{ArmConfig, ArmPenWorld};
pub use linear::LinearWorld;
pub use pusher::{MobilePusherWorld, PusherConfig};

use crate::domain::{
    CompoundAction, Node, Observation, Outcome, OutcomeSpace, Primitive, Procedure, SpaceId, StateSnapshot,
};
use crate::error::Result;
use crate::hierarchy::HierarchyGraph;
use crate::interest::competence;

/// A resettable world driven by primitive actions.
pub trait Environment {
    fn name(&self) -> &'static str;
    fn spaces(&self) -> &[OutcomeSpace];
    fn primitive_dim(&self) -> usize;
    /// Names of the context vector components returned by `reset`.
    fn context_labels(&self) -> Vec<String>;
    /// Starts a new episode and returns its context vector.
    fn reset(&mut self, seed: u64) -> Vec<f64>;
    /// Executes one primitive and returns the state after every substep.
    fn step(&mut self, a: &Primitive) -> Result<Vec<StateSnapshot>>;
    /// Instantaneous observable values, indexed by space id.
    fn snapshot(&self) -> StateSnapshot;
    /// Raw episode outcomes so far, one entry per space.
    fn observe(&self) -> Observation;
    fn neutral_primitive(&self) -> Primitive {
        Primitive::clipped(vec![0.0; self.primitive_dim()])
    }
    /// The declared task hierarchy. Only tests and evaluation use it.
    fn ground_truth_hierarchy(&self) -> HierarchyGraph;
    /// Scripted solution for `goal` from the current (freshly reset) state.
    fn solve(&self, goal: &Outcome) -> Option<CompoundAction>;
    /// Scripted procedural decomposition of `goal`, where the world has one.
    fn solve_procedure(&self, _goal: &Outcome) -> Option<Procedure> {
        None
    }
    /// Candidate benchmark goals before reachability filtering.
    fn benchmark_candidates(&self, seed: u64) -> Vec<Outcome>;
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "id", rename_all = "kebab-case", deny_unknown_fields)]
pub enum EnvConfig {
    ArmPen(ArmConfig),
    MobilePusher(PusherConfig),
    Linear {
        #[serde(default = "default_linear_dim")]
        dim: usize,
    },
}

fn default_linear_dim() -> usize {
    1
}

impl EnvConfig {
    pub fn from_id(id: &str) -> Option<Self> {
        match id {
            "arm-pen" => Some(EnvConfig::ArmPen(ArmConfig::default())),
            "mobile-pusher" => Some(EnvConfig::MobilePusher(PusherConfig::default())),
            "linear" => Some(EnvConfig::Linear { dim: 1 }),
            _ => None,
        }
    }

    pub fn id(&self) -> &'static str {
        match self {
            EnvConfig::ArmPen(_) => "arm-pen",
            EnvConfig::MobilePusher(_) => "mobile-pusher",
            EnvConfig::Linear { .. } => "linear",
        }
    }

    pub fn build(&self) -> World {
        match self {
            EnvConfig::ArmPen(c) => World::Arm(ArmPenWorld::new(c.clone())),
            EnvConfig::MobilePusher(c) => World::Pusher(MobilePusherWorld::new(c.clone())),
            EnvConfig::Linear { dim } => World::Linear(LinearWorld::new(*dim)),
        }
    }
}

/// Closed set of worlds so learners and evaluation can clone them freely.
#[derive(Clone, Debug)]
pub enum World {
    Arm(ArmPenWorld),
    Pusher(MobilePusherWorld),
    Linear(LinearWorld),
}

macro_rules! delegate {
    ($self:ident, $w:ident => $e:expr) => {
        match $self {
            World::Arm($w) => $e,
            World::Pusher($w) => $e,
            World::Linear($w) => $e,
        }
    };
}

impl Environment for World {
    fn name(&self) -> &'static str {
        delegate!(self, w => w.name())
    }
    fn spaces(&self) -> &[OutcomeSpace] {
        delegate!(self, w => w.spaces())
    }
    fn primitive_dim(&self) -> usize {
        delegate!(self, w => w.primitive_dim())
    }
    fn context_labels(&self) -> Vec<String> {
        delegate!(self, w => w.context_labels())
    }
    fn reset(&mut self, seed: u64) -> Vec<f64> {
        delegate!(self, w => w.reset(seed))
    }
    fn step(&mut self, a: &Primitive) -> Result<Vec<StateSnapshot>> {
        delegate!(self, w => w.step(a))
    }
    fn snapshot(&self) -> StateSnapshot {
        delegate!(self, w => w.snapshot())
    }
    fn observe(&self) -> Observation {
        delegate!(self, w => w.observe())
    }
    fn neutral_primitive(&self) -> Primitive {
        delegate!(self, w => w.neutral_primitive())
    }
    fn ground_truth_hierarchy(&self) -> HierarchyGraph {
        delegate!(self, w => w.ground_truth_hierarchy())
    }
    fn solve(&self, goal: &Outcome) -> Option<CompoundAction> {
        delegate!(self, w => w.solve(goal))
    }
    fn solve_procedure(&self, goal: &Outcome) -> Option<Procedure> {
        delegate!(self, w => w.solve_procedure(goal))
    }
    fn benchmark_candidates(&self, seed: u64) -> Vec<Outcome> {
        delegate!(self, w => w.benchmark_candidates(seed))
    }
}

/// Result of running a compound action from the current state.
#[derive(Clone, Debug, PartialEq)]
pub struct Execution {
    /// State before the first primitive and after each one.
    pub trace: Vec<StateSnapshot>,
    /// Outcomes clipped into their spaces.
    pub observation: Observation,
    /// Spaces whose raw outcome fell outside the declared bounds.
    pub clipped: Vec<SpaceId>,
}

pub fn clip_observation(spaces: &[OutcomeSpace], raw: Observation) -> (Observation, Vec<SpaceId>) {
    let mut flagged = Vec::new();
    let obs = raw
        .into_iter()
        .map(|(id, v)| {
            let v = v.map(|v| match spaces.iter().find(|s| s.id == id) {
                Some(s) => {
                    let (c, was) = s.clip(&v);
                    if was {
                        flagged.push(id);
                    }
                    c
                }
                None => v,
            });
            (id, v)
        })
        .collect();
    (obs, flagged)
}

/// Runs `action` primitive by primitive from the current state.
pub fn execute(env: &mut impl Environment, action: &CompoundAction) -> Result<Execution> {
    let mut trace = vec![env.snapshot()];
    for p in action.primitives() {
        env.step(p)?;
        trace.push(env.snapshot());
    }
    let (observation, clipped) = clip_observation(env.spaces(), env.observe());
    Ok(Execution { trace, observation, clipped })
}

/// Evenly spaced goals: `n` points per dimension including both bounds.
pub fn grid_goals(space: &OutcomeSpace, n: usize) -> Vec<Outcome> {
    if n == 0 {
        return Vec::new();
    }
    let axis = |d: usize| -> Vec<f64> {
        let (lo, hi) = (space.lower()[d], space.upper()[d]);
        if n == 1 {
            return vec![0.5 * (lo + hi)];
        }
        (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
    };
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for d in 0..space.dim() {
        let a = axis(d);
        points = points
            .into_iter()
            .flat_map(|p| {
                a.iter().map(move |x| {
                    let mut q = p.clone();
                    q.push(*x);
                    q
                })
            })
            .collect();
    }
    points.into_iter().map(|v| Outcome::new(space.id, v)).collect()
}

/// Replays the scripted solution of `goal` from a fresh reset and returns
/// it with its competence when it succeeds within `tolerance` (normalized
/// error) using at most `max_len` primitives.
pub fn validate_goal<E: Environment + Clone>(
    template: &E,
    reset_seed: u64,
    goal: &Outcome,
    tolerance: f64,
    max_len: usize,
) -> Option<(CompoundAction, f64)> {
    let mut env = template.clone();
    env.reset(reset_seed);
    let action = env.solve(goal)?;
    if action.len() > max_len {
        return None;
    }
    let run = execute(&mut env, &action).ok()?;
    let space = env.spaces().iter().find(|s| s.id == goal.space)?;
    let reached = run.observation.get(&goal.space)?.clone().map(|v| Outcome::new(goal.space, v));
    let comp = competence(goal, reached.as_ref(), space).ok()?;
    (comp >= -tolerance).then_some((action, comp))
}

/// Level of each space in a hierarchy: 0 for spaces decomposed directly into
/// primitive actions, otherwise one more than the deepest decomposition
/// member.
pub fn space_levels(h: &HierarchyGraph) -> BTreeMap<SpaceId, usize> {
    fn level(h: &HierarchyGraph, n: Node, memo: &mut BTreeMap<Node, usize>, depth: usize) -> usize {
        if let Some(&l) = memo.get(&n) {
            return l;
        }
        if n == Node::Action || depth > 64 {
            return 0;
        }
        let l = h
            .candidates(n)
            .filter(|e| e.active)
            .flat_map(|e| e.decomposition.iter().copied())
            .map(|m| if m == Node::Action { 0 } else { level(h, m, memo, depth + 1) + 1 })
            .max()
            .unwrap_or(0);
        memo.insert(n, l);
        l
    }
    let mut memo = BTreeMap::new();
    h.nodes()
        .filter_map(|n| match n {
            Node::Space(s) => Some((s, level(h, n, &mut memo, 0))),
            Node::Action => None,
        })
        .collect()
}
