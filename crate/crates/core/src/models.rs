//! Memory-based forward and inverse task models, and recursive resolution of
//! goals into executable compound actions.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::domain::{
    concat, euclidean, space_of, CompoundAction, Controllable, EpisodeRecord, Node, Outcome,
    OutcomeSpace, SpaceId,
};
use crate::error::{Error, Result};
use crate::hierarchy::HierarchyGraph;
use crate::memory::EpisodicMemory;

pub const FORWARD_K: usize = 3;
const WEIGHT_EPS: f64 = 1e-6;

/// A task: which controllables and context dimensions predict one outcome
/// space. The data itself lives in the episodic memory.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskModel {
    pub space: SpaceId,
    pub inputs: BTreeSet<Node>,
    pub context_dims: Vec<usize>,
}

impl TaskModel {
    pub fn new(space: SpaceId, inputs: impl IntoIterator<Item = Node>, context_dims: Vec<usize>) -> Result<Self> {
        let inputs: BTreeSet<Node> = inputs.into_iter().collect();
        if inputs.is_empty() {
            return Err(Error::InvalidSpace(format!("task {space} has no inputs")));
        }
        if inputs.contains(&Node::Space(space)) {
            return Err(Error::InvalidSpace(format!("task {space} uses its own space as input")));
        }
        Ok(TaskModel { space, inputs, context_dims })
    }

    /// The generic task for `space`: every other node is a potential input.
    pub fn generic(space: SpaceId, spaces: &[OutcomeSpace]) -> Self {
        let inputs = std::iter::once(Node::Action)
            .chain(spaces.iter().filter(|s| s.id != space).map(|s| Node::Space(s.id)))
            .collect();
        TaskModel { space, inputs, context_dims: Vec::new() }
    }

    pub fn accepts(&self, lc: &[Controllable]) -> bool {
        !lc.is_empty() && lc.iter().all(|c| self.inputs.contains(&c.node()))
    }
}

/// Flattened numeric representation of (context, controllables). Outcome
/// components are normalized to `[-1, 1]` so they mix with primitive
/// parameters.
pub fn features(spaces: &[OutcomeSpace], context: &[f64], dims: &[usize], lc: &[Controllable]) -> Result<Vec<f64>> {
    let mut f: Vec<f64> = dims.iter().map(|&d| context.get(d).copied().unwrap_or(0.0)).collect();
    for c in lc {
        match c {
            Controllable::Primitive(p) => f.extend_from_slice(p.params()),
            Controllable::Goal(o) => f.extend(space_of(spaces, o.space)?.normalize(&o.value)),
        }
    }
    Ok(f)
}

fn same_shape(a: &[Controllable], b: &[Controllable]) -> bool {
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| match (x, y) {
            (Controllable::Primitive(p), Controllable::Primitive(q)) => p.dim() == q.dim(),
            (Controllable::Goal(o), Controllable::Goal(g)) => o.space == g.space,
            _ => false,
        })
}

/// Distance-weighted average of the outcomes of the `k = 3` nearest stored
/// (context, controllables) pairs. `None` when the task has no comparable data.
pub fn forward_predict(
    model: &TaskModel,
    memory: &EpisodicMemory,
    spaces: &[OutcomeSpace],
    context: &[f64],
    lc: &[Controllable],
) -> Result<Option<Vec<f64>>> {
    if !model.accepts(lc) {
        return Err(Error::IncompatibleControllable(model.space));
    }
    let query = features(spaces, context, &model.context_dims, lc)?;
    let mut near: Vec<(f64, usize, &[f64])> = Vec::new();
    for (value, ep) in memory.scan(model.space) {
        let rec = &memory.records()[ep];
        if !same_shape(&rec.controllables, lc) {
            continue;
        }
        let f = features(spaces, &rec.context, &model.context_dims, &rec.controllables)?;
        near.push((euclidean(&f, &query), ep, value));
    }
    if near.is_empty() {
        return Ok(None);
    }
    near.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    near.truncate(FORWARD_K);
    let weights: Vec<f64> = near.iter().map(|n| 1.0 / (n.0 + WEIGHT_EPS)).collect();
    let total: f64 = weights.iter().sum();
    let dim = near[0].2.len();
    let mut out = vec![0.0; dim];
    for (w, n) in weights.iter().zip(&near) {
        for (o, v) in out.iter_mut().zip(n.2) {
            *o += w / total * v;
        }
    }
    Ok(Some(out))
}

/// The record an inverse query settles on.
#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub episode: usize,
    pub controllables: Vec<Controllable>,
    /// Euclidean distance between the goal and the record's outcome.
    pub distance: f64,
}

/// Selection score of a stored record as an answer for a goal: normalized
/// distance plus a small charge per extra executed primitive.
fn score(distance: f64, diameter: f64, rec: &EpisodeRecord, length_penalty: f64) -> f64 {
    distance / diameter + length_penalty * (rec.action.len() as f64 - 1.0)
}

/// Inverse model in exploitation mode: the controllables of the stored
/// record whose outcome best answers the goal. With `length_penalty = 0` this
/// is the plain nearest neighbor.
pub fn infer_controllable(
    model: &TaskModel,
    memory: &EpisodicMemory,
    spaces: &[OutcomeSpace],
    goal: &Outcome,
    length_penalty: f64,
) -> Result<Inference> {
    if goal.space != model.space {
        return Err(Error::SpaceMismatch(goal.space, model.space));
    }
    let space = space_of(spaces, goal.space)?;
    space.check(goal)?;
    let mut best: Option<(f64, Inference)> = None;
    for (value, ep) in memory.scan(goal.space) {
        let rec = &memory.records()[ep];
        if !model.accepts(&rec.controllables) {
            continue;
        }
        let d = euclidean(value, &goal.value);
        let s = score(d, space.diameter(), rec, length_penalty);
        // strict comparison keeps the earliest episode on ties
        if best.as_ref().is_none_or(|(b, _)| s < *b) {
            best = Some((
                s,
                Inference {
                    episode: ep,
                    controllables: Vec::new(),
                    distance: d,
                },
            ));
        }
    }
    let (_, mut inf) = best.ok_or(Error::NoData)?;
    inf.controllables = memory.records()[inf.episode].controllables.clone();
    Ok(inf)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ResolveParams {
    pub depth: usize,
    pub length_penalty: f64,
    /// On a failed sub-resolution, replay the stored action of the record
    /// instead of failing.
    pub fallback: bool,
}

impl Default for ResolveParams {
    fn default() -> Self {
        ResolveParams {
            depth: 5,
            length_penalty: 0.05,
            fallback: true,
        }
    }
}

pub struct Resolver<'a> {
    pub spaces: &'a [OutcomeSpace],
    pub memory: &'a EpisodicMemory,
    pub hierarchy: &'a HierarchyGraph,
    pub params: &'a ResolveParams,
}

impl Resolver<'_> {
    /// Turns a goal into a compound action. A procedural answer using the
    /// goal space's best decomposition is expanded recursively unless that
    /// makes it longer; otherwise the record's executed action is replayed.
    pub fn resolve(&self, goal: &Outcome) -> Result<CompoundAction> {
        self.resolve_at(goal, self.params.depth, &BTreeSet::new())
    }

    /// Resolves a whole controllable sequence and concatenates the parts.
    pub fn resolve_sequence(&self, lc: &[Controllable]) -> Result<CompoundAction> {
        let parts = lc
            .iter()
            .map(|c| match c {
                Controllable::Primitive(p) => Ok(CompoundAction::single(p.clone())),
                Controllable::Goal(o) => self.resolve(o),
            })
            .collect::<Result<Vec<_>>>()?;
        concat(&parts)
    }

    fn resolve_at(&self, goal: &Outcome, depth: usize, visited: &BTreeSet<SpaceId>) -> Result<CompoundAction> {
        if depth == 0 {
            return Err(Error::DepthExceeded);
        }
        if visited.contains(&goal.space) {
            return Err(Error::CyclicDecomposition(goal.space));
        }
        let model = TaskModel::generic(goal.space, self.spaces);
        let inf = infer_controllable(&model, self.memory, self.spaces, goal, self.params.length_penalty)?;
        let rec = &self.memory.records()[inf.episode];
        if inf.controllables.iter().all(|c| c.as_primitive().is_some()) {
            return Ok(rec.action.clone());
        }
        // only the goal space's preferred decomposition is expanded; any other
        // procedural record is replayed as executed
        let decomposition = rec.decomposition();
        if self.hierarchy.best_decomposition_of(goal.space)? != Some(decomposition.as_slice()) {
            return Ok(rec.action.clone());
        }
        let mut inner = visited.clone();
        inner.insert(goal.space);
        let expanded = inf
            .controllables
            .iter()
            .map(|c| match c {
                Controllable::Primitive(p) => Ok(CompoundAction::single(p.clone())),
                Controllable::Goal(o) => self.resolve_at(o, depth - 1, &inner),
            })
            .collect::<Result<Vec<_>>>()
            .and_then(|parts| concat(&parts));
        match expanded {
            // a longer expansion is not worth giving up a replay with a known outcome
            Ok(a) if a.len() > rec.action.len() => Ok(rec.action.clone()),
            Ok(a) => Ok(a),
            Err(_) if self.params.fallback => Ok(rec.action.clone()),
            Err(e) => Err(e),
        }
    }
}

/// Hierarchy update after an episode: the edge the episode used for its goal
/// moves toward the achieved competence. Repeated calls for an episode that
/// was already applied are ignored.
pub fn update_models(
    hierarchy: &mut HierarchyGraph,
    record: &EpisodeRecord,
    rate: f64,
    applied_through: &mut Option<usize>,
) -> bool {
    if applied_through.is_some_and(|last| record.episode <= last) {
        return false;
    }
    *applied_through = Some(record.episode);
    let target = 1.0 + record.competence;
    hierarchy.update_weight(Node::Space(record.goal.space), &record.decomposition(), target, rate)
}
