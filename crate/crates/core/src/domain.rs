//! Value types shared by every part of the learner: primitive and compound
//! actions, outcome spaces and outcomes, controllables, procedures and
//! episode records.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::strategies::StrategyId;

/// Identity of an outcome space. Spaces of one environment are numbered
/// contiguously from zero.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub struct SpaceId(pub u16);

impl SpaceId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for SpaceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "O{}", self.0)
    }
}

impl FromStr for SpaceId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        s.strip_prefix('O')
            .and_then(|n| n.parse().ok())
            .map(SpaceId)
            .ok_or_else(|| Error::InvalidSpace(format!("bad space id {s:?}")))
    }
}

impl From<SpaceId> for String {
    fn from(id: SpaceId) -> String {
        id.to_string()
    }
}

impl TryFrom<String> for SpaceId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// A node of the task hierarchy: the primitive action space or an outcome space.
///
/// The derived ordering (`Action` first, then spaces by id) is the
/// lexicographic order used for deterministic tie-breaks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Node {
    Action,
    Space(SpaceId),
}

impl fmt::Display for Node {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Node::Action => f.write_str("A"),
            Node::Space(id) => id.fmt(f),
        }
    }
}

impl FromStr for Node {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "A" {
            Ok(Node::Action)
        } else {
            s.parse().map(Node::Space)
        }
    }
}

impl From<Node> for String {
    fn from(n: Node) -> String {
        n.to_string()
    }
}

impl TryFrom<String> for Node {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// One motion step: a vector of normalized actuator targets in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<f64>", try_from = "Vec<f64>")]
pub struct Primitive(Vec<f64>);

impl Primitive {
    pub fn new(params: Vec<f64>) -> Result<Self> {
        if let Some((index, &value)) = params
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || v.abs() > 1.0)
        {
            return Err(Error::PrimitiveOutOfBounds { index, value });
        }
        Ok(Primitive(params))
    }

    /// Builds a primitive, clipping every component into `[-1, 1]`.
    /// Non-finite components become zero.
    pub fn clipped(params: Vec<f64>) -> Self {
        Primitive(
            params
                .into_iter()
                .map(|v| if v.is_finite() { v.clamp(-1.0, 1.0) } else { 0.0 })
                .collect(),
        )
    }

    pub fn params(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn check_dim(&self, expected: usize) -> Result<()> {
        if self.dim() != expected {
            return Err(Error::PrimitiveDimension {
                expected,
                got: self.dim(),
            });
        }
        Ok(())
    }
}

impl From<Primitive> for Vec<f64> {
    fn from(p: Primitive) -> Vec<f64> {
        p.0
    }
}

impl TryFrom<Vec<f64>> for Primitive {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Primitive::new(v)
    }
}

/// An ordered, nonempty sequence of primitives.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Primitive>", try_from = "Vec<Primitive>")]
pub struct CompoundAction(Vec<Primitive>);

impl CompoundAction {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self> {
        if primitives.is_empty() {
            return Err(Error::EmptyAction);
        }
        Ok(CompoundAction(primitives))
    }

    pub fn single(p: Primitive) -> Self {
        CompoundAction(vec![p])
    }

    pub fn primitives(&self) -> &[Primitive] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn into_primitives(self) -> Vec<Primitive> {
        self.0
    }
}

impl From<CompoundAction> for Vec<Primitive> {
    fn from(a: CompoundAction) -> Vec<Primitive> {
        a.0
    }
}

impl TryFrom<Vec<Primitive>> for CompoundAction {
    type Error = Error;

    fn try_from(v: Vec<Primitive>) -> Result<Self> {
        CompoundAction::new(v)
    }
}

/// Concatenates compound actions, preserving order.
pub fn concat(actions: &[CompoundAction]) -> Result<CompoundAction> {
    if actions.is_empty() {
        return Err(Error::EmptyConcatenation);
    }
    Ok(CompoundAction(
        actions.iter().flat_map(|a| a.0.iter().cloned()).collect(),
    ))
}

/// A bounded box of outcomes defining one control task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeSpace {
    pub id: SpaceId,
    pub name: String,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl OutcomeSpace {
    pub fn new(id: SpaceId, name: impl Into<String>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(Error::InvalidSpace(format!(
                "{id}: bound lengths {} and {}",
                lower.len(),
                upper.len()
            )));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) {
            return Err(Error::InvalidSpace(format!("{id}: lower bound not below upper bound")));
        }
        Ok(OutcomeSpace {
            id,
            name: name.into(),
            lower,
            upper,
        })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    /// Euclidean diameter of the bounding box.
    pub fn diameter(&self) -> f64 {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(l, u)| (u - l) * (u - l))
            .sum::<f64>()
            .sqrt()
    }

    pub fn contains(&self, value: &[f64]) -> bool {
        value.len() == self.dim()
            && value
                .iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(v, (l, u))| *v >= *l && *v <= *u)
    }

    /// Clips `value` into the box; the flag reports whether anything moved.
    pub fn clip(&self, value: &[f64]) -> (Vec<f64>, bool) {
        let mut clipped = false;
        let out = value
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| {
                let c = v.clamp(*l, *u);
                if c != *v {
                    clipped = true;
                }
                c
            })
            .collect();
        (out, clipped)
    }

    /// Maps a value to `[-1, 1]` per dimension.
    pub fn normalize(&self, value: &[f64]) -> Vec<f64> {
        value
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(v, (l, u))| 2.0 * (v - l) / (u - l) - 1.0)
            .collect()
    }

    pub fn check(&self, outcome: &Outcome) -> Result<()> {
        if outcome.space != self.id {
            return Err(Error::SpaceMismatch(self.id, outcome.space));
        }
        if outcome.value.len() != self.dim() {
            return Err(Error::OutcomeDimension {
                space: self.id,
                expected: self.dim(),
                got: outcome.value.len(),
            });
        }
        Ok(())
    }
}

/// Looks up a space by id in a registry indexed by id.
pub fn space_of(spaces: &[OutcomeSpace], id: SpaceId) -> Result<&OutcomeSpace> {
    spaces
        .get(id.index())
        .filter(|s| s.id == id)
        .ok_or(Error::UnknownSpace(id))
}

/// A point in an outcome space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub space: SpaceId,
    pub value: Vec<f64>,
}

impl Outcome {
    pub fn new(space: SpaceId, value: Vec<f64>) -> Self {
        Outcome { space, value }
    }
}

/// Either a primitive action or an outcome the agent knows how to induce.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Controllable {
    Primitive(Primitive),
    Goal(Outcome),
}

impl Controllable {
    pub fn node(&self) -> Node {
        match self {
            Controllable::Primitive(_) => Node::Action,
            Controllable::Goal(o) => Node::Space(o.space),
        }
    }

    pub fn as_primitive(&self) -> Option<&Primitive> {
        match self {
            Controllable::Primitive(p) => Some(p),
            Controllable::Goal(_) => None,
        }
    }

    pub fn as_goal(&self) -> Option<&Outcome> {
        match self {
            Controllable::Goal(o) => Some(o),
            Controllable::Primitive(_) => None,
        }
    }
}

/// Decomposition pattern of a controllable sequence: `[A]` for pure
/// primitive sequences, otherwise one node per element.
pub fn decomposition_of(controllables: &[Controllable]) -> Vec<Node> {
    if controllables.iter().all(|c| c.as_primitive().is_some()) {
        return vec![Node::Action];
    }
    controllables.iter().map(Controllable::node).collect()
}

/// A goal-directed decomposition: an ordered succession of subgoal outcomes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Procedure {
    components: Vec<Outcome>,
}

impl Procedure {
    /// `target` is the goal space the procedure decomposes; no component may
    /// live in it.
    pub fn new(target: Option<SpaceId>, components: Vec<Outcome>) -> Result<Self> {
        if components.len() < 2 {
            return Err(Error::InvalidProcedure(format!(
                "length {} < 2",
                components.len()
            )));
        }
        if let Some(t) = target {
            if components.iter().any(|c| c.space == t) {
                return Err(Error::InvalidProcedure(format!("component in goal space {t}")));
            }
        }
        Ok(Procedure { components })
    }

    pub fn components(&self) -> &[Outcome] {
        &self.components
    }

    pub fn decomposition(&self) -> Vec<Node> {
        self.components.iter().map(|c| Node::Space(c.space)).collect()
    }

    pub fn into_controllables(self) -> Vec<Controllable> {
        self.components.into_iter().map(Controllable::Goal).collect()
    }
}

/// Outcomes of one episode: one entry per space, `None` when the space was
/// not produced.
pub type Observation = BTreeMap<SpaceId, Option<Vec<f64>>>;

/// Observable values of every space at one instant, indexed by space id.
/// Spaces without an instantaneous value (e.g. a drawing) hold `None`.
pub type StateSnapshot = Vec<Option<Vec<f64>>>;

/// Everything that happened in one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub context: Vec<f64>,
    pub strategy: StrategyId,
    pub goal: Outcome,
    pub controllables: Vec<Controllable>,
    pub action: CompoundAction,
    pub reached: Observation,
    /// Instantaneous state before the first primitive and after each one.
    pub trace: Vec<StateSnapshot>,
    pub competence: f64,
    pub failed: bool,
}

impl EpisodeRecord {
    pub fn reached_in(&self, space: SpaceId) -> Option<&[f64]> {
        self.reached.get(&space).and_then(|v| v.as_deref())
    }

    pub fn decomposition(&self) -> Vec<Node> {
        decomposition_of(&self.controllables)
    }

    pub fn is_procedural(&self) -> bool {
        self.decomposition() != [Node::Action]
    }

    pub fn validate(&self) -> Result<()> {
        if self.controllables.is_empty() {
            return Err(Error::MalformedRecord("empty controllable sequence".into()));
        }
        if !self.reached.contains_key(&self.goal.space) {
            return Err(Error::MalformedRecord(format!(
                "no entry for goal space {}",
                self.goal.space
            )));
        }
        if !(-1.0..=0.0).contains(&self.competence) {
            return Err(Error::MalformedRecord(format!(
                "competence {} outside [-1, 0]",
                self.competence
            )));
        }
        if !self.trace.is_empty() && self.trace.len() != self.action.len() + 1 {
            return Err(Error::MalformedRecord(format!(
                "trace length {} for {} primitives",
                self.trace.len(),
                self.action.len()
            )));
        }
        Ok(())
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn prim(v: f64) -> Primitive {
        Primitive::new(vec![v]).unwrap()
    }

    fn act(vs: &[f64]) -> CompoundAction {
        CompoundAction::new(vs.iter().map(|&v| prim(v)).collect()).unwrap()
    }

    #[test]
    fn concat_preserves_order() {
        let out = concat(&[act(&[0.1]), act(&[0.2])]).unwrap();
        assert_eq!(out, act(&[0.1, 0.2]));
    }

    #[test]
    fn concat_singleton_is_identity() {
        assert_eq!(concat(&[act(&[0.1, 0.2])]).unwrap(), act(&[0.1, 0.2]));
    }

    #[test]
    fn concat_lengths_add() {
        let out = concat(&[act(&[0.0]), act(&[0.0, 0.1]), act(&[0.0, 0.1, 0.2])]).unwrap();
        assert_eq!(out.len(), 6);
    }

    #[test]
    fn concat_empty_is_error() {
        assert_eq!(concat(&[]), Err(Error::EmptyConcatenation));
    }

    #[test]
    fn primitive_bounds() {
        assert!(Primitive::new(vec![1.0, -1.0]).is_ok());
        assert!(matches!(
            Primitive::new(vec![0.0, 1.5]),
            Err(Error::PrimitiveOutOfBounds { index: 1, .. })
        ));
        assert_eq!(Primitive::clipped(vec![2.0, -3.0]).params(), &[1.0, -1.0]);
    }

    #[test]
    fn space_diameter_and_clip() {
        let s = OutcomeSpace::new(SpaceId(0), "s", vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap();
        assert!((s.diameter() - 8f64.sqrt()).abs() < 1e-12);
        let (v, flagged) = s.clip(&[1.5, 0.0]);
        assert_eq!(v, vec![1.0, 0.0]);
        assert!(flagged);
        assert!(OutcomeSpace::new(SpaceId(0), "bad", vec![1.0], vec![1.0]).is_err());
    }

    #[test]
    fn procedure_cycle_guard() {
        let o = |s| Outcome::new(SpaceId(s), vec![0.0]);
        assert!(Procedure::new(Some(SpaceId(2)), vec![o(1), o(1)]).is_ok());
        assert!(Procedure::new(Some(SpaceId(2)), vec![o(1), o(2)]).is_err());
        assert!(Procedure::new(None, vec![o(1)]).is_err());
    }

    #[test]
    fn ids_round_trip_through_text() {
        assert_eq!("O3".parse::<SpaceId>().unwrap(), SpaceId(3));
        assert_eq!("A".parse::<Node>().unwrap(), Node::Action);
        assert!(Node::Action < Node::Space(SpaceId(0)));
        assert!("X1".parse::<SpaceId>().is_err());
    }

    proptest! {
        #[test]
        fn concat_is_associative(
            a in prop::collection::vec(-1.0f64..1.0, 1..4),
            b in prop::collection::vec(-1.0f64..1.0, 1..4),
            c in prop::collection::vec(-1.0f64..1.0, 1..4),
        ) {
            let (a, b, c) = (act(&a), act(&b), act(&c));
            let left = concat(&[concat(&[a.clone(), b.clone()]).unwrap(), c.clone()]).unwrap();
            let right = concat(&[a, concat(&[b, c]).unwrap()]).unwrap();
            prop_assert_eq!(left, right);
        }
    }
}
