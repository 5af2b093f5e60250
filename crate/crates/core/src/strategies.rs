//! Data-collection heuristics: each turns a goal into a controllable
//! sequence to execute.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::Normal;
use serde::{Deserialize, Serialize};

use crate::domain::{
    space_of, Controllable, Node, Outcome, OutcomeSpace, Primitive, Procedure, SpaceId,
};
use crate::error::{Error, Result};
use crate::hierarchy::HierarchyGraph;
use crate::memory::EpisodicMemory;
use crate::teachers::{Demo, Teacher, TeacherKind};

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum StrategyId {
    ActionExplore,
    OutcomeExplore,
    ProcedureExplore,
    MimicAction(String),
    MimicProcedure(String),
}

impl StrategyId {
    pub fn is_mimicry(&self) -> bool {
        matches!(self, StrategyId::MimicAction(_) | StrategyId::MimicProcedure(_))
    }

    pub fn teacher(&self) -> Option<&str> {
        match self {
            StrategyId::MimicAction(t) | StrategyId::MimicProcedure(t) => Some(t),
            _ => None,
        }
    }
}

impl fmt::Display for StrategyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            StrategyId::ActionExplore => f.write_str("action-explore"),
            StrategyId::OutcomeExplore => f.write_str("outcome-explore"),
            StrategyId::ProcedureExplore => f.write_str("procedure-explore"),
            StrategyId::MimicAction(t) => write!(f, "mimic-action:{t}"),
            StrategyId::MimicProcedure(t) => write!(f, "mimic-procedure:{t}"),
        }
    }
}

impl FromStr for StrategyId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown strategy {s:?}"));
        match s {
            "action-explore" => Ok(StrategyId::ActionExplore),
            "outcome-explore" => Ok(StrategyId::OutcomeExplore),
            "procedure-explore" => Ok(StrategyId::ProcedureExplore),
            _ => {
                let (kind, teacher) = s.split_once(':').ok_or_else(bad)?;
                if teacher.is_empty() {
                    return Err(bad());
                }
                match kind {
                    "mimic-action" => Ok(StrategyId::MimicAction(teacher.to_string())),
                    "mimic-procedure" => Ok(StrategyId::MimicProcedure(teacher.to_string())),
                    _ => Err(bad()),
                }
            }
        }
    }
}

impl From<StrategyId> for String {
    fn from(s: StrategyId) -> String {
        s.to_string()
    }
}

impl TryFrom<String> for StrategyId {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

/// Algorithm variants and their strategy sets.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Variant {
    #[serde(rename = "IM-PB")]
    ImPb,
    #[serde(rename = "CHIME")]
    Chime,
    #[serde(rename = "SGIM-PB")]
    SgimPb,
}

impl Variant {
    /// Active strategies. Mimicry strategies are only added for SGIM-PB, one
    /// per teacher and matching the teacher's demonstration kind.
    pub fn strategies(self, teachers: &[Teacher]) -> Vec<StrategyId> {
        match self {
            Variant::ImPb => vec![StrategyId::OutcomeExplore, StrategyId::ProcedureExplore],
            Variant::Chime => vec![StrategyId::ActionExplore, StrategyId::OutcomeExplore],
            Variant::SgimPb => {
                let mut s = vec![StrategyId::OutcomeExplore, StrategyId::ProcedureExplore];
                for t in teachers {
                    s.push(match t.kind() {
                        TeacherKind::Action => StrategyId::MimicAction(t.id().to_string()),
                        TeacherKind::Procedure => StrategyId::MimicProcedure(t.id().to_string()),
                    });
                }
                s
            }
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::ImPb => "IM-PB",
            Variant::Chime => "CHIME",
            Variant::SgimPb => "SGIM-PB",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyParams {
    /// Probability that action exploration draws a fresh uniform primitive.
    pub fresh_probability: f64,
    pub action_noise: f64,
    /// Noise floor of outcome and procedure exploration.
    pub outcome_noise: f64,
    pub mimic_noise: f64,
}

impl Default for StrategyParams {
    fn default() -> Self {
        StrategyParams {
            fresh_probability: 0.5,
            action_noise: 0.1,
            outcome_noise: 0.05,
            mimic_noise: 0.05,
        }
    }
}

/// Read-only view of the learner state that strategies need.
pub struct StrategyCtx<'a> {
    pub spaces: &'a [OutcomeSpace],
    pub memory: &'a EpisodicMemory,
    pub hierarchy: &'a HierarchyGraph,
    pub teachers: &'a [Teacher],
    /// Outcome spaces the agent can currently induce directly (CHIME).
    pub controllable: &'a BTreeSet<SpaceId>,
    pub primitive_dim: usize,
    pub params: &'a StrategyParams,
}

/// Dispatches `strategy` for `goal`. The result is never empty.
pub fn apply(
    strategy: &StrategyId,
    active: &[StrategyId],
    goal: &Outcome,
    ctx: &StrategyCtx<'_>,
    rng: &mut impl Rng,
) -> Result<Vec<Controllable>> {
    if !active.contains(strategy) {
        return Err(Error::InactiveStrategy(strategy.to_string()));
    }
    match strategy {
        StrategyId::ActionExplore => Ok(explore_action_space(ctx, rng).0),
        StrategyId::OutcomeExplore => explore_outcome(goal, ctx, rng),
        StrategyId::ProcedureExplore => explore_procedure(goal, ctx, rng),
        StrategyId::MimicAction(t) => mimic_action(goal, find_teacher(ctx.teachers, t)?, ctx.params.mimic_noise, rng),
        StrategyId::MimicProcedure(t) => {
            mimic_procedure(goal, find_teacher(ctx.teachers, t)?, ctx.spaces, ctx.params.mimic_noise, rng)
        }
    }
}

fn find_teacher<'t>(teachers: &'t [Teacher], id: &str) -> Result<&'t Teacher> {
    teachers
        .iter()
        .find(|t| t.id() == id)
        .ok_or_else(|| Error::InactiveStrategy(format!("no teacher {id}")))
}

pub fn random_primitive(dim: usize, rng: &mut impl Rng) -> Primitive {
    Primitive::clipped((0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
}

fn gaussian(std: f64, rng: &mut impl Rng) -> f64 {
    if std <= 0.0 {
        return 0.0;
    }
    Normal::new(0.0, std).map_or(0.0, |n| n.sample(rng))
}

pub fn perturb_primitive(p: &Primitive, std: f64, rng: &mut impl Rng) -> Primitive {
    Primitive::clipped(p.params().iter().map(|x| x + gaussian(std, rng)).collect())
}

/// Adds noise of relative magnitude `rel_std` (fraction of the half-width of
/// each dimension) and clips into the space.
pub fn perturb_outcome(o: &Outcome, space: &OutcomeSpace, rel_std: f64, rng: &mut impl Rng) -> Outcome {
    let noisy: Vec<f64> = o
        .value
        .iter()
        .zip(space.lower().iter().zip(space.upper()))
        .map(|(x, (lo, hi))| x + gaussian(rel_std * (hi - lo) / 2.0, rng))
        .collect();
    Outcome::new(o.space, space.clip(&noisy).0)
}

pub fn perturb_controllables(
    lc: &[Controllable],
    spaces: &[OutcomeSpace],
    rel_std: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Controllable>> {
    lc.iter()
        .map(|c| match c {
            Controllable::Primitive(p) => Ok(Controllable::Primitive(perturb_primitive(p, rel_std, rng))),
            Controllable::Goal(o) => Ok(Controllable::Goal(perturb_outcome(o, space_of(spaces, o.space)?, rel_std, rng))),
        })
        .collect()
}

/// Returns a single primitive and whether it was drawn fresh.
pub fn explore_action_space(ctx: &StrategyCtx<'_>, rng: &mut impl Rng) -> (Vec<Controllable>, bool) {
    let fresh = ctx.memory.is_empty() || rng.random_bool(ctx.params.fresh_probability.clamp(0.0, 1.0));
    let p = if fresh {
        random_primitive(ctx.primitive_dim, rng)
    } else {
        let rec = &ctx.memory.records()[rng.random_range(0..ctx.memory.len())];
        let prims = rec.action.primitives();
        let base = &prims[rng.random_range(0..prims.len())];
        perturb_primitive(base, ctx.params.action_noise, rng)
    };
    (vec![Controllable::Primitive(p)], fresh)
}

/// Goal babbling: replay the controllables of the nearest reached outcome with
/// noise that grows with the distance to it.
pub fn explore_outcome(goal: &Outcome, ctx: &StrategyCtx<'_>, rng: &mut impl Rng) -> Result<Vec<Controllable>> {
    let space = space_of(ctx.spaces, goal.space)?;
    if ctx.controllable.contains(&goal.space) {
        let target = perturb_outcome(goal, space, ctx.params.outcome_noise, rng);
        return Ok(vec![Controllable::Goal(target)]);
    }
    let Some(nn) = ctx.memory.nearest(goal.space, &goal.value, 1).first().copied() else {
        return Ok(explore_action_space(ctx, rng).0);
    };
    let rec = &ctx.memory.records()[nn.episode];
    let std = ctx.params.outcome_noise * (1.0 + nn.distance / space.diameter());
    perturb_controllables(&rec.controllables, ctx.spaces, std, rng)
}

/// Samples a length-2 decomposition of the goal space with probability
/// proportional to its edge weight and fills in subgoals.
pub fn explore_procedure(goal: &Outcome, ctx: &StrategyCtx<'_>, rng: &mut impl Rng) -> Result<Vec<Controllable>> {
    let space = space_of(ctx.spaces, goal.space)?;
    let from = Node::Space(goal.space);
    let candidates: Vec<(&[Node], f64)> = ctx
        .hierarchy
        .candidates(from)
        .filter(|e| !ctx.hierarchy.is_pruned(e) && e.decomposition.len() == 2)
        .filter(|e| {
            e.decomposition.iter().all(|n| match n {
                Node::Space(s) => *s != goal.space && ctx.memory.has_data(*s),
                Node::Action => false,
            })
        })
        .map(|e| (e.decomposition.as_slice(), e.weight))
        .collect();
    if candidates.is_empty() {
        return Err(Error::ProcedureUnavailable);
    }
    let pick = match WeightedIndex::new(candidates.iter().map(|c| c.1)) {
        Ok(w) => w.sample(rng),
        Err(_) => rng.random_range(0..candidates.len()),
    };
    let pair = candidates[pick].0.to_vec();
    let past = ctx
        .memory
        .nearest_filtered(goal.space, &goal.value, 1, |r| r.decomposition() == pair)
        .first()
        .copied();
    let components = match past {
        Some(nn) => {
            let std = ctx.params.outcome_noise * (1.0 + nn.distance / space.diameter());
            ctx.memory.records()[nn.episode]
                .controllables
                .iter()
                .map(|c| match c {
                    Controllable::Goal(o) => Ok(perturb_outcome(o, space_of(ctx.spaces, o.space)?, std, rng)),
                    Controllable::Primitive(_) => Err(Error::InvalidProcedure("primitive component".into())),
                })
                .collect::<Result<Vec<_>>>()?
        }
        None => pair
            .iter()
            .map(|n| {
                let Node::Space(s) = n else { unreachable!("filtered above") };
                let sp = space_of(ctx.spaces, *s)?;
                let v = sp
                    .lower()
                    .iter()
                    .zip(sp.upper())
                    .map(|(lo, hi)| rng.random_range(*lo..=*hi))
                    .collect();
                Ok(Outcome::new(*s, v))
            })
            .collect::<Result<Vec<_>>>()?,
    };
    Ok(Procedure::new(Some(goal.space), components)?.into_controllables())
}

pub fn mimic_action(goal: &Outcome, teacher: &Teacher, noise: f64, rng: &mut impl Rng) -> Result<Vec<Controllable>> {
    if teacher.kind() != TeacherKind::Action {
        return Err(Error::WrongTeacherKind(teacher.id().to_string(), "action"));
    }
    let Demo::Action(a) = teacher.demo(&goal.value)? else {
        unreachable!("action teacher holds action demos")
    };
    Ok(a.primitives()
        .iter()
        .map(|p| Controllable::Primitive(perturb_primitive(p, noise, rng)))
        .collect())
}

pub fn mimic_procedure(
    goal: &Outcome,
    teacher: &Teacher,
    spaces: &[OutcomeSpace],
    noise: f64,
    rng: &mut impl Rng,
) -> Result<Vec<Controllable>> {
    if teacher.kind() != TeacherKind::Procedure {
        return Err(Error::WrongTeacherKind(teacher.id().to_string(), "procedure"));
    }
    let Demo::Procedure(p) = teacher.demo(&goal.value)? else {
        unreachable!("procedure teacher holds procedure demos")
    };
    p.components()
        .iter()
        .map(|o| Ok(Controllable::Goal(perturb_outcome(o, space_of(spaces, o.space)?, noise, rng))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{CompoundAction, EpisodeRecord, Observation};
    use crate::interest::competence;
    use crate::models::{infer_controllable, TaskModel};
    use crate::teachers::TeacherEntry;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    const O0: SpaceId = SpaceId(0);
    const O1: SpaceId = SpaceId(1);
    const O2: SpaceId = SpaceId(2);

    fn spaces() -> Vec<OutcomeSpace> {
        [O0, O1, O2]
            .iter()
            .map(|&s| OutcomeSpace::new(s, "s", vec![-1.0, -1.0], vec![1.0, 1.0]).unwrap())
            .collect()
    }

    fn prim(v: &[f64]) -> Primitive {
        Primitive::new(v.to_vec()).unwrap()
    }

    fn record(mem: &mut EpisodicMemory, lc: Vec<Controllable>, action: Vec<Primitive>, reached: &[(SpaceId, [f64; 2])]) {
        let reached: Observation = reached.iter().map(|(s, v)| (*s, Some(v.to_vec()))).collect();
        let space = *reached.keys().next().unwrap();
        mem.record(EpisodeRecord {
            episode: mem.len(),
            context: vec![],
            strategy: StrategyId::OutcomeExplore,
            goal: Outcome::new(space, vec![0.0, 0.0]),
            controllables: lc,
            action: CompoundAction::new(action).unwrap(),
            reached,
            trace: vec![],
            competence: -0.5,
            failed: false,
        })
        .unwrap();
    }

    struct Fixture {
        spaces: Vec<OutcomeSpace>,
        memory: EpisodicMemory,
        hierarchy: HierarchyGraph,
        teachers: Vec<Teacher>,
        controllable: BTreeSet<SpaceId>,
        params: StrategyParams,
    }

    impl Fixture {
        fn new() -> Self {
            let spaces = spaces();
            let ids: Vec<SpaceId> = spaces.iter().map(|s| s.id).collect();
            Fixture {
                spaces,
                memory: EpisodicMemory::new(),
                hierarchy: HierarchyGraph::dense(&ids, 0.05, 0.5),
                teachers: Vec::new(),
                controllable: BTreeSet::new(),
                params: StrategyParams::default(),
            }
        }

        fn ctx(&self) -> StrategyCtx<'_> {
            StrategyCtx {
                spaces: &self.spaces,
                memory: &self.memory,
                hierarchy: &self.hierarchy,
                teachers: &self.teachers,
                controllable: &self.controllable,
                primitive_dim: 2,
                params: &self.params,
            }
        }
    }

    #[test]
    fn strategy_ids_round_trip_and_variants_match_their_sets() {
        let all = [
            StrategyId::ActionExplore,
            StrategyId::OutcomeExplore,
            StrategyId::ProcedureExplore,
            StrategyId::MimicAction("t".into()),
            StrategyId::MimicProcedure("u".into()),
        ];
        for s in &all {
            assert_eq!(&s.to_string().parse::<StrategyId>().unwrap(), s);
        }
        assert!("mimic-action:".parse::<StrategyId>().is_err());
        assert_eq!(Variant::ImPb.strategies(&[]), vec![StrategyId::OutcomeExplore, StrategyId::ProcedureExplore]);
        assert_eq!(Variant::Chime.strategies(&[]), vec![StrategyId::ActionExplore, StrategyId::OutcomeExplore]);
    }

    #[test]
    fn action_exploration_cold_start_and_clipping() {
        let mut f = Fixture::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (lc, fresh) = explore_action_space(&f.ctx(), &mut rng);
        assert!(fresh);
        assert_eq!(lc.len(), 1);
        record(&mut f.memory, vec![Controllable::Primitive(prim(&[0.0, 0.0]))], vec![prim(&[0.0, 0.0])], &[(O0, [0.0, 0.0])]);
        f.params.fresh_probability = 0.0;
        f.params.action_noise = 5.0;
        for _ in 0..100 {
            let (lc, fresh) = explore_action_space(&f.ctx(), &mut rng);
            assert!(!fresh);
            let p = lc[0].as_primitive().unwrap();
            assert!(p.params().iter().all(|x| (-1.0..=1.0).contains(x)));
        }
    }

    #[test]
    fn action_exploration_fresh_ratio() {
        let mut f = Fixture::new();
        record(&mut f.memory, vec![Controllable::Primitive(prim(&[0.3, 0.3]))], vec![prim(&[0.3, 0.3])], &[(O0, [0.0, 0.0])]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let fresh = (0..1000).filter(|_| explore_action_space(&f.ctx(), &mut rng).1).count();
        assert!((fresh as f64 / 1000.0 - 0.5).abs() <= 0.05, "{fresh}");
    }

    #[test]
    fn outcome_exploration_falls_back_and_replays_nearest() {
        let mut f = Fixture::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let goal = Outcome::new(O1, vec![0.5, 0.5]);
        let lc = explore_outcome(&goal, &f.ctx(), &mut rng).unwrap();
        assert_eq!(lc.len(), 1);
        assert!(lc[0].as_primitive().is_some());

        let stored = vec![Controllable::Primitive(prim(&[0.2, -0.4])), Controllable::Primitive(prim(&[0.1, 0.1]))];
        record(&mut f.memory, stored.clone(), vec![prim(&[0.2, -0.4]), prim(&[0.1, 0.1])], &[(O1, [0.5, 0.5])]);
        // the noise floor applies at zero distance
        let n = 2000;
        let mut sq = 0.0;
        for _ in 0..n {
            let lc = explore_outcome(&goal, &f.ctx(), &mut rng).unwrap();
            assert_eq!(lc.len(), 2);
            let d = lc[0].as_primitive().unwrap().params()[0] - 0.2;
            sq += d * d;
        }
        let std = (sq / n as f64).sqrt();
        assert!((std - 0.05).abs() < 0.005, "{std}");
        f.params.outcome_noise = 0.0;
        assert_eq!(explore_outcome(&goal, &f.ctx(), &mut rng).unwrap(), stored);
    }

    #[test]
    fn outcome_exploration_drives_controllable_spaces_directly() {
        let mut f = Fixture::new();
        f.controllable.insert(O1);
        f.params.outcome_noise = 0.0;
        let goal = Outcome::new(O1, vec![0.5, -0.5]);
        let lc = explore_outcome(&goal, &f.ctx(), &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(lc, vec![Controllable::Goal(goal)]);
    }

    #[test]
    fn procedure_exploration_needs_other_spaces() {
        let mut f = Fixture::new();
        let goal = Outcome::new(O2, vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        assert_eq!(explore_procedure(&goal, &f.ctx(), &mut rng), Err(Error::ProcedureUnavailable));
        // data only in the goal space itself does not help
        record(&mut f.memory, vec![Controllable::Primitive(prim(&[0.0, 0.0]))], vec![prim(&[0.0, 0.0])], &[(O2, [0.0, 0.0])]);
        assert_eq!(explore_procedure(&goal, &f.ctx(), &mut rng), Err(Error::ProcedureUnavailable));
        record(&mut f.memory, vec![Controllable::Primitive(prim(&[0.0, 0.0]))], vec![prim(&[0.0, 0.0])], &[(O1, [0.0, 0.0])]);
        for _ in 0..50 {
            let lc = explore_procedure(&goal, &f.ctx(), &mut rng).unwrap();
            let spaces: Vec<SpaceId> = lc.iter().map(|c| c.as_goal().unwrap().space).collect();
            assert_eq!(spaces, vec![O1, O1]);
        }
    }

    #[test]
    fn procedure_pairs_follow_edge_weights() {
        let mut f = Fixture::new();
        let mut h = HierarchyGraph::new([O0, O1, O2].map(Node::Space), 0.05);
        h.add_edge(Node::Space(O2), vec![Node::Space(O0), Node::Space(O1)], 0.9).unwrap();
        h.add_edge(Node::Space(O2), vec![Node::Space(O1), Node::Space(O0)], 0.1).unwrap();
        f.hierarchy = h;
        record(&mut f.memory, vec![Controllable::Primitive(prim(&[0.0, 0.0]))], vec![prim(&[0.0, 0.0])], &[(O0, [0.1, 0.1]), (O1, [0.2, 0.2])]);
        let goal = Outcome::new(O2, vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let first = (0..1000)
            .filter(|_| explore_procedure(&goal, &f.ctx(), &mut rng).unwrap()[0].as_goal().unwrap().space == O0)
            .count();
        assert!((first as f64 / 1000.0 - 0.9).abs() <= 0.05, "{first}");
    }

    #[test]
    fn procedure_exploration_never_targets_its_own_space() {
        let mut f = Fixture::new();
        for (i, s) in [O0, O1, O2].into_iter().enumerate() {
            let v = i as f64 * 0.1;
            record(&mut f.memory, vec![Controllable::Primitive(prim(&[v, v]))], vec![prim(&[v, v])], &[(s, [v, v])]);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for s in [O0, O1, O2] {
            let goal = Outcome::new(s, vec![0.3, -0.3]);
            for _ in 0..100 {
                let lc = explore_procedure(&goal, &f.ctx(), &mut rng).unwrap();
                assert_eq!(lc.len(), 2);
                assert!(lc.iter().all(|c| c.as_goal().unwrap().space != s));
            }
        }
    }

    fn action_teacher() -> Teacher {
        let demo = |v: f64| TeacherEntry {
            goal: vec![v, v],
            demo: Demo::Action(CompoundAction::new(vec![prim(&[v, -v]), prim(&[0.9, 0.9])]).unwrap()),
        };
        Teacher::new("t", TeacherKind::Action, O1, vec![demo(-0.5), demo(0.5)]).unwrap()
    }

    fn procedure_teacher() -> Teacher {
        let p = Procedure::new(
            Some(O2),
            vec![Outcome::new(O1, vec![0.95, -0.2]), Outcome::new(O1, vec![0.3, 0.4])],
        )
        .unwrap();
        Teacher::new("u", TeacherKind::Procedure, O2, vec![TeacherEntry { goal: vec![0.9, 0.4], demo: Demo::Procedure(p) }]).unwrap()
    }

    #[test]
    fn mimicry_returns_nearest_demo() {
        let t = action_teacher();
        let goal = Outcome::new(O1, vec![0.4, 0.6]);
        let verbatim = mimic_action(&goal, &t, 0.0, &mut ChaCha8Rng::seed_from_u64(8)).unwrap();
        assert_eq!(verbatim, vec![Controllable::Primitive(prim(&[0.5, -0.5])), Controllable::Primitive(prim(&[0.9, 0.9]))]);
        let a = mimic_action(&goal, &t, 0.05, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        let b = mimic_action(&goal, &t, 0.05, &mut ChaCha8Rng::seed_from_u64(9)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, verbatim);
        assert!(matches!(mimic_procedure(&goal, &t, &spaces(), 0.0, &mut ChaCha8Rng::seed_from_u64(9)), Err(Error::WrongTeacherKind(..))));
    }

    #[test]
    fn procedure_mimicry_stays_in_bounds() {
        let t = procedure_teacher();
        let sp = spaces();
        let goal = Outcome::new(O2, vec![0.0, 0.0]);
        let verbatim = mimic_procedure(&goal, &t, &sp, 0.0, &mut ChaCha8Rng::seed_from_u64(10)).unwrap();
        assert_eq!(verbatim[1], Controllable::Goal(Outcome::new(O1, vec![0.3, 0.4])));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            for c in mimic_procedure(&goal, &t, &sp, 0.05, &mut rng).unwrap() {
                let o = c.as_goal().unwrap();
                sp[1].check(o).unwrap();
            }
        }
        assert!(matches!(mimic_action(&goal, &t, 0.0, &mut rng), Err(Error::WrongTeacherKind(..))));
    }

    #[test]
    fn apply_dispatches_only_active_strategies() {
        let mut f = Fixture::new();
        f.teachers = vec![action_teacher(), procedure_teacher()];
        let active = Variant::SgimPb.strategies(&f.teachers);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let goal = Outcome::new(O1, vec![0.1, 0.1]);
        assert!(matches!(
            apply(&StrategyId::ActionExplore, &active, &goal, &f.ctx(), &mut rng),
            Err(Error::InactiveStrategy(_))
        ));
        record(&mut f.memory, vec![Controllable::Primitive(prim(&[0.0, 0.0]))], vec![prim(&[0.0, 0.0])], &[(O0, [0.0, 0.0])]);
        for s in &active {
            let g = if matches!(s, StrategyId::MimicProcedure(_)) { Outcome::new(O2, vec![0.0, 0.0]) } else { goal.clone() };
            assert!(!apply(s, &active, &g, &f.ctx(), &mut rng).unwrap().is_empty(), "{s}");
        }
    }

    /// Redundant 1-D world: the product of three action parameters, so
    /// uniform actions crowd around zero.
    fn product(a: &[f64]) -> f64 {
        a.iter().product()
    }

    /// Mean normalized error of nearest-neighbor exploitation on a grid of
    /// goals after `n` episodes of one strategy.
    fn product_world_error(strategy: StrategyId, n: usize, seed: u64) -> f64 {
        let spaces = vec![OutcomeSpace::new(O0, "product", vec![-1.0], vec![1.0]).unwrap()];
        let hierarchy = HierarchyGraph::dense(&[O0], 0.05, 0.5);
        let params = StrategyParams::default();
        let none = BTreeSet::new();
        let mut memory = EpisodicMemory::new();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let active = [strategy.clone()];
        for t in 0..n {
            let goal = Outcome::new(O0, vec![rng.random_range(-1.0..=1.0)]);
            let ctx = StrategyCtx {
                spaces: &spaces,
                memory: &memory,
                hierarchy: &hierarchy,
                teachers: &[],
                controllable: &none,
                primitive_dim: 3,
                params: &params,
            };
            let lc = apply(&strategy, &active, &goal, &ctx, &mut rng).unwrap();
            let action = CompoundAction::new(lc.iter().map(|c| c.as_primitive().unwrap().clone()).collect()).unwrap();
            let reached = Outcome::new(O0, vec![product(action.primitives()[0].params())]);
            memory
                .record(EpisodeRecord {
                    episode: t,
                    context: vec![],
                    strategy: strategy.clone(),
                    goal: goal.clone(),
                    controllables: lc,
                    action,
                    reached: [(O0, Some(reached.value.clone()))].into_iter().collect(),
                    trace: vec![],
                    competence: competence(&goal, Some(&reached), &spaces[0]).unwrap(),
                    failed: false,
                })
                .unwrap();
        }
        let model = TaskModel::generic(O0, &spaces);
        let total: f64 = (0..41)
            .map(|i| {
                let goal = Outcome::new(O0, vec![-0.95 + 1.9 * i as f64 / 40.0]);
                let inf = infer_controllable(&model, &memory, &spaces, &goal, 0.0).unwrap();
                let p = inf.controllables[0].as_primitive().unwrap();
                let reached = Outcome::new(O0, vec![product(p.params())]);
                -competence(&goal, Some(&reached), &spaces[0]).unwrap()
            })
            .sum();
        total / 41.0
    }

    #[test]
    fn goal_babbling_beats_random_actions_on_redundant_world() {
        let mut wins = 0;
        for seed in 0..5 {
            let oe = product_world_error(StrategyId::OutcomeExplore, 500, seed);
            let ae = product_world_error(StrategyId::ActionExplore, 500, seed);
            println!("seed {seed}: outcome {oe:.4} action {ae:.4}");
            wins += usize::from(oe < ae);
        }
        assert!(wins >= 4, "{wins}");
    }
}
