//! Simulated demonstrators built from the worlds' scripted solvers.

use serde::{Deserialize, Serialize};

use crate::domain::{concat, euclidean, CompoundAction, Outcome, OutcomeSpace, Procedure, SpaceId};
use crate::envs::{execute, Environment};
use crate::error::{Error, Result};
use crate::interest::competence;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TeacherKind {
    Action,
    Procedure,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Demo {
    Action(CompoundAction),
    Procedure(Procedure),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TeacherEntry {
    pub goal: Vec<f64>,
    pub demo: Demo,
}

/// A fixed repertoire of (goal, demonstration) pairs for one target space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "TeacherData")]
pub struct Teacher {
    id: String,
    kind: TeacherKind,
    target: SpaceId,
    repertoire: Vec<TeacherEntry>,
}

#[derive(Deserialize)]
struct TeacherData {
    id: String,
    kind: TeacherKind,
    target: SpaceId,
    repertoire: Vec<TeacherEntry>,
}

impl TryFrom<TeacherData> for Teacher {
    type Error = Error;

    fn try_from(d: TeacherData) -> Result<Self> {
        Teacher::new(d.id, d.kind, d.target, d.repertoire)
    }
}

impl Teacher {
    pub fn new(id: impl Into<String>, kind: TeacherKind, target: SpaceId, repertoire: Vec<TeacherEntry>) -> Result<Self> {
        if repertoire.is_empty() {
            return Err(Error::EmptyRepertoire);
        }
        let id = id.into();
        for e in &repertoire {
            let ok = match (&e.demo, kind) {
                (Demo::Action(_), TeacherKind::Action) => true,
                (Demo::Procedure(p), TeacherKind::Procedure) => p.components().iter().all(|c| c.space != target),
                _ => false,
            };
            if !ok {
                return Err(Error::WrongTeacherKind(id, "matching"));
            }
        }
        Ok(Teacher { id, kind, target, repertoire })
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn kind(&self) -> TeacherKind {
        self.kind
    }

    pub fn target(&self) -> SpaceId {
        self.target
    }

    pub fn repertoire(&self) -> &[TeacherEntry] {
        &self.repertoire
    }

    /// The demonstration whose goal is nearest `goal`; ties go to the earlier
    /// entry.
    pub fn demo(&self, goal: &[f64]) -> Result<&Demo> {
        let mut best: Option<(f64, &TeacherEntry)> = None;
        for e in &self.repertoire {
            let d = euclidean(&e.goal, goal);
            if best.is_none_or(|(b, _)| d < b) {
                best = Some((d, e));
            }
        }
        best.map(|(_, e)| &e.demo).ok_or(Error::EmptyRepertoire)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TeacherSpec {
    pub id: String,
    pub kind: TeacherKind,
    pub target: SpaceId,
    /// Points per dimension of the goal grid.
    #[serde(default = "default_grid")]
    pub grid: usize,
}

fn default_grid() -> usize {
    5
}

/// Cell-centred grid: `n` points per dimension, offset half a cell from the
/// bounds so it never coincides with the benchmark grid.
pub fn cell_grid(space: &OutcomeSpace, n: usize) -> Vec<Outcome> {
    let mut points: Vec<Vec<f64>> = vec![Vec::new()];
    for d in 0..space.dim() {
        let (lo, hi) = (space.lower()[d], space.upper()[d]);
        points = points
            .into_iter()
            .flat_map(|p| {
                (0..n).map(move |i| {
                    let mut q = p.clone();
                    q.push(lo + (hi - lo) * (i as f64 + 0.5) / n as f64);
                    q
                })
            })
            .collect();
    }
    if n == 0 {
        return Vec::new();
    }
    points.into_iter().map(|v| Outcome::new(space.id, v)).collect()
}

pub const DEMO_TOLERANCE: f64 = 0.05;

fn replay_competence<E: Environment + Clone>(env: &E, reset_seed: u64, goal: &Outcome, action: &CompoundAction) -> Option<f64> {
    let mut w = env.clone();
    w.reset(reset_seed);
    let run = execute(&mut w, action).ok()?;
    let space = w.spaces().iter().find(|s| s.id == goal.space)?;
    let reached = run.observation.get(&goal.space)?.clone().map(|v| Outcome::new(goal.space, v));
    competence(goal, reached.as_ref(), space).ok()
}

/// Builds a repertoire on a grid of goals from scripted solutions. Every
/// demonstration is replayed (procedures through the scripted solutions of
/// their components) and kept only if it lands within 5% of its goal. The
/// dropped goals are returned alongside.
pub fn build_teacher<E: Environment + Clone>(env: &E, spec: &TeacherSpec, reset_seed: u64) -> Result<(Teacher, Vec<Outcome>)> {
    let space = env
        .spaces()
        .iter()
        .find(|s| s.id == spec.target)
        .ok_or(Error::UnknownSpace(spec.target))?;
    let mut w = env.clone();
    w.reset(reset_seed);
    let mut repertoire = Vec::new();
    let mut dropped = Vec::new();
    for goal in cell_grid(space, spec.grid) {
        let demo = match spec.kind {
            TeacherKind::Action => w.solve(&goal).and_then(|a| {
                let c = replay_competence(&w, reset_seed, &goal, &a)?;
                (c >= -DEMO_TOLERANCE).then_some(Demo::Action(a))
            }),
            TeacherKind::Procedure => w.solve_procedure(&goal).and_then(|p| {
                let parts = p
                    .components()
                    .iter()
                    .map(|c| w.solve(c))
                    .collect::<Option<Vec<_>>>()?;
                let a = concat(&parts).ok()?;
                let c = replay_competence(&w, reset_seed, &goal, &a)?;
                (c >= -DEMO_TOLERANCE).then_some(Demo::Procedure(p))
            }),
        };
        match demo {
            Some(demo) => repertoire.push(TeacherEntry { goal: goal.value, demo }),
            None => dropped.push(goal),
        }
    }
    Ok((Teacher::new(spec.id.clone(), spec.kind, spec.target, repertoire)?, dropped))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::arm::{ArmConfig, ArmPenWorld, DRAWING, END_EFFECTOR, PEN};
    use crate::domain::Primitive;

    fn arm() -> ArmPenWorld {
        ArmPenWorld::new(ArmConfig::default())
    }

    fn spec(kind: TeacherKind, target: SpaceId, grid: usize) -> TeacherSpec {
        TeacherSpec { id: "t".into(), kind, target, grid }
    }

    #[test]
    fn action_teacher_on_reachable_grid() {
        let w = arm();
        let (t, dropped) = build_teacher(&w, &spec(TeacherKind::Action, END_EFFECTOR, 5), 0).unwrap();
        assert!(t.repertoire().len() <= 25);
        assert_eq!(t.repertoire().len() + dropped.len(), 25);
        assert!(!t.repertoire().is_empty());
        for e in t.repertoire() {
            let Demo::Action(a) = &e.demo else { panic!() };
            let c = replay_competence(&w, 0, &Outcome::new(END_EFFECTOR, e.goal.clone()), a).unwrap();
            assert!(c >= -0.05);
        }
    }

    #[test]
    fn drawing_teacher_demos_are_pen_procedures() {
        let w = arm();
        let (t, _) = build_teacher(&w, &spec(TeacherKind::Procedure, DRAWING, 3), 0).unwrap();
        assert!(!t.repertoire().is_empty());
        for e in t.repertoire() {
            let Demo::Procedure(p) = &e.demo else { panic!() };
            assert_eq!(p.components().len(), 2);
            assert!(p.components().iter().all(|c| c.space == PEN));
            assert_eq!(p.components()[0].value, e.goal[..2].to_vec());
        }
    }

    #[test]
    fn degenerate_grid_is_rejected() {
        let w = arm();
        assert_eq!(
            build_teacher(&w, &spec(TeacherKind::Action, PEN, 0), 0).unwrap_err(),
            Error::EmptyRepertoire
        );
    }

    fn entry(g: f64, a: f64) -> TeacherEntry {
        TeacherEntry {
            goal: vec![g],
            demo: Demo::Action(CompoundAction::single(Primitive::new(vec![a]).unwrap())),
        }
    }

    #[test]
    fn nearest_demo() {
        let t = Teacher::new("t", TeacherKind::Action, SpaceId(0), vec![entry(0.0, 0.1), entry(1.0, 0.9)]).unwrap();
        assert_eq!(t.demo(&[0.0]).unwrap(), &t.repertoire()[0].demo);
        assert_eq!(t.demo(&[0.4]).unwrap(), &t.repertoire()[0].demo);
        assert_eq!(t.demo(&[0.5]).unwrap(), &t.repertoire()[0].demo);
        assert_eq!(t.demo(&[0.7]).unwrap(), t.demo(&[0.7]).unwrap());
        assert_eq!(t.demo(&[0.7]).unwrap(), &t.repertoire()[1].demo);
    }

    #[test]
    fn serialization_round_trip() {
        let (t, _) = build_teacher(&arm(), &spec(TeacherKind::Procedure, DRAWING, 3), 0).unwrap();
        let text = serde_json::to_string(&t).unwrap();
        let back: Teacher = serde_json::from_str(&text).unwrap();
        assert_eq!(back, t);
        let bad = r#"{"id":"x","kind":"action","target":"O0","repertoire":[]}"#;
        assert!(serde_json::from_str::<Teacher>(bad).is_err());
    }
}
