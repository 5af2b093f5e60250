//! Planar three-link arm with a pen to draw with and a joystick that drives a
//! character.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{grid_goals, Environment};
use crate::domain::{
    CompoundAction, Node, Observation, Outcome, OutcomeSpace, Primitive, Procedure, SpaceId, StateSnapshot,
};
use crate::error::Result;
use crate::hierarchy::HierarchyGraph;

pub const END_EFFECTOR: SpaceId = SpaceId(0);
pub const PEN: SpaceId = SpaceId(1);
pub const DRAWING: SpaceId = SpaceId(2);
pub const TILT: SpaceId = SpaceId(3);
pub const CHARACTER: SpaceId = SpaceId(4);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ArmConfig {
    pub links: [f64; 3],
    pub pen_start: [f64; 2],
    pub handle: [f64; 2],
    pub contact_radius: f64,
    pub substeps: usize,
    /// End-effector offset from the handle that saturates the tilt.
    pub tilt_range: f64,
    /// Character displacement per primitive at full tilt.
    pub character_gain: f64,
    pub character_bound: f64,
    /// Pen travel during one primitive that counts as a drawn stroke.
    pub stroke_min: f64,
}

impl Default for ArmConfig {
    fn default() -> Self {
        ArmConfig {
            links: [0.5, 0.3, 0.2],
            pen_start: [0.6, 0.4],
            handle: [-0.5, 0.5],
            contact_radius: 0.05,
            substeps: 20,
            tilt_range: 0.25,
            character_gain: 0.2,
            character_bound: 0.6,
            stroke_min: 0.1,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ArmPenWorld {
    cfg: ArmConfig,
    spaces: Vec<OutcomeSpace>,
    q: [f64; 3],
    pen: [f64; 2],
    pen_held: bool,
    handle_held: bool,
    tilt: [f64; 2],
    character: [f64; 2],
    strokes: Vec<[f64; 2]>,
}

pub fn forward_kinematics(links: &[f64; 3], q: &[f64; 3]) -> [f64; 2] {
    let mut angle = 0.0;
    let mut p = [0.0, 0.0];
    for (l, qi) in links.iter().zip(q) {
        angle += qi;
        p[0] += l * angle.cos();
        p[1] += l * angle.sin();
    }
    p
}

fn wrap(a: f64) -> f64 {
    let mut a = (a + PI).rem_euclid(2.0 * PI) - PI;
    if a < -PI {
        a = -PI;
    }
    a
}

/// Joint angles placing the end-effector at `target`, or `None` when it is
/// out of reach. The last link orientation is scanned outward from the
/// direction of the target so the answer is deterministic.
pub fn inverse_kinematics(links: &[f64; 3], target: [f64; 2]) -> Option<[f64; 3]> {
    let [l1, l2, l3] = *links;
    let base = target[1].atan2(target[0]);
    for k in 0..=144 {
        let offset = (k as f64 / 2.0).ceil() * if k % 2 == 0 { 1.0 } else { -1.0 } * PI / 72.0;
        let phi = base + offset;
        let w = [target[0] - l3 * phi.cos(), target[1] - l3 * phi.sin()];
        let d = w[0].hypot(w[1]);
        if d > l1 + l2 + 1e-12 || d < (l1 - l2).abs() - 1e-12 {
            continue;
        }
        let c2 = ((d * d - l1 * l1 - l2 * l2) / (2.0 * l1 * l2)).clamp(-1.0, 1.0);
        let q2 = c2.acos();
        let q1 = w[1].atan2(w[0]) - (l2 * q2.sin()).atan2(l1 + l2 * q2.cos());
        let q3 = phi - q1 - q2;
        return Some([wrap(q1), wrap(q2), wrap(q3)]);
    }
    None
}

fn dist(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

impl ArmPenWorld {
    pub fn new(cfg: ArmConfig) -> Self {
        let unit = |id, name: &str| OutcomeSpace::new(id, name, vec![-1.0; 2], vec![1.0; 2]).expect("valid bounds");
        let b = cfg.character_bound;
        let spaces = vec![
            unit(END_EFFECTOR, "end-effector"),
            unit(PEN, "pen"),
            OutcomeSpace::new(DRAWING, "drawing", vec![-1.0; 4], vec![1.0; 4]).expect("valid bounds"),
            unit(TILT, "joystick"),
            OutcomeSpace::new(CHARACTER, "character", vec![-b; 2], vec![b; 2]).expect("valid bounds"),
        ];
        let mut w = ArmPenWorld {
            pen: cfg.pen_start,
            cfg,
            spaces,
            q: [0.0; 3],
            pen_held: false,
            handle_held: false,
            tilt: [0.0; 2],
            character: [0.0; 2],
            strokes: Vec::new(),
        };
        w.reset(0);
        w
    }

    pub fn config(&self) -> &ArmConfig {
        &self.cfg
    }

    pub fn end_effector(&self) -> [f64; 2] {
        forward_kinematics(&self.cfg.links, &self.q)
    }

    pub fn pen(&self) -> [f64; 2] {
        self.pen
    }

    fn tilt_at(&self, ee: [f64; 2]) -> [f64; 2] {
        let r = self.cfg.tilt_range;
        [
            ((ee[0] - self.cfg.handle[0]) / r).clamp(-1.0, 1.0),
            ((ee[1] - self.cfg.handle[1]) / r).clamp(-1.0, 1.0),
        ]
    }

    fn ik(&self, target: [f64; 2]) -> Option<Primitive> {
        let q = inverse_kinematics(&self.cfg.links, target)?;
        let p = Primitive::new(q.iter().map(|a| a / PI).collect()).ok()?;
        // reject solutions that do not land where asked
        let qq = [p.params()[0] * PI, p.params()[1] * PI, p.params()[2] * PI];
        (dist(forward_kinematics(&self.cfg.links, &qq), target) < 1e-6).then_some(p)
    }

    fn seq(&self, targets: &[[f64; 2]]) -> Option<CompoundAction> {
        let prims = targets.iter().map(|t| self.ik(*t)).collect::<Option<Vec<_>>>()?;
        CompoundAction::new(prims).ok()
    }

    fn as2(v: &[f64]) -> [f64; 2] {
        [v[0], v[1]]
    }
}

impl Environment for ArmPenWorld {
    fn name(&self) -> &'static str {
        "arm-pen"
    }

    fn spaces(&self) -> &[OutcomeSpace] {
        &self.spaces
    }

    fn primitive_dim(&self) -> usize {
        3
    }

    fn context_labels(&self) -> Vec<String> {
        Vec::new()
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.q = [0.0; 3];
        self.pen = self.cfg.pen_start;
        self.pen_held = false;
        self.handle_held = false;
        self.tilt = [0.0; 2];
        self.character = [0.0; 2];
        self.strokes.clear();
        Vec::new()
    }

    fn step(&mut self, a: &Primitive) -> Result<Vec<StateSnapshot>> {
        a.check_dim(3)?;
        let target = [a.params()[0] * PI, a.params()[1] * PI, a.params()[2] * PI];
        let start = self.q;
        let pen_before = self.pen;
        let n = self.cfg.substeps.max(1);
        let mut trace = Vec::with_capacity(n);
        for k in 1..=n {
            let t = k as f64 / n as f64;
            for i in 0..3 {
                self.q[i] = start[i] + (target[i] - start[i]) * t;
            }
            let ee = self.end_effector();
            // contact at any substep grasps, and the grasp is sticky
            if !self.pen_held && dist(ee, self.pen) <= self.cfg.contact_radius {
                self.pen_held = true;
            }
            if !self.handle_held && dist(ee, self.cfg.handle) <= self.cfg.contact_radius {
                self.handle_held = true;
            }
            if self.pen_held {
                self.pen = ee;
            }
            if self.handle_held {
                self.tilt = self.tilt_at(ee);
            }
            trace.push(self.snapshot());
        }
        if self.handle_held {
            for i in 0..2 {
                self.character[i] += self.cfg.character_gain * self.tilt[i];
            }
        }
        if self.pen_held && dist(self.pen, pen_before) > self.cfg.stroke_min {
            self.strokes.push(self.pen);
        }
        if let Some(last) = trace.last_mut() {
            *last = self.snapshot();
        }
        Ok(trace)
    }

    fn snapshot(&self) -> StateSnapshot {
        vec![
            Some(self.end_effector().to_vec()),
            Some(self.pen.to_vec()),
            None,
            Some(self.tilt.to_vec()),
            Some(self.character.to_vec()),
        ]
    }

    fn observe(&self) -> Observation {
        let drawing = (self.strokes.len() >= 2).then(|| {
            let first = self.strokes[0];
            vec![first[0], first[1], self.pen[0], self.pen[1]]
        });
        BTreeMap::from([
            (END_EFFECTOR, Some(self.end_effector().to_vec())),
            (PEN, self.pen_held.then(|| self.pen.to_vec())),
            (DRAWING, drawing),
            (TILT, self.handle_held.then(|| self.tilt.to_vec())),
            (CHARACTER, self.handle_held.then(|| self.character.to_vec())),
        ])
    }

    fn ground_truth_hierarchy(&self) -> HierarchyGraph {
        let s = Node::Space;
        let mut h = HierarchyGraph::new(self.spaces.iter().map(|sp| s(sp.id)), crate::hierarchy::DEFAULT_PRUNE_THRESHOLD);
        let edges = [
            (END_EFFECTOR, vec![Node::Action]),
            (PEN, vec![s(END_EFFECTOR), s(END_EFFECTOR)]),
            (DRAWING, vec![s(PEN), s(PEN)]),
            (TILT, vec![s(END_EFFECTOR), s(END_EFFECTOR)]),
            (CHARACTER, vec![s(TILT), s(TILT)]),
        ];
        for (from, d) in edges {
            h.add_edge(s(from), d, 1.0).expect("declared nodes");
        }
        h
    }

    fn solve(&self, goal: &Outcome) -> Option<CompoundAction> {
        let v = &goal.value;
        let pen0 = self.cfg.pen_start;
        let h = self.cfg.handle;
        match goal.space {
            END_EFFECTOR => self.seq(&[Self::as2(v)]),
            PEN => self.seq(&[pen0, Self::as2(v)]),
            DRAWING => {
                let (a, b) = ([v[0], v[1]], [v[2], v[3]]);
                if dist(a, pen0) <= self.cfg.stroke_min || dist(a, b) <= self.cfg.stroke_min {
                    return None;
                }
                self.seq(&[pen0, a, b])
            }
            TILT => {
                let r = self.cfg.tilt_range;
                self.seq(&[h, [h[0] + r * v[0], h[1] + r * v[1]]])
            }
            CHARACTER => {
                let g = self.cfg.character_gain;
                let need = v[0].abs().max(v[1].abs()) / g;
                if need < 1e-9 {
                    return self.seq(&[h]);
                }
                let k = (need - 1e-9).ceil() as usize;
                if k > 3 {
                    return None;
                }
                let tilt = [v[0] / (g * k as f64), v[1] / (g * k as f64)];
                let r = self.cfg.tilt_range;
                let mut targets = vec![h];
                targets.extend(std::iter::repeat_n([h[0] + r * tilt[0], h[1] + r * tilt[1]], k));
                self.seq(&targets)
            }
            _ => None,
        }
    }

    fn solve_procedure(&self, goal: &Outcome) -> Option<Procedure> {
        match goal.space {
            DRAWING => {
                let v = &goal.value;
                Procedure::new(
                    Some(DRAWING),
                    vec![Outcome::new(PEN, vec![v[0], v[1]]), Outcome::new(PEN, vec![v[2], v[3]])],
                )
                .ok()
            }
            CHARACTER => {
                let v = &goal.value;
                let g = self.cfg.character_gain;
                // two equal tilts after grabbing
                let t = [v[0] / (2.0 * g), v[1] / (2.0 * g)];
                if t.iter().any(|x| x.abs() > 1.0) {
                    return None;
                }
                Procedure::new(Some(CHARACTER), vec![Outcome::new(TILT, t.to_vec()), Outcome::new(TILT, t.to_vec())]).ok()
            }
            _ => None,
        }
    }

    fn benchmark_candidates(&self, seed: u64) -> Vec<Outcome> {
        let mut goals = Vec::new();
        for s in [END_EFFECTOR, PEN] {
            goals.extend(grid_goals(&self.spaces[s.index()], 5));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let pen0 = self.cfg.pen_start;
        let mut pairs = 0;
        while pairs < 16 {
            let mut point = || loop {
                let p: [f64; 2] = [rng.random_range(-0.9..0.9), rng.random_range(-0.9..0.9)];
                if p[0].hypot(p[1]) <= 0.9 && p[0].hypot(p[1]) >= 0.3 {
                    break p;
                }
            };
            let (a, b) = (point(), point());
            if dist(a, pen0) > 2.0 * self.cfg.stroke_min && dist(a, b) > 2.0 * self.cfg.stroke_min {
                goals.push(Outcome::new(DRAWING, vec![a[0], a[1], b[0], b[1]]));
                pairs += 1;
            }
        }
        for s in [TILT, CHARACTER] {
            goals.extend(grid_goals(&self.spaces[s.index()], 5));
        }
        goals
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envs::{execute, validate_goal};
    use proptest::prelude::*;

    fn world() -> ArmPenWorld {
        ArmPenWorld::new(ArmConfig::default())
    }

    fn run(w: &mut ArmPenWorld, targets: &[[f64; 2]]) -> Observation {
        w.reset(0);
        let a = w.seq(targets).unwrap();
        execute(w, &a).unwrap().observation
    }

    #[test]
    fn zero_pose_reaches_along_x() {
        let mut w = world();
        w.reset(0);
        let trace = w.step(&Primitive::new(vec![0.0; 3]).unwrap()).unwrap();
        assert_eq!(trace.len(), 20);
        let ee = w.end_effector();
        assert!((ee[0] - 1.0).abs() < 1e-12 && ee[1].abs() < 1e-12);
        assert_eq!(w.observe()[&PEN], None);
    }

    #[test]
    fn reset_restores_layout() {
        let mut w = world();
        w.reset(3);
        assert_eq!(w.pen(), [0.6, 0.4]);
        assert!(w.step(&Primitive::new(vec![0.0; 2]).unwrap()).is_err());
    }

    #[test]
    fn inverse_kinematics_round_trip() {
        let links = [0.5, 0.3, 0.2];
        for target in [[0.6, 0.4], [-0.5, 0.5], [0.0, 0.0], [0.0, -0.99], [0.3, 0.1]] {
            let q = inverse_kinematics(&links, target).unwrap();
            let p = forward_kinematics(&links, &q);
            assert!(dist(p, target) < 1e-9, "{target:?}");
            assert!(q.iter().all(|a| a.abs() <= PI));
        }
        assert!(inverse_kinematics(&links, [1.0, 1.0]).is_none());
    }

    #[test]
    fn pen_follows_after_grasp() {
        let mut w = world();
        let obs = run(&mut w, &[[0.6, 0.4], [0.2, -0.5]]);
        let pen = obs[&PEN].clone().unwrap();
        assert!(dist([pen[0], pen[1]], [0.2, -0.5]) < 1e-9);
        assert_eq!(obs[&DRAWING], None);
    }

    #[test]
    fn drawing_needs_two_strokes() {
        let mut w = world();
        let obs = run(&mut w, &[[0.6, 0.4], [0.0, 0.7], [-0.4, -0.4]]);
        let d = obs[&DRAWING].clone().unwrap();
        assert!(dist([d[0], d[1]], [0.0, 0.7]) < 1e-9);
        assert!(dist([d[2], d[3]], [-0.4, -0.4]) < 1e-9);
        // the procedure form: each pen subgoal solved from scratch and concatenated
        let obs = run(&mut w, &[[0.6, 0.4], [0.0, 0.7], [0.6, 0.4], [-0.4, -0.4]]);
        let d2 = obs[&DRAWING].clone().unwrap();
        assert!(dist([d2[0], d2[1]], [0.0, 0.7]) < 1e-9);
        assert!(dist([d2[2], d2[3]], [-0.4, -0.4]) < 1e-9);
    }

    #[test]
    fn sweeping_through_the_pen_grasps_it() {
        let mut w = world();
        let links = w.config().links;
        let qa = inverse_kinematics(&links, [0.2, 0.7]).unwrap();
        let qm = inverse_kinematics(&links, [0.6, 0.4]).unwrap();
        let qb: Vec<f64> = (0..3).map(|i| 2.0 * qm[i] - qa[i]).collect();
        assert!(qb.iter().all(|q| q.abs() <= PI));
        w.reset(0);
        w.step(&Primitive::new(qa.iter().map(|q| q / PI).collect()).unwrap()).unwrap();
        assert_eq!(w.observe()[&PEN], None);
        w.step(&Primitive::new(qb.iter().map(|q| q / PI).collect()).unwrap()).unwrap();
        let pen = w.observe()[&PEN].clone().unwrap();
        let end = forward_kinematics(&links, &[qb[0], qb[1], qb[2]]);
        assert!(dist([pen[0], pen[1]], end) < 1e-9);
        assert!(dist(end, [0.6, 0.4]) > 0.1);
    }

    #[test]
    fn joystick_tilts_and_drives_character() {
        let mut w = world();
        let obs = run(&mut w, &[[-0.5, 0.5], [-0.4, 0.45], [-0.4, 0.45]]);
        let tilt = obs[&TILT].clone().unwrap();
        assert!((tilt[0] - 0.4).abs() < 1e-9 && (tilt[1] + 0.2).abs() < 1e-9);
        let ch = obs[&CHARACTER].clone().unwrap();
        assert!((ch[0] - 0.16).abs() < 1e-9 && (ch[1] + 0.08).abs() < 1e-9);
        let obs = run(&mut w, &[[0.5, 0.5]]);
        assert_eq!(obs[&TILT], None);
        assert_eq!(obs[&CHARACTER], None);
    }

    #[test]
    fn scripted_solutions_replay() {
        let w = world();
        let goals = [
            Outcome::new(END_EFFECTOR, vec![0.5, 0.5]),
            Outcome::new(PEN, vec![-0.5, 0.0]),
            Outcome::new(DRAWING, vec![0.0, 0.8, 0.5, -0.5]),
            Outcome::new(TILT, vec![1.0, -1.0]),
            Outcome::new(CHARACTER, vec![0.6, -0.3]),
            Outcome::new(CHARACTER, vec![0.0, 0.0]),
        ];
        let lens: Vec<usize> = goals
            .iter()
            .map(|g| validate_goal(&w, 0, g, 0.05, 4).unwrap_or_else(|| panic!("{g:?}")).0.len())
            .collect();
        assert_eq!(lens, vec![1, 2, 3, 2, 4, 1]);
    }

    #[test]
    fn benchmark_candidates_shape() {
        let w = world();
        let c = w.benchmark_candidates(1);
        assert_eq!(c.iter().filter(|g| g.space == DRAWING).count(), 16);
        assert_eq!(c.len(), 25 * 4 + 16);
        assert_eq!(c, w.benchmark_candidates(1));
    }

    proptest! {
        #[test]
        fn deterministic_and_within_reach(
            actions in prop::collection::vec(prop::collection::vec(-1.0f64..=1.0, 3), 1..5)
        ) {
            let a = CompoundAction::new(actions.into_iter().map(|p| Primitive::new(p).unwrap()).collect()).unwrap();
            let mut w1 = world();
            let mut w2 = world();
            w1.reset(0);
            w2.reset(0);
            let mut t1 = Vec::new();
            let mut t2 = Vec::new();
            for p in a.primitives() {
                t1.extend(w1.step(p).unwrap());
                t2.extend(w2.step(p).unwrap());
            }
            prop_assert_eq!(&t1, &t2);
            for s in &t1 {
                let ee = s[0].as_ref().unwrap();
                prop_assert!(ee[0].hypot(ee[1]) <= 1.0 + 1e-12);
            }
        }
    }
}
