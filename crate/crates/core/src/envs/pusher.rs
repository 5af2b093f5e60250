//! Differential-drive robot pushing discs around a square arena.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{grid_goals, Environment};
use crate::domain::{CompoundAction, Node, Observation, Outcome, OutcomeSpace, Primitive, SpaceId, StateSnapshot};
use crate::error::Result;
use crate::hierarchy::HierarchyGraph;

pub const ROBOT: SpaceId = SpaceId(0);
pub const OBJECT1: SpaceId = SpaceId(1);
pub const OBJECT2: SpaceId = SpaceId(2);

const CONTACT_ITERATIONS: usize = 40;
const OVERLAP_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PusherConfig {
    pub substeps: usize,
    pub robot_radius: f64,
    /// Distance covered by one primitive at full forward speed.
    pub max_speed: f64,
    /// Rotation of one primitive at full opposite wheel speeds.
    pub max_turn: f64,
    pub start: [f64; 2],
    pub heading_range: f64,
    pub object_radius: [f64; 2],
    pub first_gap: [f64; 2],
    pub second_gap: [f64; 2],
    pub second_bearing: f64,
    pub obstacle: [f64; 2],
    pub obstacle_radius: f64,
    /// Object travel that counts as a displacement.
    pub moved_min: f64,
}

impl Default for PusherConfig {
    fn default() -> Self {
        PusherConfig {
            substeps: 20,
            robot_radius: 0.05,
            max_speed: 0.25,
            max_turn: PI / 2.0,
            start: [0.2, 0.5],
            heading_range: 0.25,
            object_radius: [0.03, 0.08],
            first_gap: [0.0, 0.06],
            second_gap: [0.02, 0.08],
            second_bearing: 0.3,
            obstacle: [0.5, 0.85],
            obstacle_radius: 0.08,
            moved_min: 0.005,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct Disc {
    p: [f64; 2],
    r: f64,
}

fn sub(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

fn norm(a: [f64; 2]) -> f64 {
    a[0].hypot(a[1])
}

fn dir(theta: f64) -> [f64; 2] {
    [theta.cos(), theta.sin()]
}

fn wrap(a: f64) -> f64 {
    (a + PI).rem_euclid(2.0 * PI) - PI
}

/// Moves `d` out of `fixed` along the line of centers. Returns whether a
/// correction was needed.
fn separate(d: &mut Disc, fixed: [f64; 2], fixed_r: f64) -> bool {
    let v = sub(d.p, fixed);
    let dist = norm(v);
    let overlap = d.r + fixed_r - dist;
    if overlap <= OVERLAP_TOL {
        return false;
    }
    let n = if dist > 1e-12 { [v[0] / dist, v[1] / dist] } else { [1.0, 0.0] };
    d.p[0] += n[0] * overlap;
    d.p[1] += n[1] * overlap;
    true
}

fn clamp_arena(d: &mut Disc) -> bool {
    let mut moved = false;
    for i in 0..2 {
        let c = d.p[i].clamp(d.r, 1.0 - d.r);
        if c != d.p[i] {
            d.p[i] = c;
            moved = true;
        }
    }
    moved
}

#[derive(Clone, Debug)]
pub struct MobilePusherWorld {
    cfg: PusherConfig,
    spaces: Vec<OutcomeSpace>,
    robot: Disc,
    heading: f64,
    objects: [Disc; 2],
    object_start: [[f64; 2]; 2],
    second_hit_by_first: bool,
    context: Vec<f64>,
}

impl MobilePusherWorld {
    pub fn new(cfg: PusherConfig) -> Self {
        let arena = |id, name: &str| OutcomeSpace::new(id, name, vec![0.0; 2], vec![1.0; 2]).expect("valid bounds");
        let spaces = vec![arena(ROBOT, "robot"), arena(OBJECT1, "object-1"), arena(OBJECT2, "object-2")];
        let robot = Disc { p: cfg.start, r: cfg.robot_radius };
        let mut w = MobilePusherWorld {
            cfg,
            spaces,
            robot,
            heading: 0.0,
            objects: [robot; 2],
            object_start: [[0.0; 2]; 2],
            second_hit_by_first: false,
            context: Vec::new(),
        };
        w.reset(0);
        w
    }

    pub fn config(&self) -> &PusherConfig {
        &self.cfg
    }

    pub fn robot(&self) -> ([f64; 2], f64) {
        (self.robot.p, self.heading)
    }

    pub fn object(&self, i: usize) -> ([f64; 2], f64) {
        (self.objects[i].p, self.objects[i].r)
    }

    /// Context of the current episode, including scripted placements.
    pub fn context(&self) -> Vec<f64> {
        self.context.clone()
    }

    /// Places object `i`; used to script contact scenarios.
    pub fn place_object(&mut self, i: usize, p: [f64; 2], r: f64) {
        self.objects[i] = Disc { p, r };
        self.object_start[i] = p;
        self.context[i] = r;
    }

    fn overlaps(&self) -> bool {
        let o = self.cfg.obstacle;
        let or = self.cfg.obstacle_radius;
        let ov = |a: &Disc, p: [f64; 2], r: f64| a.r + r - norm(sub(a.p, p)) > 1e-7;
        let wall = |d: &Disc| d.p.iter().any(|x| *x < d.r - 1e-7 || *x > 1.0 - d.r + 1e-7);
        if ov(&self.robot, o, or) || wall(&self.robot) {
            return true;
        }
        for (i, d) in self.objects.iter().enumerate() {
            if ov(d, self.robot.p, self.robot.r) || ov(d, o, or) || wall(d) {
                return true;
            }
            for e in &self.objects[i + 1..] {
                if ov(d, e.p, e.r) {
                    return true;
                }
            }
        }
        false
    }

    /// Iterative contact resolution. The robot, walls and obstacle push
    /// objects; between objects the one farther from the robot yields.
    fn resolve_contacts(&mut self) -> bool {
        let (o, or) = (self.cfg.obstacle, self.cfg.obstacle_radius);
        let mut hit = false;
        for _ in 0..CONTACT_ITERATIONS {
            let mut moved = clamp_arena(&mut self.robot);
            moved |= separate(&mut self.robot, o, or);
            for d in &mut self.objects {
                moved |= separate(d, self.robot.p, self.robot.r);
            }
            let [a, b] = &mut self.objects;
            let (far, near, far_is_second) = if norm(sub(a.p, self.robot.p)) > norm(sub(b.p, self.robot.p)) {
                (a, *b, false)
            } else {
                (b, *a, true)
            };
            if separate(far, near.p, near.r) {
                moved = true;
                hit |= far_is_second;
            }
            for d in &mut self.objects {
                moved |= clamp_arena(d);
                moved |= separate(d, o, or);
            }
            if !moved {
                break;
            }
        }
        self.second_hit_by_first |= hit;
        !self.overlaps()
    }

    fn turn(&self, from: f64, to: f64) -> Vec<Primitive> {
        let delta = wrap(to - from);
        if delta.abs() < 1e-9 {
            return Vec::new();
        }
        let k = (delta.abs() / self.cfg.max_turn - 1e-9).ceil().max(1.0) as usize;
        let s = delta / (k as f64 * self.cfg.max_turn);
        vec![Primitive::clipped(vec![-s, s]); k]
    }

    fn drive(&self, d: f64) -> Vec<Primitive> {
        if d < 1e-9 {
            return Vec::new();
        }
        let k = (d / self.cfg.max_speed - 1e-9).ceil().max(1.0) as usize;
        let w = d / (k as f64 * self.cfg.max_speed);
        vec![Primitive::clipped(vec![w, w]); k]
    }

    fn go_to(&self, from: [f64; 2], heading: f64, to: [f64; 2]) -> (Vec<Primitive>, f64) {
        let v = sub(to, from);
        if norm(v) < 1e-9 {
            return (Vec::new(), heading);
        }
        let h = v[1].atan2(v[0]);
        let mut p = self.turn(heading, h);
        p.extend(self.drive(norm(v)));
        (p, h)
    }

    /// Approach object `i` from behind along `u`, then push for `d`.
    fn push_plan(&self, i: usize, u: [f64; 2], d: f64) -> Vec<Primitive> {
        let o = self.objects[i];
        let gap = 0.005;
        let q = [o.p[0] - u[0] * (self.robot.r + o.r + gap), o.p[1] - u[1] * (self.robot.r + o.r + gap)];
        let (mut plan, h) = self.go_to(self.robot.p, self.heading, q);
        plan.extend(self.turn(h, u[1].atan2(u[0])));
        plan.extend(self.drive(d + gap));
        plan
    }

    fn simulate(&self, plan: &[Primitive]) -> Option<Observation> {
        let mut w = self.clone();
        for p in plan {
            w.step(p).ok()?;
        }
        Some(w.observe())
    }

    /// The straight pushes through object 1 toward object 2 that the solver
    /// searches over: bearing offsets around the line of centers and push
    /// lengths.
    fn chain_pushes(&self) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for a in -20..=20 {
            for k in 1..=10 {
                out.push((a as f64 * 0.02, k as f64 * 0.025));
            }
        }
        out
    }

    fn chain_plan(&self, offset: f64, d: f64) -> Vec<Primitive> {
        let line = sub(self.objects[1].p, self.objects[0].p);
        let b = line[1].atan2(line[0]) + offset;
        self.push_plan(0, dir(b), d)
    }
}

impl Environment for MobilePusherWorld {
    fn name(&self) -> &'static str {
        "mobile-pusher"
    }

    fn spaces(&self) -> &[OutcomeSpace] {
        &self.spaces
    }

    fn primitive_dim(&self) -> usize {
        2
    }

    fn context_labels(&self) -> Vec<String> {
        vec!["object-1-radius".into(), "object-2-radius".into(), "initial-heading".into()]
    }

    fn reset(&mut self, seed: u64) -> Vec<f64> {
        let c = &self.cfg;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let theta = rng.random_range(-c.heading_range..=c.heading_range);
        let r1 = rng.random_range(c.object_radius[0]..=c.object_radius[1]);
        let r2 = rng.random_range(c.object_radius[0]..=c.object_radius[1]);
        let g1 = rng.random_range(c.first_gap[0]..=c.first_gap[1]);
        let g2 = rng.random_range(c.second_gap[0]..=c.second_gap[1]);
        let bearing = theta + rng.random_range(-c.second_bearing..=c.second_bearing);
        self.robot = Disc { p: c.start, r: c.robot_radius };
        self.heading = theta;
        let d1 = c.robot_radius + r1 + g1;
        let p1 = [c.start[0] + d1 * theta.cos(), c.start[1] + d1 * theta.sin()];
        let d2 = r1 + r2 + g2;
        let p2 = [p1[0] + d2 * bearing.cos(), p1[1] + d2 * bearing.sin()];
        self.objects = [Disc { p: p1, r: r1 }, Disc { p: p2, r: r2 }];
        self.object_start = [p1, p2];
        self.second_hit_by_first = false;
        self.context = vec![r1, r2, theta];
        self.context.clone()
    }

    fn step(&mut self, a: &Primitive) -> Result<Vec<StateSnapshot>> {
        a.check_dim(2)?;
        let (wl, wr) = (a.params()[0], a.params()[1]);
        let n = self.cfg.substeps.max(1);
        let v = (wl + wr) / 2.0 * self.cfg.max_speed / n as f64;
        let omega = (wr - wl) / 2.0 * self.cfg.max_turn / n as f64;
        let mut trace = Vec::with_capacity(n);
        for _ in 0..n {
            let saved = (self.robot, self.objects, self.second_hit_by_first);
            let mid = self.heading + omega / 2.0;
            self.robot.p[0] += v * mid.cos();
            self.robot.p[1] += v * mid.sin();
            self.heading = wrap(self.heading + omega);
            if !self.resolve_contacts() {
                (self.robot, self.objects, self.second_hit_by_first) = saved;
            }
            trace.push(self.snapshot());
        }
        Ok(trace)
    }

    fn snapshot(&self) -> StateSnapshot {
        vec![
            Some(self.robot.p.to_vec()),
            Some(self.objects[0].p.to_vec()),
            Some(self.objects[1].p.to_vec()),
        ]
    }

    fn observe(&self) -> Observation {
        let moved = |i: usize| norm(sub(self.objects[i].p, self.object_start[i])) > self.cfg.moved_min;
        BTreeMap::from([
            (ROBOT, Some(self.robot.p.to_vec())),
            (OBJECT1, moved(0).then(|| self.objects[0].p.to_vec())),
            (OBJECT2, (moved(1) && self.second_hit_by_first).then(|| self.objects[1].p.to_vec())),
        ])
    }

    fn ground_truth_hierarchy(&self) -> HierarchyGraph {
        let s = Node::Space;
        let mut h = HierarchyGraph::new(self.spaces.iter().map(|sp| s(sp.id)), crate::hierarchy::DEFAULT_PRUNE_THRESHOLD);
        for (from, d) in [(ROBOT, Node::Action), (OBJECT1, s(ROBOT)), (OBJECT2, s(OBJECT1))] {
            h.add_edge(s(from), vec![d], 1.0).expect("declared nodes");
        }
        h
    }

    fn solve(&self, goal: &Outcome) -> Option<CompoundAction> {
        let g = [goal.value[0], goal.value[1]];
        let plan = match goal.space {
            ROBOT => self.go_to(self.robot.p, self.heading, g).0,
            OBJECT1 => {
                let v = sub(g, self.objects[0].p);
                let d = norm(v);
                if d < 1e-9 {
                    return None;
                }
                self.push_plan(0, [v[0] / d, v[1] / d], d)
            }
            OBJECT2 => {
                let mut best: Option<(f64, Vec<Primitive>)> = None;
                for (offset, d) in self.chain_pushes() {
                    let plan = self.chain_plan(offset, d);
                    if plan.is_empty() || plan.len() > 4 {
                        continue;
                    }
                    if let Some(Some(v)) = self.simulate(&plan).and_then(|o| o.get(&OBJECT2).cloned()) {
                        let e = norm(sub([v[0], v[1]], g));
                        if best.as_ref().is_none_or(|(b, _)| e < *b) {
                            best = Some((e, plan));
                        }
                    }
                }
                best?.1
            }
            _ => return None,
        };
        if plan.is_empty() {
            return CompoundAction::new(vec![self.neutral_primitive()]).ok();
        }
        CompoundAction::new(plan).ok()
    }

    fn benchmark_candidates(&self, seed: u64) -> Vec<Outcome> {
        let mut w = self.clone();
        w.reset(seed);
        let mut goals = grid_goals(&self.spaces[ROBOT.index()], 5);
        goals.extend(grid_goals(&self.spaces[OBJECT1.index()], 5));
        // seeded object-2 targets reachable by one chained push
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let pushes = w.chain_pushes();
        let mut tries = 0;
        let mut found = 0;
        while found < 8 && tries < 200 {
            tries += 1;
            let (offset, d) = pushes[rng.random_range(0..pushes.len())];
            let plan = w.chain_plan(offset, d);
            if plan.len() > 4 {
                continue;
            }
            if let Some(Some(v)) = w.simulate(&plan).and_then(|o| o.get(&OBJECT2).cloned()) {
                goals.push(Outcome::new(OBJECT2, v));
                found += 1;
            }
        }
        goals
    }
}
