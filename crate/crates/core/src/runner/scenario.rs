//! Scripted pushing scenario for context refinement: the robot drives
//! straight into an object whose center sits at a fixed distance, so a
//! larger object is touched earlier and pushed farther by the same motion.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::affordance::{step_transitions, Affordance, AffordanceParams, AffordanceSet, Transition};
use crate::domain::{CompoundAction, Node, Primitive};
use crate::envs::pusher::{MobilePusherWorld, PusherConfig, OBJECT1, ROBOT};
use crate::envs::{execute, Environment};
use crate::error::{Error, Result};

pub const SMALL_RADIUS: f64 = 0.03;
pub const LARGE_RADIUS: f64 = 0.08;
/// Robot-to-object center distance at the start of every push.
pub const CENTER_DISTANCE: f64 = 0.2;
pub const CALIBRATION_PUSHES: usize = 60;
pub const MIXED_PUSHES: usize = 60;
/// Context index of the pushed object's radius.
pub const RADIUS_DIM: usize = 0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RefinementReport {
    /// (affordance, context dimension) pairs added during the mixed phase.
    pub refined: Vec<(usize, usize)>,
    /// Push index (counted from the start) of the first refinement.
    pub first_refinement: Option<usize>,
    pub context_dims: Vec<usize>,
    /// Mean prediction error over the final window before and after
    /// refinement.
    pub error_before: f64,
    pub error_after: f64,
}

impl RefinementReport {
    pub fn reduction(&self) -> f64 {
        if self.error_before > 0.0 {
            1.0 - self.error_after / self.error_before
        } else {
            0.0
        }
    }
}

fn push(world: &mut MobilePusherWorld, radius: f64, rng: &mut impl Rng) -> Result<Vec<Transition>> {
    world.reset(0);
    let start = world.config().start;
    world.place_object(0, [start[0] + CENTER_DISTANCE, start[1]], radius);
    world.place_object(1, [0.85, 0.15], 0.05);
    let context = world.context();
    let v = rng.random_range(0.7..=1.0);
    let action = CompoundAction::new(vec![Primitive::new(vec![v, v])?])?;
    let x = execute(world, &action)?;
    Ok(step_transitions(&context, &action, &x.trace))
}

fn window_error(aff: &Affordance, window: &[Transition]) -> f64 {
    let errs: Vec<f64> = window
        .iter()
        .filter_map(|t| {
            let din = t.delta(aff.input)?;
            let dout = t.delta(Node::Space(aff.output))?;
            dout.iter().any(|d| d.abs() > 1e-9).then(|| crate::domain::euclidean(&aff.predict(din, &t.context), dout))
        })
        .collect();
    errs.iter().sum::<f64>() / errs.len().max(1) as f64
}

/// Calibrates robot-to-object pushing on small objects, then alternates
/// small and large objects while refining. Deterministic given `seed`.
pub fn two_radius_refinement(seed: u64, params: &AffordanceParams) -> Result<RefinementReport> {
    let mut world = MobilePusherWorld::new(PusherConfig { heading_range: 0.0, ..Default::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut window: Vec<Transition> = Vec::new();
    for _ in 0..CALIBRATION_PUSHES {
        window.extend(push(&mut world, SMALL_RADIUS, &mut rng)?);
    }
    let mut set = AffordanceSet::new(params.clone());
    set.create(&window, Node::Action, ROBOT, 0).ok_or(Error::NoData)?;
    let id = set.create(&window, Node::Space(ROBOT), OBJECT1, 0).ok_or(Error::NoData)?;
    set.refine(&window, &window);
    let before = set.affordances()[id].clone();
    let mut refined = Vec::new();
    let mut first = None;
    for k in 0..MIXED_PUSHES {
        let radius = if k % 2 == 0 { LARGE_RADIUS } else { SMALL_RADIUS };
        let new = push(&mut world, radius, &mut rng)?;
        window.extend(new.iter().cloned());
        let excess = window.len().saturating_sub(params.window);
        window.drain(..excess);
        let r: Vec<(usize, usize)> = set.refine(&window, &new).into_iter().filter(|(a, _)| *a == id).collect();
        if first.is_none() && !r.is_empty() {
            first = Some(CALIBRATION_PUSHES + k);
        }
        refined.extend(r);
    }
    let after = &set.affordances()[id];
    Ok(RefinementReport {
        refined,
        first_refinement: first,
        context_dims: after.context_dims.clone(),
        error_before: window_error(&before, &window),
        error_after: window_error(after, &window),
    })
}
