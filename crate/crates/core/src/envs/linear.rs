//! Synthetic world with one outcome space that is an affine image of the
//! last primitive. Used to check the learning machinery in isolation.

use std::collections::BTreeMap;

use super::{grid_goals, Environment};
use crate::domain::{CompoundAction, Node, Observation, Outcome, OutcomeSpace, Primitive, SpaceId, StateSnapshot};
use crate::error::Result;
use crate::hierarchy::HierarchyGraph;

pub const GAIN: f64 = 0.8;
pub const OFFSET: f64 = -0.1;

#[derive(Clone, Debug)]
pub struct LinearWorld {
    spaces: Vec<OutcomeSpace>,
    value: Vec<f64>,
}

impl LinearWorld {
    pub fn new(dim: usize) -> Self {
        let dim = dim.max(1);
        LinearWorld {
            spaces: vec![OutcomeSpace::new(SpaceId(0), "linear", vec![-1.0; dim], vec![1.0; dim]).expect("valid bounds")],
            value: vec![OFFSET; dim],
        }
    }

    pub fn map(a: &[f64]) -> Vec<f64> {
        a.iter().map(|x| GAIN * x + OFFSET).collect()
    }
}

impl Environment for LinearWorld {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn spaces(&self) -> &[OutcomeSpace] {
        &self.spaces
    }

    fn primitive_dim(&self) -> usize {
        self.value.len()
    }

    fn context_labels(&self) -> Vec<String> {
        Vec::new()
    }

    fn reset(&mut self, _seed: u64) -> Vec<f64> {
        self.value = vec![OFFSET; self.value.len()];
        Vec::new()
    }

    fn step(&mut self, a: &Primitive) -> Result<Vec<StateSnapshot>> {
        a.check_dim(self.value.len())?;
        self.value = Self::map(a.params());
        Ok(vec![self.snapshot()])
    }

    fn snapshot(&self) -> StateSnapshot {
        vec![Some(self.value.clone())]
    }

    fn observe(&self) -> Observation {
        BTreeMap::from([(SpaceId(0), Some(self.value.clone()))])
    }

    fn ground_truth_hierarchy(&self) -> HierarchyGraph {
        let mut h = HierarchyGraph::new([Node::Space(SpaceId(0))], crate::hierarchy::DEFAULT_PRUNE_THRESHOLD);
        h.add_edge(Node::Space(SpaceId(0)), vec![Node::Action], 1.0).expect("declared nodes");
        h
    }

    fn solve(&self, goal: &Outcome) -> Option<CompoundAction> {
        let a: Vec<f64> = goal.value.iter().map(|g| (g - OFFSET) / GAIN).collect();
        Primitive::new(a).ok().map(CompoundAction::single)
    }

    fn benchmark_candidates(&self, _seed: u64) -> Vec<Outcome> {
        let n = if self.value.len() == 1 { 21 } else { 5 };
        grid_goals(&self.spaces[0], n)
    }
}
