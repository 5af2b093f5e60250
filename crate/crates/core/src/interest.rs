//! Competence, per-space region trees with progress-based interest, and the
//! strategy/goal selector.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{euclidean, Outcome, OutcomeSpace, SpaceId};
use crate::error::{Error, Result};
use crate::strategies::StrategyId;

/// `-min(1, d / diameter)`; a goal that was not produced scores `-1`.
pub fn competence(goal: &Outcome, reached: Option<&Outcome>, space: &OutcomeSpace) -> Result<f64> {
    if goal.space != space.id {
        return Err(Error::SpaceMismatch(goal.space, space.id));
    }
    space.check(goal)?;
    let Some(r) = reached else { return Ok(-1.0) };
    if r.space != goal.space {
        return Err(Error::SpaceMismatch(goal.space, r.space));
    }
    space.check(r)?;
    Ok(-(euclidean(&goal.value, &r.value) / space.diameter()).min(1.0))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InterestParams {
    pub window: usize,
    pub split_threshold: usize,
    pub novelty: f64,
    pub exploit_probability: f64,
    pub pair_probability: f64,
    pub autonomous_cost: f64,
    pub mimic_cost: f64,
}

impl Default for InterestParams {
    fn default() -> Self {
        InterestParams {
            window: 20,
            split_threshold: 50,
            novelty: 0.01,
            exploit_probability: 0.7,
            pair_probability: 0.2,
            autonomous_cost: 1.0,
            mimic_cost: 5.0,
        }
    }
}

impl InterestParams {
    pub fn cost(&self, s: &StrategyId) -> f64 {
        if s.is_mimicry() {
            self.mimic_cost
        } else {
            self.autonomous_cost
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub goal: Vec<f64>,
    pub competence: f64,
    pub episode: usize,
    pub strategy: StrategyId,
}

/// Interest of `strategy` from a chronological history: absolute difference
/// between the mean competence of the newest and oldest halves of the last
/// `window` entries, plus a novelty bonus that decays with the entry count.
pub fn history_interest(history: &[Entry], strategy: &StrategyId, params: &InterestParams) -> f64 {
    let comps: Vec<f64> = history
        .iter()
        .filter(|e| &e.strategy == strategy)
        .map(|e| e.competence)
        .collect();
    let novelty = params.novelty / (1.0 + comps.len() as f64);
    let recent = &comps[comps.len().saturating_sub(params.window)..];
    if recent.len() < 4 {
        return novelty;
    }
    let half = recent.len() / 2;
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    (mean(&recent[recent.len() - half..]) - mean(&recent[..half])).abs() + novelty
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub dim: usize,
    pub cut: f64,
    pub left: usize,
    pub right: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub history: Vec<Entry>,
    pub split: Option<Split>,
    pub interest: BTreeMap<StrategyId, f64>,
}

impl Region {
    fn new(lower: Vec<f64>, upper: Vec<f64>) -> Self {
        Region {
            lower,
            upper,
            history: Vec::new(),
            split: None,
            interest: BTreeMap::new(),
        }
    }

    pub fn is_leaf(&self) -> bool {
        self.split.is_none()
    }

    /// Half-open membership; the upper face is closed where it coincides
    /// with the space bound.
    pub fn contains(&self, x: &[f64], space_upper: &[f64]) -> bool {
        x.iter().enumerate().all(|(i, &v)| {
            v >= self.lower[i] && (v < self.upper[i] || (self.upper[i] == space_upper[i] && v <= self.upper[i]))
        })
    }

    pub fn interest(&self, s: &StrategyId, params: &InterestParams) -> f64 {
        self.interest
            .get(s)
            .copied()
            .unwrap_or_else(|| history_interest(&self.history, s, params))
    }
}

/// Chooses the cut of an over-full region. Candidates are the 1/6..5/6
/// quantiles of the goals along each dimension that fall strictly inside the
/// box; the score is `n_left * n_right * |mean_left - mean_right|`. Ties go to
/// the lowest dimension, then the lowest cut. With no positive score the box
/// is halved along its widest dimension relative to `space_width`.
pub fn choose_split(lower: &[f64], upper: &[f64], space_width: &[f64], history: &[Entry]) -> (usize, f64) {
    let mut best: Option<(f64, usize, f64)> = None;
    for d in 0..lower.len() {
        let mut xs: Vec<f64> = history.iter().map(|e| e.goal[d]).collect();
        xs.sort_by(f64::total_cmp);
        let mut cuts: Vec<f64> = (1..=5)
            .map(|i| xs[(i * xs.len()) / 6])
            .filter(|&c| c > lower[d] && c < upper[d])
            .collect();
        cuts.dedup();
        for c in cuts {
            let (mut nl, mut sl, mut nr, mut sr) = (0usize, 0.0, 0usize, 0.0);
            for e in history {
                if e.goal[d] < c {
                    nl += 1;
                    sl += e.competence;
                } else {
                    nr += 1;
                    sr += e.competence;
                }
            }
            if nl == 0 || nr == 0 {
                continue;
            }
            let gap = (sl / nl as f64 - sr / nr as f64).abs();
            if gap <= 1e-9 {
                continue;
            }
            let score = (nl * nr) as f64 * gap;
            if best.is_none_or(|(b, _, _)| score > b) {
                best = Some((score, d, c));
            }
        }
    }
    match best {
        Some((s, d, c)) if s > 0.0 => (d, c),
        _ => {
            let mut dim = 0;
            let mut widest = f64::NEG_INFINITY;
            for d in 0..lower.len() {
                let w = (upper[d] - lower[d]) / space_width[d];
                if w > widest {
                    widest = w;
                    dim = d;
                }
            }
            (dim, 0.5 * (lower[dim] + upper[dim]))
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RegionTree {
    pub space: SpaceId,
    pub nodes: Vec<Region>,
}

impl RegionTree {
    fn new(space: &OutcomeSpace) -> Self {
        RegionTree {
            space: space.id,
            nodes: vec![Region::new(space.lower().to_vec(), space.upper().to_vec())],
        }
    }

    pub fn leaf_of(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Some(s) = &self.nodes[i].split {
            i = if x[s.dim] < s.cut { s.left } else { s.right };
        }
        i
    }

    pub fn leaves(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.nodes.len()).filter(|&i| self.nodes[i].is_leaf())
    }

    fn split_leaf(&mut self, i: usize, space_width: &[f64]) {
        let (dim, cut) = {
            let r = &self.nodes[i];
            choose_split(&r.lower, &r.upper, space_width, &r.history)
        };
        let parent = &mut self.nodes[i];
        let history = std::mem::take(&mut parent.history);
        parent.interest.clear();
        let mut left = Region::new(parent.lower.clone(), parent.upper.clone());
        let mut right = left.clone();
        left.upper[dim] = cut;
        right.lower[dim] = cut;
        for e in history {
            if e.goal[dim] < cut {
                left.history.push(e);
            } else {
                right.history.push(e);
            }
        }
        let l = self.nodes.len();
        self.nodes[i].split = Some(Split { dim, cut, left: l, right: l + 1 });
        self.nodes.push(left);
        self.nodes.push(right);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SelectionMode {
    Exploit,
    Pair,
    Random,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Selection {
    pub strategy: StrategyId,
    pub goal: Outcome,
    pub mode: SelectionMode,
}

/// One region tree per outcome space, histories keyed by strategy.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InterestMap {
    spaces: Vec<OutcomeSpace>,
    trees: Vec<RegionTree>,
    /// Active strategies, each optionally restricted to one target space.
    strategies: Vec<(StrategyId, Option<SpaceId>)>,
    params: InterestParams,
}

impl InterestMap {
    pub fn new(spaces: &[OutcomeSpace], strategies: Vec<(StrategyId, Option<SpaceId>)>, params: InterestParams) -> Self {
        InterestMap {
            spaces: spaces.to_vec(),
            trees: spaces.iter().map(RegionTree::new).collect(),
            strategies,
            params,
        }
    }

    pub fn params(&self) -> &InterestParams {
        &self.params
    }

    pub fn trees(&self) -> &[RegionTree] {
        &self.trees
    }

    pub fn tree(&self, space: SpaceId) -> Option<&RegionTree> {
        self.trees.iter().find(|t| t.space == space)
    }

    fn eligible(&self, space: SpaceId) -> impl Iterator<Item = &StrategyId> + '_ {
        self.strategies
            .iter()
            .filter(move |(_, target)| target.is_none_or(|t| t == space))
            .map(|(s, _)| s)
    }

    /// All (strategy, space index, leaf) pairs in a fixed order.
    fn pairs(&self) -> Vec<(&StrategyId, usize, usize)> {
        let mut out = Vec::new();
        for (ti, tree) in self.trees.iter().enumerate() {
            for leaf in tree.leaves() {
                for s in self.eligible(tree.space) {
                    out.push((s, ti, leaf));
                }
            }
        }
        out
    }

    fn sample_in(lower: &[f64], upper: &[f64], rng: &mut impl Rng) -> Vec<f64> {
        lower
            .iter()
            .zip(upper)
            .map(|(lo, hi)| if hi > lo { rng.random_range(*lo..*hi) } else { *lo })
            .collect()
    }

    /// Draws a strategy and a goal. Deterministic given the rng state.
    pub fn select(&self, rng: &mut impl Rng) -> Selection {
        let u: f64 = rng.random();
        let pairs = self.pairs();
        let (mode, strategy, ti, leaf) = if u < self.params.exploit_probability {
            let mut best = (f64::NEG_INFINITY, 0);
            for (k, (s, ti, leaf)) in pairs.iter().enumerate() {
                let v = self.trees[*ti].nodes[*leaf].interest(s, &self.params) / self.params.cost(s);
                if v > best.0 {
                    best = (v, k);
                }
            }
            let (s, ti, leaf) = pairs[best.1];
            (SelectionMode::Exploit, s, ti, Some(leaf))
        } else if u < self.params.exploit_probability + self.params.pair_probability {
            let (s, ti, leaf) = pairs[rng.random_range(0..pairs.len())];
            (SelectionMode::Pair, s, ti, Some(leaf))
        } else {
            let ti = loop {
                let ti = rng.random_range(0..self.trees.len());
                if self.eligible(self.trees[ti].space).next().is_some() {
                    break ti;
                }
            };
            let eligible: Vec<&StrategyId> = self.eligible(self.trees[ti].space).collect();
            (SelectionMode::Random, eligible[rng.random_range(0..eligible.len())], ti, None)
        };
        let tree = &self.trees[ti];
        let region = &tree.nodes[leaf.unwrap_or(0)];
        let goal = Self::sample_in(&region.lower, &region.upper, rng);
        Selection {
            strategy: strategy.clone(),
            goal: Outcome::new(tree.space, goal),
            mode,
        }
    }

    /// Appends the outcome of an episode to the leaf enclosing its goal and
    /// splits the leaf when it grows past the threshold.
    pub fn update(&mut self, goal: &Outcome, strategy: &StrategyId, competence: f64, episode: usize) -> Result<()> {
        let ti = self
            .trees
            .iter()
            .position(|t| t.space == goal.space)
            .ok_or(Error::UnknownSpace(goal.space))?;
        let space = &self.spaces[ti];
        space.check(goal)?;
        let width: Vec<f64> = space.lower().iter().zip(space.upper()).map(|(l, u)| u - l).collect();
        let tree = &mut self.trees[ti];
        let leaf = tree.leaf_of(&goal.value);
        tree.nodes[leaf].history.push(Entry {
            goal: goal.value.clone(),
            competence,
            episode,
            strategy: strategy.clone(),
        });
        if tree.nodes[leaf].history.len() > self.params.split_threshold {
            tree.split_leaf(leaf, &width);
            let Split { left, right, .. } = tree.nodes[leaf].split.clone().expect("just split");
            self.refresh(ti, left);
            self.refresh(ti, right);
        } else {
            self.refresh(ti, leaf);
        }
        Ok(())
    }

    fn refresh(&mut self, ti: usize, leaf: usize) {
        let strategies: Vec<StrategyId> = self.eligible(self.trees[ti].space).cloned().collect();
        let region = &mut self.trees[ti].nodes[leaf];
        region.interest = strategies
            .into_iter()
            .map(|s| {
                let v = history_interest(&region.history, &s, &self.params);
                (s, v)
            })
            .collect();
    }

    /// Structural check that each tree partitions its space box exactly,
    /// histories sit inside their leaves, and interests are nonnegative.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for (tree, space) in self.trees.iter().zip(&self.spaces) {
            let root = &tree.nodes[0];
            if root.lower != space.lower() || root.upper != space.upper() {
                return Err(format!("root of {} differs from the space box", tree.space));
            }
            for (i, r) in tree.nodes.iter().enumerate() {
                match &r.split {
                    Some(s) => {
                        let (l, rr) = (&tree.nodes[s.left], &tree.nodes[s.right]);
                        if !(s.cut > r.lower[s.dim] && s.cut < r.upper[s.dim]) {
                            return Err(format!("cut of region {i} outside its box"));
                        }
                        let mut lu = r.upper.clone();
                        lu[s.dim] = s.cut;
                        let mut rl = r.lower.clone();
                        rl[s.dim] = s.cut;
                        if l.lower != r.lower || l.upper != lu || rr.lower != rl || rr.upper != r.upper {
                            return Err(format!("children of region {i} do not tile it"));
                        }
                        if !r.history.is_empty() {
                            return Err(format!("internal region {i} holds history"));
                        }
                    }
                    None => {
                        for e in &r.history {
                            if !r.contains(&e.goal, space.upper()) {
                                return Err(format!("entry outside leaf {i} of {}", tree.space));
                            }
                        }
                        if r.interest.values().any(|v| !(*v >= 0.0)) {
                            return Err(format!("negative interest in leaf {i}"));
                        }
                    }
                }
            }
        }
        Ok(())
    }

    /// Indented text rendering of every region tree.
    pub fn export(&self) -> String {
        let mut out = String::new();
        for tree in &self.trees {
            let _ = writeln!(out, "{}", tree.space);
            self.export_node(tree, 0, 1, &mut out);
        }
        out
    }

    fn export_node(&self, tree: &RegionTree, i: usize, depth: usize, out: &mut String) {
        let r = &tree.nodes[i];
        let bounds: Vec<String> = r
            .lower
            .iter()
            .zip(&r.upper)
            .map(|(l, u)| format!("[{l:.4}, {u:.4}]"))
            .collect();
        let _ = write!(out, "{}{} n={}", "  ".repeat(depth), bounds.join(" x "), r.history.len());
        if r.is_leaf() {
            for (s, v) in &r.interest {
                let _ = write!(out, " {s}={v:.5}");
            }
        }
        out.push('\n');
        if let Some(s) = &r.split {
            self.export_node(tree, s.left, depth + 1, out);
            self.export_node(tree, s.right, depth + 1, out);
        }
    }
}
