//! Weighted task hierarchy.
//!
//! Every edge links a goal node to one ordered decomposition candidate. The
//! edge weight in `[0, 1]` is the empirical usefulness of the decomposition.
//! An edge is *active* when its weight reaches the pruning threshold and it
//! does not close a cycle with heavier active edges; the active subgraph is
//! therefore always acyclic.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::domain::{Node, SpaceId};
use crate::error::{Error, Result};

pub const DEFAULT_PRUNE_THRESHOLD: f64 = 0.05;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: Node,
    pub decomposition: Vec<Node>,
    pub weight: f64,
    pub updates: u64,
    #[serde(default)]
    pub active: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HierarchyGraph {
    nodes: BTreeSet<Node>,
    edges: Vec<Edge>,
    prune_threshold: f64,
}

impl HierarchyGraph {
    pub fn new(nodes: impl IntoIterator<Item = Node>, prune_threshold: f64) -> Self {
        let mut nodes: BTreeSet<Node> = nodes.into_iter().collect();
        nodes.insert(Node::Action);
        HierarchyGraph {
            nodes,
            edges: Vec::new(),
            prune_threshold,
        }
    }

    /// Densely connected initial hierarchy over a static task set: every
    /// space may be reached directly (`[A]`) or through any ordered pair of
    /// other spaces.
    pub fn dense(spaces: &[SpaceId], prune_threshold: f64, initial_weight: f64) -> Self {
        let mut h = HierarchyGraph::new(spaces.iter().map(|&s| Node::Space(s)), prune_threshold);
        for &goal in spaces {
            h.edges.push(Edge {
                from: Node::Space(goal),
                decomposition: vec![Node::Action],
                weight: initial_weight,
                updates: 0,
                active: false,
            });
            for &a in spaces.iter().filter(|&&s| s != goal) {
                for &b in spaces.iter().filter(|&&s| s != goal) {
                    h.edges.push(Edge {
                        from: Node::Space(goal),
                        decomposition: vec![Node::Space(a), Node::Space(b)],
                        weight: initial_weight,
                        updates: 0,
                        active: false,
                    });
                }
            }
        }
        h.refresh_active();
        h
    }

    pub fn prune_threshold(&self) -> f64 {
        self.prune_threshold
    }

    pub fn nodes(&self) -> impl Iterator<Item = Node> + '_ {
        self.nodes.iter().copied()
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn add_node(&mut self, node: Node) {
        self.nodes.insert(node);
    }

    /// Adds (or overwrites the weight of) an edge.
    pub fn add_edge(&mut self, from: Node, decomposition: Vec<Node>, weight: f64) -> Result<()> {
        for n in std::iter::once(&from).chain(&decomposition) {
            if !self.nodes.contains(n) {
                return Err(Error::UnknownNode(*n));
            }
        }
        let weight = weight.clamp(0.0, 1.0);
        match self.find(from, &decomposition) {
            Some(i) => self.edges[i].weight = weight,
            None => self.edges.push(Edge {
                from,
                decomposition,
                weight,
                updates: 0,
                active: false,
            }),
        }
        self.refresh_active();
        Ok(())
    }

    fn find(&self, from: Node, decomposition: &[Node]) -> Option<usize> {
        self.edges
            .iter()
            .position(|e| e.from == from && e.decomposition == decomposition)
    }

    pub fn edge(&self, from: Node, decomposition: &[Node]) -> Option<&Edge> {
        self.find(from, decomposition).map(|i| &self.edges[i])
    }

    pub fn is_pruned(&self, e: &Edge) -> bool {
        e.weight < self.prune_threshold
    }

    /// Moves the weight of an existing edge toward `target` with an
    /// exponential moving average. Unknown edges are ignored and reported
    /// with `false`.
    pub fn update_weight(&mut self, from: Node, decomposition: &[Node], target: f64, rate: f64) -> bool {
        let Some(i) = self.find(from, decomposition) else {
            return false;
        };
        let e = &mut self.edges[i];
        let target = target.clamp(0.0, 1.0);
        e.weight = (e.weight + rate * (target - e.weight)).clamp(0.0, 1.0);
        e.updates += 1;
        self.refresh_active();
        true
    }

    /// Outgoing candidates of a node, active or not.
    pub fn candidates(&self, from: Node) -> impl Iterator<Item = &Edge> + '_ {
        self.edges.iter().filter(move |e| e.from == from)
    }

    /// The heaviest active decomposition of `node`; ties go to the
    /// lexicographically smaller node sequence.
    pub fn best_decomposition(&self, node: Node) -> Result<Option<&[Node]>> {
        if !self.nodes.contains(&node) {
            return Err(Error::UnknownNode(node));
        }
        let best = self
            .candidates(node)
            .filter(|e| e.active)
            .min_by(|a, b| {
                b.weight
                    .total_cmp(&a.weight)
                    .then_with(|| a.decomposition.cmp(&b.decomposition))
            });
        Ok(best.map(|e| e.decomposition.as_slice()))
    }

    pub fn best_decomposition_of(&self, space: SpaceId) -> Result<Option<&[Node]>> {
        self.best_decomposition(Node::Space(space))
    }

    pub fn is_active(&self, from: Node, decomposition: &[Node]) -> bool {
        self.edge(from, decomposition).is_some_and(|e| e.active)
    }

    /// Greedy maximum-weight acyclic selection: edges above the threshold are
    /// admitted heaviest first unless they would close a cycle.
    fn refresh_active(&mut self) {
        let mut order: Vec<usize> = (0..self.edges.len())
            .filter(|&i| self.edges[i].weight >= self.prune_threshold)
            .collect();
        order.sort_by(|&a, &b| {
            let (ea, eb) = (&self.edges[a], &self.edges[b]);
            eb.weight
                .total_cmp(&ea.weight)
                .then_with(|| ea.from.cmp(&eb.from))
                .then_with(|| ea.decomposition.cmp(&eb.decomposition))
        });
        for e in &mut self.edges {
            e.active = false;
        }
        let mut adjacency: BTreeMap<Node, BTreeSet<Node>> = BTreeMap::new();
        for i in order {
            let from = self.edges[i].from;
            let targets: BTreeSet<Node> = self.edges[i].decomposition.iter().copied().collect();
            if targets.iter().any(|&t| t == from || reaches(&adjacency, t, from)) {
                continue;
            }
            adjacency.entry(from).or_default().extend(targets);
            self.edges[i].active = true;
        }
    }

    /// Directed node-to-node adjacency of the active subgraph.
    pub fn active_adjacency(&self) -> BTreeMap<Node, BTreeSet<Node>> {
        let mut adjacency: BTreeMap<Node, BTreeSet<Node>> = BTreeMap::new();
        for e in self.edges.iter().filter(|e| e.active) {
            adjacency
                .entry(e.from)
                .or_default()
                .extend(e.decomposition.iter().copied());
        }
        adjacency
    }

    /// Checks the structural invariants: weights in `[0, 1]`, active edges
    /// above the threshold, and an acyclic active subgraph.
    pub fn check_invariants(&self) -> std::result::Result<(), String> {
        for e in &self.edges {
            if !(0.0..=1.0).contains(&e.weight) {
                return Err(format!("edge {} weight {} out of [0,1]", e.from, e.weight));
            }
            if e.active && e.weight < self.prune_threshold {
                return Err(format!("pruned edge from {} marked active", e.from));
            }
        }
        let adjacency = self.active_adjacency();
        for &n in adjacency.keys() {
            for &t in &adjacency[&n] {
                if t == n || reaches(&adjacency, t, n) {
                    return Err(format!("active cycle through {n}"));
                }
            }
        }
        Ok(())
    }

    /// Graphviz rendering. Active edges are solid, inactive but unpruned
    /// ones dashed; pruned edges are omitted.
    pub fn to_dot(&self, name: &str) -> String {
        let mut out = format!("digraph {name} {{\n");
        for n in &self.nodes {
            let _ = writeln!(out, "  \"{n}\";");
        }
        for e in &self.edges {
            if self.is_pruned(e) {
                continue;
            }
            let label = e
                .decomposition
                .iter()
                .map(Node::to_string)
                .collect::<Vec<_>>()
                .join(",");
            let style = if e.active { "solid" } else { "dashed" };
            let targets: BTreeSet<Node> = e.decomposition.iter().copied().collect();
            for t in targets {
                let _ = writeln!(
                    out,
                    "  \"{}\" -> \"{}\" [label=\"[{}] {:.3}\", style={}];",
                    e.from, t, label, e.weight, style
                );
            }
        }
        out.push_str("}\n");
        out
    }
}

fn reaches(adjacency: &BTreeMap<Node, BTreeSet<Node>>, start: Node, goal: Node) -> bool {
    let mut stack = vec![start];
    let mut seen = BTreeSet::new();
    while let Some(n) = stack.pop() {
        if n == goal {
            return true;
        }
        if !seen.insert(n) {
            continue;
        }
        if let Some(next) = adjacency.get(&n) {
            stack.extend(next.iter().copied());
        }
    }
    false
}
