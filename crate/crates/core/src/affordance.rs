//! Linear affordance models between controllable inputs and outcome spaces,
//! with on-line detection, context refinement and greedy planning.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::domain::{euclidean, space_of, CompoundAction, Controllable, EpisodeRecord, Node, Outcome, OutcomeSpace, Primitive, SpaceId, StateSnapshot};
use crate::envs::Environment;
use crate::error::{Error, Result};
use crate::memory::EpisodicMemory;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AffordanceParams {
    pub window: usize,
    pub min_samples: usize,
    pub r2_threshold: f64,
    pub candidates_per_episode: usize,
    pub contradiction_factor: f64,
    pub min_improvement: f64,
    /// Fraction of the space diameter under which a goal counts as reached.
    pub tolerance: f64,
    pub max_plan_steps: usize,
    pub reach_quantile: f64,
    /// Primitive budget of one closed-loop episode.
    pub max_primitives: usize,
}

impl Default for AffordanceParams {
    fn default() -> Self {
        AffordanceParams {
            window: 200,
            min_samples: 20,
            r2_threshold: 0.7,
            candidates_per_episode: 3,
            contradiction_factor: 3.0,
            min_improvement: 0.1,
            tolerance: 0.05,
            max_plan_steps: 20,
            reach_quantile: 0.95,
            max_primitives: 30,
        }
    }
}

/// One primitive step: the change of every observable node and the episode
/// context. The change of `A` is the primitive itself.
#[derive(Clone, Debug, PartialEq)]
pub struct Transition {
    pub context: Vec<f64>,
    pub deltas: Vec<(Node, Vec<f64>)>,
}

impl Transition {
    pub fn delta(&self, n: Node) -> Option<&[f64]> {
        self.deltas.iter().find(|(m, _)| *m == n).map(|(_, d)| d.as_slice())
    }
}

fn is_nonzero(v: &[f64]) -> bool {
    v.iter().any(|x| x.abs() > 1e-9)
}

pub fn transitions(record: &EpisodeRecord) -> Vec<Transition> {
    step_transitions(&record.context, &record.action, &record.trace)
}

/// Per-primitive transitions of an action given the snapshots before the
/// first primitive and after each one. Empty when the lengths disagree.
pub fn step_transitions(context: &[f64], action: &CompoundAction, trace: &[StateSnapshot]) -> Vec<Transition> {
    if trace.len() != action.len() + 1 {
        return Vec::new();
    }
    action
        .primitives()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            let (before, after) = (&trace[i], &trace[i + 1]);
            let mut deltas = vec![(Node::Action, p.params().to_vec())];
            for (s, (b, a)) in before.iter().zip(after).enumerate() {
                if let (Some(b), Some(a)) = (b, a) {
                    if a.len() == b.len() {
                        deltas.push((Node::Space(SpaceId(s as u16)), a.iter().zip(b).map(|(x, y)| x - y).collect()));
                    }
                }
            }
            Transition { context: context.to_vec(), deltas }
        })
        .collect()
}

/// Ordinary least squares with an intercept column.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearFit {
    /// Rows: features then intercept. Columns: outputs.
    pub coef: DMatrix<f64>,
    /// Pooled multi-output coefficient of determination.
    pub r2: f64,
}

fn design(xs: &[Vec<f64>]) -> DMatrix<f64> {
    let p = xs.first().map_or(0, |x| x.len()) + 1;
    DMatrix::from_fn(xs.len(), p, |i, j| if j + 1 == p { 1.0 } else { xs[i][j] })
}

pub fn fit_linear(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Option<LinearFit> {
    let n = xs.len();
    if n == 0 || n != ys.len() {
        return None;
    }
    let m = ys[0].len();
    let x = design(xs);
    let y = DMatrix::from_fn(n, m, |i, j| ys[i][j]);
    let coef = x.clone().svd(true, true).solve(&y, 1e-12).ok()?;
    let resid = &y - &x * &coef;
    let sse: f64 = resid.iter().map(|r| r * r).sum();
    let mut sst = 0.0;
    for j in 0..m {
        let col = y.column(j);
        let mean = col.mean();
        sst += col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>();
    }
    let r2 = if sst > 1e-12 { 1.0 - sse / sst } else { 0.0 };
    Some(LinearFit { coef, r2 })
}

/// Mean leave-one-out residual norm of an intercept model, from the hat
/// matrix diagonal.
pub fn loo_error(xs: &[Vec<f64>], ys: &[Vec<f64>]) -> Option<f64> {
    let fit = fit_linear(xs, ys)?;
    let x = design(xs);
    let m = ys[0].len();
    let gram = (x.transpose() * &x).pseudo_inverse(1e-10).ok()?;
    let mut total = 0.0;
    for i in 0..xs.len() {
        let xi = x.row(i).transpose();
        let h = (xi.transpose() * &gram * &xi)[(0, 0)];
        let pred = xi.transpose() * &fit.coef;
        let r: f64 = (0..m).map(|j| (ys[i][j] - pred[(0, j)]).powi(2)).sum::<f64>().sqrt();
        total += r / (1.0 - h).max(1e-6);
    }
    Some(total / xs.len() as f64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Affordance {
    pub id: usize,
    pub input: Node,
    pub output: SpaceId,
    /// Indices into the episode context appended to the input change.
    pub context_dims: Vec<usize>,
    pub created: usize,
    pub samples: usize,
    pub r2: f64,
    /// Row-major `(input + context + 1) x output` coefficients.
    coef: Vec<Vec<f64>>,
    errors: Vec<f64>,
}

impl Affordance {
    fn features(&self, din: &[f64], context: &[f64]) -> Vec<f64> {
        let mut f = din.to_vec();
        f.extend(self.context_dims.iter().map(|&d| context.get(d).copied().unwrap_or(0.0)));
        f
    }

    fn input_dim(&self) -> usize {
        self.coef.len() - 1 - self.context_dims.len()
    }

    pub fn predict(&self, din: &[f64], context: &[f64]) -> Vec<f64> {
        let mut f = self.features(din, context);
        f.push(1.0);
        let m = self.coef[0].len();
        (0..m).map(|j| f.iter().zip(&self.coef).map(|(x, row)| x * row[j]).sum()).collect()
    }

    /// Least-norm input change producing `dout` under `context`.
    pub fn inverse(&self, dout: &[f64], context: &[f64]) -> Vec<f64> {
        let k = self.input_dim();
        let m = dout.len();
        let base = self.predict(&vec![0.0; k], context);
        let w = DMatrix::from_fn(m, k, |j, i| self.coef[i][j]);
        let r = DVector::from_iterator(m, dout.iter().zip(&base).map(|(d, b)| d - b));
        match w.pseudo_inverse(1e-9) {
            Ok(p) => (p * r).iter().copied().collect(),
            Err(_) => vec![0.0; k],
        }
    }

    pub fn current_error(&self) -> f64 {
        median(&self.errors).unwrap_or(0.0)
    }
}

fn median(v: &[f64]) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    Some(s[s.len() / 2])
}

/// Training pairs for `input -> output` among the transitions, keeping only
/// those where the output moved.
fn samples(window: &[Transition], input: Node, output: SpaceId, dims: &[usize]) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for t in window {
        let (Some(din), Some(dout)) = (t.delta(input), t.delta(Node::Space(output))) else {
            continue;
        };
        if !is_nonzero(dout) {
            continue;
        }
        let mut x = din.to_vec();
        x.extend(dims.iter().map(|&d| t.context.get(d).copied().unwrap_or(0.0)));
        xs.push(x);
        ys.push(dout.to_vec());
    }
    (xs, ys)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct AffordanceSet {
    pub params: AffordanceParams,
    affordances: Vec<Affordance>,
    controllable: BTreeSet<SpaceId>,
    /// Number of candidate pairs fitted so far.
    pub tests: usize,
    /// Number of fits that passed the threshold.
    pub fires: usize,
}

impl AffordanceSet {
    pub fn new(params: AffordanceParams) -> Self {
        AffordanceSet { params, ..Default::default() }
    }

    pub fn affordances(&self) -> &[Affordance] {
        &self.affordances
    }

    /// Spaces the agent can drive through an affordance.
    pub fn controllable(&self) -> &BTreeSet<SpaceId> {
        &self.controllable
    }

    pub fn for_output(&self, space: SpaceId) -> Option<&Affordance> {
        self.affordances.iter().find(|a| a.output == space)
    }

    fn fit_pair(&mut self, window: &[Transition], input: Node, output: SpaceId) -> Option<(LinearFit, usize)> {
        let (xs, ys) = samples(window, input, output, &[]);
        if xs.len() < self.params.min_samples || xs.len() <= xs[0].len() + 1 {
            return None;
        }
        self.tests += 1;
        let fit = fit_linear(&xs, &ys)?;
        Some((fit, xs.len()))
    }

    fn register(&mut self, input: Node, output: SpaceId, fit: LinearFit, samples: usize, created: usize) -> usize {
        let id = self.affordances.len();
        self.affordances.push(Affordance {
            id,
            input,
            output,
            context_dims: Vec::new(),
            created,
            samples,
            r2: fit.r2,
            coef: to_rows(&fit.coef),
            errors: Vec::new(),
        });
        self.controllable.insert(output);
        id
    }

    /// Fits and registers `input -> output` on the window without the
    /// detection threshold. Used to script scenarios. `None` when the window
    /// holds too few samples or the output is already covered.
    pub fn create(&mut self, window: &[Transition], input: Node, output: SpaceId, episode: usize) -> Option<usize> {
        if self.controllable.contains(&output) {
            return None;
        }
        let (xs, ys) = samples(window, input, output, &[]);
        if xs.len() < self.params.min_samples {
            return None;
        }
        let fit = fit_linear(&xs, &ys)?;
        Some(self.register(input, output, fit, xs.len(), episode))
    }

    /// Tests a few random uncovered (input, output) pairs on the last
    /// `window` transitions. On a pass, every known input is compared for
    /// that output and the best fit is registered. Returns the new id.
    pub fn detect(&mut self, window: &[Transition], spaces: &[OutcomeSpace], episode: usize, rng: &mut impl Rng) -> Option<usize> {
        let start = window.len().saturating_sub(self.params.window);
        let window = &window[start..];
        let inputs: Vec<Node> = std::iter::once(Node::Action)
            .chain(self.controllable.iter().map(|&s| Node::Space(s)))
            .collect();
        let mut pairs: Vec<(Node, SpaceId)> = spaces
            .iter()
            .filter(|s| !self.controllable.contains(&s.id))
            .flat_map(|s| inputs.iter().map(move |&i| (i, s.id)))
            .collect();
        pairs.shuffle(rng);
        pairs.truncate(self.params.candidates_per_episode);
        for (input, output) in pairs {
            let Some((fit, _)) = self.fit_pair(window, input, output) else {
                continue;
            };
            if fit.r2 < self.params.r2_threshold {
                continue;
            }
            self.fires += 1;
            let mut best: Option<(Node, LinearFit, usize)> = None;
            for &i in &inputs {
                let (xs, ys) = samples(window, i, output, &[]);
                if xs.len() < self.params.min_samples {
                    continue;
                }
                if let Some(f) = fit_linear(&xs, &ys) {
                    if best.as_ref().is_none_or(|(_, b, _)| f.r2 > b.r2) {
                        best = Some((i, f, xs.len()));
                    }
                }
            }
            let (input, fit, n) = best.unwrap_or((input, fit, 0));
            return Some(self.register(input, output, fit, n, episode));
        }
        None
    }

    /// Tracks prediction errors on `new` transitions. When one exceeds the
    /// contradiction factor times the running median, tries each unused
    /// context dimension and keeps the one that lowers the leave-one-out
    /// error on the window by the required margin. Returns the refined
    /// (affordance, context dimension) pairs.
    pub fn refine(&mut self, window: &[Transition], new: &[Transition]) -> Vec<(usize, usize)> {
        let start = window.len().saturating_sub(self.params.window);
        let window = &window[start..];
        let p = self.params.clone();
        let mut refined = Vec::new();
        for aff in &mut self.affordances {
            let mut contradicted = false;
            for t in new {
                let (Some(din), Some(dout)) = (t.delta(aff.input), t.delta(Node::Space(aff.output))) else {
                    continue;
                };
                if !is_nonzero(dout) {
                    continue;
                }
                let err = euclidean(&aff.predict(din, &t.context), dout);
                if aff.errors.len() >= p.min_samples / 2 {
                    let med = median(&aff.errors).unwrap_or(0.0);
                    if err > p.contradiction_factor * med.max(1e-9) {
                        contradicted = true;
                    }
                }
                aff.errors.push(err);
                if aff.errors.len() > p.window {
                    aff.errors.remove(0);
                }
            }
            if !contradicted {
                continue;
            }
            let (xs, ys) = samples(window, aff.input, aff.output, &aff.context_dims);
            if xs.len() < p.min_samples {
                continue;
            }
            let Some(baseline) = loo_error(&xs, &ys) else { continue };
            let ctx_len = window.iter().map(|t| t.context.len()).max().unwrap_or(0);
            let mut best: Option<(usize, f64)> = None;
            for d in (0..ctx_len).filter(|d| !aff.context_dims.contains(d)) {
                let mut dims = aff.context_dims.clone();
                dims.push(d);
                let (xs, ys) = samples(window, aff.input, aff.output, &dims);
                if let Some(e) = loo_error(&xs, &ys) {
                    if best.is_none_or(|(_, b)| e < b) {
                        best = Some((d, e));
                    }
                }
            }
            let Some((d, e)) = best else { continue };
            if e > (1.0 - p.min_improvement) * baseline {
                continue;
            }
            aff.context_dims.push(d);
            let (xs, ys) = samples(window, aff.input, aff.output, &aff.context_dims);
            if let Some(fit) = fit_linear(&xs, &ys) {
                aff.coef = to_rows(&fit.coef);
                aff.r2 = fit.r2;
                aff.samples = xs.len();
            }
            aff.errors.clear();
            refined.push((aff.id, d));
        }
        refined
    }

    fn step_toward(
        &self,
        aff: &Affordance,
        from: &[f64],
        to: &[f64],
        input_state: Option<&[f64]>,
        context: &[f64],
        spaces: &[OutcomeSpace],
    ) -> Result<Controllable> {
        let dout: Vec<f64> = to.iter().zip(from).map(|(t, f)| t - f).collect();
        let din = aff.inverse(&dout, context);
        match aff.input {
            Node::Action => Ok(Controllable::Primitive(Primitive::clipped(din))),
            Node::Space(s) => {
                let space = space_of(spaces, s)?;
                let base = input_state.ok_or(Error::NoData)?;
                let target: Vec<f64> = base.iter().zip(&din).map(|(b, d)| b + d).collect();
                Ok(Controllable::Goal(Outcome::new(s, space.clip(&target).0)))
            }
        }
    }

    /// Greedy open-loop chain towards `goal` from `state`: subgoals at most
    /// `reach` apart along the straight line, each mapped through the
    /// affordance inverse. Subgoals are assumed to be reached exactly.
    pub fn plan(
        &self,
        goal: &Outcome,
        state: &StateSnapshot,
        context: &[f64],
        reach: f64,
        spaces: &[OutcomeSpace],
    ) -> Result<Vec<Controllable>> {
        let aff = self.for_output(goal.space).ok_or(Error::NoAffordance(goal.space))?;
        let space = space_of(spaces, goal.space)?;
        let tol = self.params.tolerance * space.diameter();
        let mut cur = state.get(goal.space.index()).cloned().flatten().ok_or(Error::NoData)?;
        let mut input_state = match aff.input {
            Node::Space(s) => Some(state.get(s.index()).cloned().flatten().ok_or(Error::NoData)?),
            Node::Action => None,
        };
        let reach = if reach > 0.0 { reach } else { space.diameter() };
        let mut plan = Vec::new();
        loop {
            let d = euclidean(&cur, &goal.value);
            if d <= tol {
                return Ok(plan);
            }
            if plan.len() >= self.params.max_plan_steps {
                return Err(Error::PlanFailed { steps: plan.len() });
            }
            let f = reach.min(d) / d;
            let sub: Vec<f64> = cur.iter().zip(&goal.value).map(|(c, g)| c + f * (g - c)).collect();
            let c = self.step_toward(aff, &cur, &sub, input_state.as_deref(), context, spaces)?;
            if let Controllable::Goal(o) = &c {
                input_state = Some(o.value.clone());
            }
            plan.push(c);
            cur = sub;
        }
    }

    pub fn export(&self, context_labels: &[String]) -> String {
        let mut out = String::new();
        for a in &self.affordances {
            let ctx: Vec<String> = a
                .context_dims
                .iter()
                .map(|&d| context_labels.get(d).cloned().unwrap_or_else(|| d.to_string()))
                .collect();
            let _ = writeln!(
                out,
                "{}\t{} -> {}\tcontext=[{}]\tcreated={}\tsamples={}\tr2={:.3}\terror={:.4}",
                a.id,
                a.input,
                a.output,
                ctx.join(","),
                a.created,
                a.samples,
                a.r2,
                a.current_error()
            );
        }
        out
    }

    pub fn to_dot(&self) -> String {
        let mut out = String::from("digraph affordances {\n");
        for a in &self.affordances {
            let _ = writeln!(out, "  \"{}\" -> \"{}\" [label=\"{}\"];", a.input, a.output, a.id);
        }
        out.push_str("}\n");
        out
    }
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// What a closed-loop run executed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClosedLoop {
    pub primitives: Vec<Primitive>,
    /// State before the first primitive and after each one.
    pub trace: Vec<StateSnapshot>,
}

struct Driver<'a, E> {
    env: &'a mut E,
    set: &'a AffordanceSet,
    memory: &'a EpisodicMemory,
    spaces: &'a [OutcomeSpace],
    context: &'a [f64],
    budget: usize,
    run: ClosedLoop,
}

impl<E: Environment> Driver<'_, E> {
    fn exec(&mut self, c: &Controllable, depth: usize) -> Result<()> {
        match c {
            Controllable::Primitive(p) => {
                if self.budget == 0 {
                    return Ok(());
                }
                self.env.step(p)?;
                self.budget -= 1;
                self.run.primitives.push(p.clone());
                self.run.trace.push(self.env.snapshot());
                Ok(())
            }
            Controllable::Goal(g) => self.drive(g, depth),
        }
    }

    fn drive(&mut self, goal: &Outcome, depth: usize) -> Result<()> {
        if depth > self.spaces.len() + 1 {
            return Err(Error::DepthExceeded);
        }
        let aff = self.set.for_output(goal.space).ok_or(Error::NoAffordance(goal.space))?;
        let space = space_of(self.spaces, goal.space)?;
        let tol = self.set.params.tolerance * space.diameter();
        let reach = self
            .memory
            .reach(goal.space, self.set.params.reach_quantile)
            .unwrap_or_else(|| space.diameter());
        for _ in 0..self.set.params.max_plan_steps {
            let snap = self.env.snapshot();
            let Some(cur) = snap.get(goal.space.index()).cloned().flatten() else {
                return Ok(());
            };
            let d = euclidean(&cur, &goal.value);
            if d <= tol || self.budget == 0 {
                return Ok(());
            }
            let f = reach.min(d) / d;
            let sub: Vec<f64> = cur.iter().zip(&goal.value).map(|(c, g)| c + f * (g - c)).collect();
            let input_state = match aff.input {
                Node::Space(s) => snap.get(s.index()).cloned().flatten(),
                Node::Action => None,
            };
            let c = self.set.step_toward(aff, &cur, &sub, input_state.as_deref(), self.context, self.spaces)?;
            let before = self.run.primitives.len();
            self.exec(&c, depth + 1)?;
            if self.run.primitives.len() == before {
                return Ok(());
            }
        }
        Ok(())
    }
}

/// Executes `sequence` with receding-horizon replanning: each goal element
/// is re-planned from the observed state after every primitive. Fails on an
/// element no affordance can drive, leaving the partial run in `partial`.
pub fn execute_sequence<E: Environment>(
    env: &mut E,
    set: &AffordanceSet,
    memory: &EpisodicMemory,
    context: &[f64],
    sequence: &[Controllable],
    partial: &mut ClosedLoop,
) -> Result<()> {
    let spaces = env.spaces().to_vec();
    let start = env.snapshot();
    let mut d = Driver {
        env,
        set,
        memory,
        spaces: &spaces,
        context,
        budget: set.params.max_primitives,
        run: ClosedLoop { primitives: Vec::new(), trace: vec![start] },
    };
    let mut result = Ok(());
    for c in sequence {
        if let Err(e) = d.exec(c, 0) {
            result = Err(e);
            break;
        }
    }
    *partial = d.run;
    result
}
