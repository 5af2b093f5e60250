use std::collections::{BTreeMap, BTreeSet, VecDeque};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use crate::affordance::{execute_sequence, transitions, AffordanceSet, ClosedLoop, Transition};
use crate::domain::{
    space_of, CompoundAction, Controllable, EpisodeRecord, Node, Observation, Outcome, OutcomeSpace, SpaceId,
};
use crate::envs::{clip_observation, execute, Environment, World};
use crate::error::{Error, Result};
use crate::hierarchy::HierarchyGraph;
use crate::interest::{competence, InterestMap, SelectionMode};
use crate::memory::EpisodicMemory;
use crate::models::{update_models, ResolveParams, Resolver};
use crate::strategies::{self, StrategyCtx, StrategyId, Variant};
use crate::teachers::{build_teacher, Teacher};

/// Reset seed used for teacher construction and evaluation.
pub const EVAL_RESET_SEED: u64 = 0;

/// Per-episode reset seed, decorrelated from the run seed.
pub fn episode_seed(seed: u64, episode: usize) -> u64 {
    let mut z = seed ^ (episode as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// How many times each loop stage ran.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counters {
    pub select: usize,
    pub apply: usize,
    pub execute: usize,
    pub competence: usize,
    pub update: usize,
    pub interest: usize,
}

/// One line of the episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub selected: StrategyId,
    pub mode: SelectionMode,
    #[serde(flatten)]
    pub record: EpisodeRecord,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub clipped: Vec<SpaceId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub new_affordances: Vec<usize>,
}

/// Frozen learner state for evaluation and inspection.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub episode: usize,
    pub config: ExperimentConfig,
    pub memory: EpisodicMemory,
    pub hierarchy: HierarchyGraph,
    pub affordances: AffordanceSet,
    pub interest: InterestMap,
    pub strategy_counts: BTreeMap<StrategyId, usize>,
}

/// What executing a controllable sequence produced.
pub struct Executed {
    pub action: CompoundAction,
    pub trace: Vec<crate::domain::StateSnapshot>,
    pub observation: Observation,
    pub clipped: Vec<SpaceId>,
}

fn neutral(env: &mut World, partial: Option<ClosedLoop>) -> Result<Executed> {
    let mut run = partial.unwrap_or_default();
    if run.trace.is_empty() {
        run.trace.push(env.snapshot());
    }
    if run.primitives.is_empty() {
        let p = env.neutral_primitive();
        env.step(&p)?;
        run.primitives.push(p);
        run.trace.push(env.snapshot());
    }
    let (observation, clipped) = clip_observation(env.spaces(), env.observe());
    Ok(Executed { action: CompoundAction::new(run.primitives)?, trace: run.trace, observation, clipped })
}

/// Executes `lc` from the current state: through memory resolution for the
/// procedural variants, with closed-loop affordance control for CHIME. On
/// error the world is left as it is and the error returned with whatever
/// ran.
pub fn run_sequence(
    variant: Variant,
    env: &mut World,
    lc: &[Controllable],
    context: &[f64],
    memory: &EpisodicMemory,
    hierarchy: &HierarchyGraph,
    affordances: &AffordanceSet,
    resolve: &ResolveParams,
) -> std::result::Result<Executed, (Error, Option<ClosedLoop>)> {
    match variant {
        Variant::Chime => {
            let mut partial = ClosedLoop::default();
            match execute_sequence(env, affordances, memory, context, lc, &mut partial) {
                Ok(()) => neutral(env, Some(partial)).map_err(|e| (e, None)),
                Err(e) => Err((e, Some(partial))),
            }
        }
        Variant::ImPb | Variant::SgimPb => {
            let spaces = env.spaces().to_vec();
            let resolver = Resolver { spaces: &spaces, memory, hierarchy, params: resolve };
            let action = resolver.resolve_sequence(lc).map_err(|e| (e, None))?;
            let run = execute(env, &action).map_err(|e| (e, None))?;
            Ok(Executed { action, trace: run.trace, observation: run.observation, clipped: run.clipped })
        }
    }
}

pub struct Learner {
    cfg: ExperimentConfig,
    env: World,
    spaces: Vec<OutcomeSpace>,
    strategies: Vec<StrategyId>,
    teachers: Vec<Teacher>,
    memory: EpisodicMemory,
    hierarchy: HierarchyGraph,
    affordances: AffordanceSet,
    interest: InterestMap,
    rng: ChaCha8Rng,
    applied_through: Option<usize>,
    window: VecDeque<Transition>,
    counters: Counters,
    strategy_counts: BTreeMap<StrategyId, usize>,
}

impl Learner {
    pub fn new(cfg: ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let env = cfg.env.build();
        let spaces = env.spaces().to_vec();
        let mut teachers = Vec::new();
        for spec in &cfg.teachers {
            let (t, _) = build_teacher(&env, spec, EVAL_RESET_SEED)
                .map_err(|e| Error::Config(format!("teacher {}: {e}", spec.id)))?;
            teachers.push(t);
        }
        let strategies = cfg.variant.strategies(&teachers);
        let targeted: Vec<(StrategyId, Option<SpaceId>)> = strategies
            .iter()
            .map(|s| {
                let target = s.teacher().and_then(|id| teachers.iter().find(|t| t.id() == id)).map(|t| t.target());
                (s.clone(), target)
            })
            .collect();
        let ids: Vec<SpaceId> = spaces.iter().map(|s| s.id).collect();
        let hierarchy = HierarchyGraph::dense(&ids, cfg.learning.prune_threshold, cfg.learning.initial_weight);
        let interest = InterestMap::new(&spaces, targeted, cfg.interest.clone());
        Ok(Learner {
            env,
            strategies,
            teachers,
            memory: EpisodicMemory::new(),
            hierarchy,
            affordances: AffordanceSet::new(cfg.affordance.clone()),
            interest,
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            applied_through: None,
            window: VecDeque::new(),
            counters: Counters::default(),
            strategy_counts: BTreeMap::new(),
            spaces,
            cfg,
        })
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn episode(&self) -> usize {
        self.memory.len()
    }

    pub fn strategies(&self) -> &[StrategyId] {
        &self.strategies
    }

    pub fn teachers(&self) -> &[Teacher] {
        &self.teachers
    }

    pub fn memory(&self) -> &EpisodicMemory {
        &self.memory
    }

    pub fn hierarchy(&self) -> &HierarchyGraph {
        &self.hierarchy
    }

    pub fn affordances(&self) -> &AffordanceSet {
        &self.affordances
    }

    pub fn interest(&self) -> &InterestMap {
        &self.interest
    }

    pub fn counters(&self) -> &Counters {
        &self.counters
    }

    pub fn strategy_counts(&self) -> &BTreeMap<StrategyId, usize> {
        &self.strategy_counts
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            episode: self.episode(),
            config: self.cfg.clone(),
            memory: self.memory.clone(),
            hierarchy: self.hierarchy.clone(),
            affordances: self.affordances.clone(),
            interest: self.interest.clone(),
            strategy_counts: self.strategy_counts.clone(),
        }
    }

    /// Runs one episode. Module errors become failed episodes; only an
    /// invariant violation (when checking is enabled) is returned as an
    /// error.
    pub fn step(&mut self) -> Result<EpisodeLog, String> {
        let episode = self.episode();
        // select
        let sel = self.interest.select(&mut self.rng);
        self.counters.select += 1;

        let context = self.env.reset(episode_seed(self.cfg.seed, episode));

        // apply strategy
        let ctx = StrategyCtx {
            spaces: &self.spaces,
            memory: &self.memory,
            hierarchy: &self.hierarchy,
            teachers: &self.teachers,
            controllable: self.affordances.controllable(),
            primitive_dim: self.env.primitive_dim(),
            params: &self.cfg.strategies,
        };
        let mut strategy = sel.strategy.clone();
        let mut applied = strategies::apply(&strategy, &self.strategies, &sel.goal, &ctx, &mut self.rng);
        if applied == Err(Error::ProcedureUnavailable) {
            strategy = StrategyId::OutcomeExplore;
            applied = strategies::apply(&strategy, &self.strategies, &sel.goal, &ctx, &mut self.rng);
        }
        self.counters.apply += 1;

        // execute
        let mut error = None;
        let (lc, executed) = match applied {
            Ok(lc) => {
                let run = run_sequence(
                    self.cfg.variant,
                    &mut self.env,
                    &lc,
                    &context,
                    &self.memory,
                    &self.hierarchy,
                    &self.affordances,
                    &self.cfg.resolve,
                );
                match run {
                    Ok(x) => (lc, Ok(x)),
                    Err((e, partial)) => {
                        error = Some(e.to_string());
                        (lc, neutral(&mut self.env, partial))
                    }
                }
            }
            Err(e) => {
                error = Some(e.to_string());
                let p = self.env.neutral_primitive();
                (vec![Controllable::Primitive(p)], neutral(&mut self.env, None))
            }
        };
        self.counters.execute += 1;
        let executed = match executed {
            Ok(x) => x,
            Err(e) => {
                // the neutral primitive itself failed: record an empty trace
                error = Some(e.to_string());
                let p = self.env.neutral_primitive();
                let (observation, clipped) = clip_observation(&self.spaces, self.env.observe());
                Executed { action: CompoundAction::single(p), trace: Vec::new(), observation, clipped }
            }
        };
        let failed = error.is_some();

        // competence
        let space = space_of(&self.spaces, sel.goal.space).expect("selected goals live in known spaces");
        let reached = executed.observation.get(&sel.goal.space).cloned().flatten().map(|v| Outcome::new(sel.goal.space, v));
        let comp = if failed {
            -1.0
        } else {
            competence(&sel.goal, reached.as_ref(), space).unwrap_or(-1.0)
        };
        self.counters.competence += 1;

        // update memory, hierarchy and affordances
        let mut observation = executed.observation;
        observation.entry(sel.goal.space).or_insert(None);
        let record = EpisodeRecord {
            episode,
            context,
            strategy: strategy.clone(),
            goal: sel.goal.clone(),
            controllables: lc,
            action: executed.action,
            reached: observation,
            trace: executed.trace,
            competence: comp,
            failed,
        };
        self.memory.record(record.clone()).map_err(|e| format!("episode {episode}: {e}"))?;
        update_models(&mut self.hierarchy, &record, self.cfg.learning.hierarchy_rate, &mut self.applied_through);
        let before: BTreeSet<SpaceId> = self.affordances.controllable().clone();
        let mut new_affordances = Vec::new();
        if self.cfg.variant == Variant::Chime {
            let fresh = transitions(&record);
            self.window.extend(fresh.iter().cloned());
            while self.window.len() > self.cfg.affordance.window {
                self.window.pop_front();
            }
            let window = self.window.make_contiguous();
            self.affordances.refine(window, &fresh);
            if let Some(id) = self.affordances.detect(window, &self.spaces, episode, &mut self.rng) {
                new_affordances.push(id);
            }
        }
        self.counters.update += 1;

        // update interest
        self.interest
            .update(&sel.goal, &strategy, comp, episode)
            .map_err(|e| format!("episode {episode}: {e}"))?;
        self.counters.interest += 1;
        *self.strategy_counts.entry(strategy).or_default() += 1;

        if self.cfg.learning.check_invariants {
            self.check(&record, &before).map_err(|e| format!("episode {episode}: {e}"))?;
        }
        Ok(EpisodeLog {
            selected: sel.strategy,
            mode: sel.mode,
            record,
            error,
            clipped: executed.clipped,
            new_affordances,
        })
    }

    fn check(&self, record: &EpisodeRecord, controllable_before: &BTreeSet<SpaceId>) -> std::result::Result<(), String> {
        self.interest.check_invariants()?;
        self.hierarchy.check_invariants()?;
        if !controllable_before.is_subset(self.affordances.controllable()) {
            return Err("controllable set shrank".into());
        }
        let space = space_of(&self.spaces, record.goal.space).map_err(|e| e.to_string())?;
        if !space.contains(&record.goal.value) {
            return Err(format!("goal outside {}", space.id));
        }
        for (id, v) in &record.reached {
            if let Some(v) = v {
                let s = space_of(&self.spaces, *id).map_err(|e| e.to_string())?;
                if !s.contains(v) {
                    return Err(format!("reached value outside {id}"));
                }
            }
        }
        if record.action.primitives().iter().any(|p| p.params().iter().any(|x| x.abs() > 1.0)) {
            return Err("primitive outside bounds".into());
        }
        let counts: usize = self.strategy_counts.values().sum();
        let c = &self.counters;
        if [c.select, c.apply, c.execute, c.competence, c.update, c.interest, counts].iter().any(|&n| n != self.episode()) {
            return Err("loop counters disagree with the episode count".into());
        }
        if self.affordances.affordances().iter().any(|a| a.input == Node::Space(a.output)) {
            return Err("affordance loops on its own space".into());
        }
        Ok(())
    }
}
