use serde::{Deserialize, Serialize};

use crate::affordance::AffordanceParams;
use crate::envs::arm::{DRAWING, PEN};
use crate::envs::EnvConfig;
use crate::error::{Error, Result};
use crate::interest::InterestParams;
use crate::models::ResolveParams;
use crate::strategies::{StrategyParams, Variant};
use crate::teachers::{TeacherKind, TeacherSpec};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LearningParams {
    /// Step size of the hierarchy edge weight update.
    pub hierarchy_rate: f64,
    pub initial_weight: f64,
    pub prune_threshold: f64,
    /// Check every structural invariant after each episode and abort on the
    /// first violation.
    pub check_invariants: bool,
}

impl Default for LearningParams {
    fn default() -> Self {
        LearningParams {
            hierarchy_rate: 0.1,
            initial_weight: 0.5,
            prune_threshold: crate::hierarchy::DEFAULT_PRUNE_THRESHOLD,
            check_invariants: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    pub variant: Variant,
    pub seed: u64,
    pub episodes: usize,
    #[serde(default = "default_period")]
    pub snapshot_period: usize,
    pub env: EnvConfig,
    #[serde(default)]
    pub interest: InterestParams,
    #[serde(default)]
    pub strategies: StrategyParams,
    #[serde(default)]
    pub resolve: ResolveParams,
    #[serde(default)]
    pub affordance: AffordanceParams,
    #[serde(default)]
    pub learning: LearningParams,
    #[serde(default)]
    pub teachers: Vec<TeacherSpec>,
}

fn default_period() -> usize {
    100
}

fn unit(name: &str, v: f64) -> Result<()> {
    if (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} outside [0, 1]")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} = {v} must be positive")))
    }
}

impl ExperimentConfig {
    /// Desk-scale defaults for a variant on an environment. SGIM-PB on the
    /// arm gets a pen action teacher and a drawing procedure teacher.
    pub fn preset(variant: Variant, env: &str, seed: u64) -> Result<Self> {
        let env_cfg = EnvConfig::from_id(env).ok_or_else(|| Error::Config(format!("unknown environment {env}")))?;
        let episodes = match env_cfg {
            EnvConfig::ArmPen(_) => 5000,
            EnvConfig::MobilePusher(_) => 3000,
            EnvConfig::Linear { .. } => 500,
        };
        let teachers = match (variant, &env_cfg) {
            (Variant::SgimPb, EnvConfig::ArmPen(_)) => default_teachers(&env_cfg),
            _ => Vec::new(),
        };
        Ok(ExperimentConfig {
            schema_version: SCHEMA_VERSION,
            variant,
            seed,
            episodes,
            snapshot_period: default_period(),
            env: env_cfg,
            interest: InterestParams::default(),
            strategies: StrategyParams::default(),
            resolve: ResolveParams::default(),
            affordance: AffordanceParams::default(),
            learning: LearningParams::default(),
            teachers,
        })
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "schema_version {} unsupported (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.episodes == 0 {
            return Err(Error::Config("episodes must be at least 1".into()));
        }
        if self.snapshot_period == 0 {
            return Err(Error::Config("snapshot_period must be at least 1".into()));
        }
        let i = &self.interest;
        unit("interest.exploit_probability", i.exploit_probability)?;
        unit("interest.pair_probability", i.pair_probability)?;
        unit("interest.exploit_probability + pair_probability", i.exploit_probability + i.pair_probability)?;
        positive("interest.autonomous_cost", i.autonomous_cost)?;
        positive("interest.mimic_cost", i.mimic_cost)?;
        if i.window < 2 || i.split_threshold < 2 {
            return Err(Error::Config("interest window and split threshold must be at least 2".into()));
        }
        unit("strategies.fresh_probability", self.strategies.fresh_probability)?;
        for (n, v) in [
            ("strategies.action_noise", self.strategies.action_noise),
            ("strategies.outcome_noise", self.strategies.outcome_noise),
            ("strategies.mimic_noise", self.strategies.mimic_noise),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{n} = {v} must be nonnegative")));
            }
        }
        if self.resolve.depth == 0 {
            return Err(Error::Config("resolve.depth must be at least 1".into()));
        }
        let a = &self.affordance;
        unit("affordance.r2_threshold", a.r2_threshold)?;
        unit("affordance.min_improvement", a.min_improvement)?;
        unit("affordance.reach_quantile", a.reach_quantile)?;
        positive("affordance.tolerance", a.tolerance)?;
        if a.min_samples < 3 || a.window < a.min_samples {
            return Err(Error::Config("affordance window must hold at least min_samples >= 3 transitions".into()));
        }
        let l = &self.learning;
        unit("learning.hierarchy_rate", l.hierarchy_rate)?;
        unit("learning.initial_weight", l.initial_weight)?;
        unit("learning.prune_threshold", l.prune_threshold)?;
        match (self.variant, self.teachers.is_empty()) {
            (Variant::SgimPb, true) => return Err(Error::Config("SGIM-PB needs at least one teacher".into())),
            (Variant::ImPb | Variant::Chime, false) => {
                return Err(Error::Config(format!("{} does not use teachers", self.variant)))
            }
            _ => {}
        }
        let mut ids: Vec<&str> = self.teachers.iter().map(|t| t.id.as_str()).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::Config("duplicate teacher id".into()));
        }
        if let Some(t) = self.teachers.iter().find(|t| t.id.is_empty() || t.id.contains(':')) {
            return Err(Error::Config(format!("invalid teacher id {:?}", t.id)));
        }
        let n_spaces = self.env.build_spaces_len();
        if let Some(t) = self.teachers.iter().find(|t| t.target.index() >= n_spaces) {
            return Err(Error::Config(format!("teacher {} targets unknown space {}", t.id, t.target)));
        }
        Ok(())
    }
}

impl EnvConfig {
    fn build_spaces_len(&self) -> usize {
        use crate::envs::Environment;
        self.build().spaces().len()
    }
}

pub fn default_teachers(env: &EnvConfig) -> Vec<TeacherSpec> {
    match env {
        EnvConfig::ArmPen(_) => vec![
            TeacherSpec { id: "pen".into(), kind: TeacherKind::Action, target: PEN, grid: 5 },
            TeacherSpec { id: "drawing".into(), kind: TeacherKind::Procedure, target: DRAWING, grid: 7 },
        ],
        EnvConfig::MobilePusher(_) => vec![TeacherSpec {
            id: "object".into(),
            kind: TeacherKind::Action,
            target: crate::envs::pusher::OBJECT1,
            grid: 5,
        }],
        EnvConfig::Linear { .. } => vec![TeacherSpec {
            id: "linear".into(),
            kind: TeacherKind::Action,
            target: crate::domain::SpaceId(0),
            grid: 5,
        }],
    }
}
