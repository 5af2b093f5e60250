//! Experiment orchestration: configuration, the episode loop, periodic
//! evaluation and artifact export.

pub mod config;
pub mod eval;
pub mod learner;
pub mod scenario;

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{ExperimentConfig, LearningParams, SCHEMA_VERSION};
pub use eval::{Benchmark, GoalResult, SpaceMetrics};
pub use learner::{Counters, EpisodeLog, Learner, Snapshot};

use crate::envs::Environment;
use crate::strategies::StrategyId;

/// Failure of a whole run. Configuration problems are detected before the
/// first episode.
#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("runtime failure: {0}")]
    Runtime(String),
}

impl RunError {
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 1,
            RunError::Runtime(_) => 2,
        }
    }
}

fn io(path: &Path, e: std::io::Error) -> RunError {
    RunError::Runtime(format!("{}: {e}", path.display()))
}

/// One metrics table row: a space at a snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub episode: usize,
    #[serde(flatten)]
    pub metrics: SpaceMetrics,
    /// Cumulative episode count per strategy, in the run's strategy order.
    pub strategy_counts: Vec<usize>,
}

pub struct RunOutput {
    pub strategies: Vec<StrategyId>,
    pub metrics: Vec<MetricsRow>,
    pub counters: Counters,
    pub last: Snapshot,
}

/// Runs the configured experiment, handing every episode log to `sink` and
/// evaluating a snapshot every period and after the last episode.
pub fn run_with(
    cfg: &ExperimentConfig,
    mut sink: impl FnMut(&EpisodeLog) -> Result<(), RunError>,
) -> Result<RunOutput, RunError> {
    let mut learner = Learner::new(cfg.clone()).map_err(|e| RunError::Config(e.to_string()))?;
    let bench = Benchmark::build(&cfg.env);
    let strategies = learner.strategies().to_vec();
    let mut metrics = Vec::new();
    let take = |learner: &Learner, metrics: &mut Vec<MetricsRow>| {
        let snap = learner.snapshot();
        let counts: Vec<usize> = strategies
            .iter()
            .map(|s| snap.strategy_counts.get(s).copied().unwrap_or(0))
            .collect();
        for m in eval::evaluate(&snap, &bench) {
            metrics.push(MetricsRow { episode: snap.episode, metrics: m, strategy_counts: counts.clone() });
        }
        snap
    };
    let mut last = None;
    for t in 0..cfg.episodes {
        let log = learner.step().map_err(RunError::Runtime)?;
        sink(&log)?;
        if (t + 1) % cfg.snapshot_period == 0 || t + 1 == cfg.episodes {
            last = Some(take(&learner, &mut metrics));
        }
    }
    Ok(RunOutput {
        strategies,
        metrics,
        counters: learner.counters().clone(),
        last: last.expect("budget is at least one episode"),
    })
}

pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, RunError> {
    run_with(cfg, |_| Ok(()))
}

pub fn metrics_csv(strategies: &[StrategyId], rows: &[MetricsRow]) -> String {
    let mut out = String::from("episode,space,mean_error,mean_length,goals,resolved");
    for s in strategies {
        let _ = write!(out, ",{s}");
    }
    out.push('\n');
    for r in rows {
        let m = &r.metrics;
        let _ = write!(
            out,
            "{},{},{},{},{},{}",
            r.episode, m.space, m.mean_error, m.mean_length, m.goals, m.resolved
        );
        for c in &r.strategy_counts {
            let _ = write!(out, ",{c}");
        }
        out.push('\n');
    }
    out
}

/// Text exports of a snapshot, keyed by file name.
pub fn snapshot_exports(snap: &Snapshot) -> Vec<(&'static str, String)> {
    let world = snap.config.env.build();
    vec![
        ("hierarchy.dot", snap.hierarchy.to_dot("hierarchy")),
        ("affordances.txt", snap.affordances.export(&world.context_labels())),
        ("affordances.dot", snap.affordances.to_dot()),
        ("regions.txt", snap.interest.export()),
    ]
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), RunError> {
    let path = dir.join(name);
    fs::write(&path, contents).map_err(|e| io(&path, e))
}

/// Runs and writes every artifact into `dir`.
pub fn run_to_dir(cfg: &ExperimentConfig, dir: &Path) -> Result<RunOutput, RunError> {
    cfg.validate().map_err(|e| RunError::Config(e.to_string()))?;
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_file(dir, "config.toml", &cfg.to_toml())?;
    let log_path = dir.join("episodes.jsonl");
    let file = fs::File::create(&log_path).map_err(|e| io(&log_path, e))?;
    let mut log = BufWriter::new(file);
    let out = run_with(cfg, |e| {
        serde_json::to_writer(&mut log, e).map_err(|e| RunError::Runtime(e.to_string()))?;
        log.write_all(b"\n").map_err(|e| io(&log_path, e))
    })?;
    log.flush().map_err(|e| io(&log_path, e))?;
    write_file(dir, "metrics.csv", &metrics_csv(&out.strategies, &out.metrics))?;
    write_snapshot(&out.last, dir)?;
    let counters = serde_json::to_string_pretty(&out.counters).map_err(|e| RunError::Runtime(e.to_string()))?;
    write_file(dir, "counters.json", &(counters + "\n"))?;
    Ok(out)
}

pub fn write_snapshot(snap: &Snapshot, dir: &Path) -> Result<(), RunError> {
    let json = serde_json::to_string(snap).map_err(|e| RunError::Runtime(e.to_string()))?;
    write_file(dir, "snapshot.json", &json)?;
    for (name, text) in snapshot_exports(snap) {
        write_file(dir, name, &text)?;
    }
    Ok(())
}

pub fn load_snapshot(path: &Path) -> Result<Snapshot, RunError> {
    let text = fs::read_to_string(path).map_err(|e| io(path, e))?;
    serde_json::from_str(&text).map_err(|e| RunError::Config(format!("{}: {e}", path.display())))
}

/// Evaluates a stored snapshot on the benchmark of `env_id` and writes the
/// metrics table.
pub fn eval_to_dir(snapshot: &Path, env_id: &str, dir: &Path) -> Result<Vec<SpaceMetrics>, RunError> {
    let snap = load_snapshot(snapshot)?;
    if snap.config.env.id() != env_id {
        return Err(RunError::Config(format!(
            "snapshot was taken on {} but benchmark {env_id} was requested",
            snap.config.env.id()
        )));
    }
    let bench = Benchmark::build(&snap.config.env);
    let metrics = eval::evaluate(&snap, &bench);
    let strategies: Vec<StrategyId> = snap.strategy_counts.keys().cloned().collect();
    let counts: Vec<usize> = snap.strategy_counts.values().copied().collect();
    let rows: Vec<MetricsRow> = metrics
        .iter()
        .map(|m| MetricsRow { episode: snap.episode, metrics: m.clone(), strategy_counts: counts.clone() })
        .collect();
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    write_file(dir, "metrics.csv", &metrics_csv(&strategies, &rows))?;
    Ok(metrics)
}

/// Human-readable summary of a run directory.
pub fn inspect(dir: &Path) -> Result<String, RunError> {
    let snap = load_snapshot(&dir.join("snapshot.json"))?;
    let world = snap.config.env.build();
    let mut out = String::new();
    let _ = writeln!(out, "{} on {} after {} episodes", snap.config.variant, snap.config.env.id(), snap.episode);
    out.push_str("\nstrategies\n");
    for (s, n) in &snap.strategy_counts {
        let _ = writeln!(out, "  {s}: {n}");
    }
    out.push_str("\nhierarchy (active edges)\n");
    for e in snap.hierarchy.edges().iter().filter(|e| e.active) {
        let d: Vec<String> = e.decomposition.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(out, "  {} -> [{}] w={:.3} updates={}", e.from, d.join(","), e.weight, e.updates);
    }
    out.push_str("\nregions\n");
    out.push_str(&snap.interest.export());
    out.push_str("\naffordances\n");
    let aff = snap.affordances.export(&world.context_labels());
    out.push_str(if aff.is_empty() { "  none\n" } else { &aff });
    Ok(out)
}
