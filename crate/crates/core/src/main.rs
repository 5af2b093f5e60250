use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use saht::envs::EnvConfig;
use saht::runner::config::default_teachers;
use saht::runner::learner::EVAL_RESET_SEED;
use saht::runner::{self, ExperimentConfig, RunError};
use saht::teachers::build_teacher;

#[derive(Parser)]
#[command(name = "saht", version, about = "Curiosity-driven hierarchical skill learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its artifacts.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a stored snapshot on an environment benchmark.
    Eval {
        #[arg(long)]
        snapshot: PathBuf,
        #[arg(long)]
        benchmark: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the hierarchy, region trees and affordances of a run.
    Inspect {
        #[arg(long)]
        run: PathBuf,
    },
    /// Build and validate the default teacher repertoires of an environment.
    Teach {
        #[arg(long)]
        env: String,
        #[arg(long)]
        out: PathBuf,
    },
}

fn execute(cmd: Command) -> Result<(), RunError> {
    match cmd {
        Command::Run { config, out } => {
            let text = std::fs::read_to_string(&config)
                .map_err(|e| RunError::Config(format!("{}: {e}", config.display())))?;
            let cfg = ExperimentConfig::from_toml(&text).map_err(|e| RunError::Config(e.to_string()))?;
            let run = runner::run_to_dir(&cfg, &out)?;
            if let Some(last) = run.metrics.last() {
                println!("{} episodes written to {}", last.episode, out.display());
            }
            for m in run.metrics.iter().rev().take_while(|m| m.episode == run.last.episode).collect::<Vec<_>>().iter().rev() {
                println!("  {} error={:.3} length={:.2}", m.metrics.space, m.metrics.mean_error, m.metrics.mean_length);
            }
            Ok(())
        }
        Command::Eval { snapshot, benchmark, out } => {
            for m in runner::eval_to_dir(&snapshot, &benchmark, &out)? {
                println!("{} error={:.3} length={:.2} ({}/{} resolved)", m.space, m.mean_error, m.mean_length, m.resolved, m.goals);
            }
            Ok(())
        }
        Command::Inspect { run } => {
            print!("{}", runner::inspect(&run)?);
            Ok(())
        }
        Command::Teach { env, out } => {
            let cfg = EnvConfig::from_id(&env).ok_or_else(|| RunError::Config(format!("unknown environment {env}")))?;
            let world = cfg.build();
            let mut teachers = Vec::new();
            for spec in default_teachers(&cfg) {
                let (t, dropped) = build_teacher(&world, &spec, EVAL_RESET_SEED)
                    .map_err(|e| RunError::Runtime(format!("teacher {}: {e}", spec.id)))?;
                println!("{}: {} demos, {} unreachable goals dropped", t.id(), t.repertoire().len(), dropped.len());
                teachers.push(t);
            }
            let json = serde_json::to_string_pretty(&teachers).map_err(|e| RunError::Runtime(e.to_string()))?;
            std::fs::write(&out, json + "\n").map_err(|e| RunError::Runtime(format!("{}: {e}", out.display())))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
