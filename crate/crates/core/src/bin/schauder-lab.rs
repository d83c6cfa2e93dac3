use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use schauder_lab::error::Error;
use schauder_lab::lab::{exit_code, run_experiment, ExperimentConfig, Stage};

#[derive(Parser)]
#[command(name = "schauder-lab", version, about = "Parametrix experiments for degenerate Kolmogorov chains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory for summary.json and CSV tables.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Treat warnings such as grid extrapolation as failures.
    #[arg(long, global = true)]
    strict: bool,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Assumption checks on the coefficients.
    Check,
    /// Frozen proxy diagnostics.
    Proxy,
    /// Parametrix solve on the configured grid.
    Solve,
    /// Feynman-Kac Monte Carlo estimates.
    Fk,
    /// Besov decay profile.
    Besov,
    /// Rescaling correspondences.
    Scale,
    /// Schauder ratio across mollification levels.
    Schauder,
    /// Sensitivity inequality suite.
    Sensitivity,
    /// Every stage listed in the config.
    Run,
}

impl Command {
    fn stage(self) -> Option<Stage> {
        Some(match self {
            Command::Check => Stage::Check,
            Command::Proxy => Stage::Proxy,
            Command::Solve => Stage::Solve,
            Command::Fk => Stage::Fk,
            Command::Besov => Stage::Besov,
            Command::Scale => Stage::Scale,
            Command::Schauder => Stage::Schauder,
            Command::Sensitivity => Stage::Sensitivity,
            Command::Run => return None,
        })
    }
}

fn load(cli: &Cli) -> Result<ExperimentConfig, Error> {
    let path = cli.config.as_ref().ok_or_else(|| Error::config("--config", "a config file is required"))?;
    let text = std::fs::read_to_string(path).map_err(|e| Error::config("--config", format!("{}: {e}", path.display())))?;
    let mut cfg = ExperimentConfig::from_json(&text)?;
    if let Some(stage) = cli.command.stage() {
        cfg.stages = vec![stage];
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = Some(out.clone());
    }
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    cfg.strict |= cli.strict;
    cfg.validate()?;
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = load(&cli).and_then(|cfg| run_experiment(&cfg));
    match &result {
        Ok(outcome) => {
            for r in &outcome.reports {
                let tag = match r.pass {
                    Some(true) => "PASS",
                    Some(false) => "FAIL",
                    None => "INFO",
                };
                println!("{tag} {}", r.name);
            }
            for w in &outcome.strict_failures {
                println!("FAIL strict: {w}");
            }
            if let Some(dir) = &outcome.output_dir {
                println!("wrote {}", dir.join("summary.json").display());
            }
        }
        Err(e) => eprintln!("error: {e}"),
    }
    ExitCode::from(exit_code(&result) as u8)
}
