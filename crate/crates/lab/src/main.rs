use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use oampi_lab::config::{parse_seeds, ConfigError, ExperimentConfig, Validated};
use oampi_lab::error::LabError;
use oampi_lab::{execute, presets, threads_from_env, write_outcome};

/// Tabular offline RL laboratory.
#[derive(Parser)]
#[command(name = "lab", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Seeds to run: an inclusive range `a..b` or a list `1,4,9`.
    #[arg(long, global = true)]
    seeds: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Experiment file (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a built-in experiment.
    Preset {
        /// One of: fig4, appendix_a, mixture_sweep.
        name: String,
        #[command(flatten)]
        common: Common,
    },
    /// Run the experiment described by `--config`.
    Run {
        #[command(flatten)]
        common: Common,
    },
    /// Check `--config` without running it.
    Validate {
        #[command(flatten)]
        common: Common,
    },
}

fn config_error(key: &str, message: impl Into<String>) -> LabError {
    LabError::Config(ConfigError::single(Some(key), None, message))
}

fn load(common: &Common, preset: Option<&str>) -> Result<Validated, LabError> {
    let (source, origin) = match (preset, &common.config) {
        (Some(_), Some(_)) => {
            return Err(config_error("--config", "a preset cannot be combined with --config"))
        }
        (Some(name), None) => {
            let source = presets::get(name).ok_or_else(|| {
                config_error(
                    "preset",
                    format!("unknown preset `{name}`; known: {}", presets::names().join(", ")),
                )
            })?;
            (source.to_owned(), format!("preset {name}"))
        }
        (None, Some(path)) => {
            let source = std::fs::read_to_string(path).map_err(|e| {
                config_error("--config", format!("cannot read {}: {e}", path.display()))
            })?;
            (source, path.display().to_string())
        }
        (None, None) => return Err(config_error("--config", "an experiment file is required")),
    };
    let seeds = common
        .seeds
        .as_deref()
        .map(parse_seeds)
        .transpose()
        .map_err(|e| config_error("--seeds", e))?;
    let validated = ExperimentConfig::parse(&source, seeds.as_deref()).map_err(|e| {
        let issues = e
            .issues
            .into_iter()
            .map(|mut issue| {
                issue.message = format!("{origin}: {}", issue.message);
                issue
            })
            .collect();
        LabError::Config(ConfigError { issues })
    })?;
    for warning in &validated.warnings {
        eprintln!("warning: {warning}");
    }
    Ok(validated)
}

fn out_dir(common: &Common, validated: &Validated) -> PathBuf {
    common
        .out
        .clone()
        .or_else(|| validated.config.output.dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results").join(&validated.config.name))
}

fn run(common: &Common, preset: Option<&str>) -> Result<(), LabError> {
    let validated = load(common, preset)?;
    let threads = threads_from_env()?;
    let dir = out_dir(common, &validated);
    let outcome = execute(&validated, threads)?;
    write_outcome(&dir, &validated, &outcome)?;
    println!(
        "{}: {} seeds, {} files written to {}",
        validated.config.name,
        validated.seeds.len(),
        outcome.artifacts().len() + 1,
        dir.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Preset { name, common } => run(common, Some(name)),
        Command::Run { common } => run(common, None),
        Command::Validate { common } => load(common, None).map(|v| {
            println!(
                "{}: ok ({} seeds, config hash {})",
                v.config.name,
                v.seeds.len(),
                v.config.content_hash()
            );
        }),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
