//! Experiment runner for the oampi laboratory: declarative configs, presets,
//! parallel seeds and deterministic CSV output.

pub mod config;
pub mod dataset_io;
pub mod error;
pub mod experiment;
pub mod output;
pub mod presets;

use std::path::Path;

use serde::Serialize;

use crate::config::{ExperimentKind, Validated};
use crate::error::LabError;
use crate::experiment::{MixtureOutcome, TrajectoryOutcome};
use crate::output::{Artifact, Manifest};

/// Environment variable capping the number of worker threads.
pub const THREADS_VAR: &str = "LAB_THREADS";

/// Worker count: `LAB_THREADS` if set, otherwise the available parallelism.
pub fn threads_from_env() -> Result<usize, LabError> {
    match std::env::var(THREADS_VAR) {
        Ok(text) => parse_threads(&text),
        Err(std::env::VarError::NotPresent) => Ok(default_threads()),
        Err(e) => Err(thread_error(&e.to_string())),
    }
}

fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn parse_threads(text: &str) -> Result<usize, LabError> {
    match text.trim().parse::<usize>() {
        Ok(n) if n >= 1 => Ok(n.min(default_threads().max(1)).max(1)),
        _ => Err(thread_error(&format!("expected a positive integer, got `{text}`"))),
    }
}

fn thread_error(message: &str) -> LabError {
    LabError::Config(config::ConfigError::single(
        Some(THREADS_VAR),
        None,
        message.to_owned(),
    ))
}

#[derive(Debug)]
pub enum Outcome {
    Trajectory(TrajectoryOutcome),
    Mixture(MixtureOutcome),
}

impl Outcome {
    pub fn artifacts(&self) -> &[Artifact] {
        match self {
            Outcome::Trajectory(t) => &t.artifacts,
            Outcome::Mixture(m) => &m.artifacts,
        }
    }
}

/// Runs a validated experiment in memory.
pub fn execute(validated: &Validated, threads: usize) -> Result<Outcome, LabError> {
    let config = &validated.config;
    match config.kind {
        ExperimentKind::Trajectory => {
            experiment::run_trajectory(config, &validated.seeds, None, threads)
                .map(Outcome::Trajectory)
        }
        ExperimentKind::Mixture => {
            experiment::run_mixture(config, &validated.seeds, threads).map(Outcome::Mixture)
        }
    }
}

#[derive(Serialize)]
#[serde(untagged)]
enum SummaryRef<'a> {
    Trajectory(&'a experiment::TrajectorySummary),
    Mixture(&'a experiment::MixtureSummary),
}

/// Writes every artifact of `outcome` plus `manifest.json` under `dir`.
pub fn write_outcome(dir: &Path, validated: &Validated, outcome: &Outcome) -> Result<(), LabError> {
    let hash = validated.config.content_hash();
    let summary = match outcome {
        Outcome::Trajectory(t) => SummaryRef::Trajectory(&t.summary),
        Outcome::Mixture(m) => SummaryRef::Mixture(&m.summary),
    };
    let manifest = Manifest {
        tool: "lab",
        version: env!("CARGO_PKG_VERSION"),
        experiment: &validated.config.name,
        config_hash: &hash,
        seeds: &validated.seeds,
        summary,
    };
    output::write_all(dir, outcome.artifacts(), &manifest)
        .map_err(|e| LabError::io(format!("writing results to {}", dir.display()), e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_counts() {
        assert!(parse_threads("0").is_err());
        assert!(parse_threads("x").is_err());
        assert_eq!(parse_threads("1").unwrap(), 1);
        assert!(parse_threads("64").unwrap() >= 1);
    }
}
