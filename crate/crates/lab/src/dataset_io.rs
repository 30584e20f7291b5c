//! Dataset CSV: one row per step, `traj_id,t,state,action,reward,next_state`.
//!
//! Rewards are written with 17 significant digits so they round-trip exactly.

use std::path::PathBuf;

use oampi_core::{Dataset, Step};

use crate::output::{Artifact, CsvTable, SeedTag};

pub const HEADER: [&str; 6] = ["traj_id", "t", "state", "action", "reward", "next_state"];

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum DatasetError {
    #[error("dataset csv: missing header row")]
    MissingHeader,
    #[error("dataset csv: header must be `{}`, found `{found}`", HEADER.join(","))]
    BadHeader { found: String },
    #[error("dataset csv line {line}: {message}")]
    BadRow { line: usize, message: String },
}

/// 17 significant digits in scientific notation.
pub fn reward_repr(r: f64) -> String {
    format!("{r:.16e}")
}

pub fn to_csv(dataset: &Dataset, config_hash: &str, seed: u64, path: impl Into<PathBuf>) -> Artifact {
    let mut t = CsvTable::new(config_hash, SeedTag::Single(seed), &HEADER);
    for (i, traj) in dataset.trajectories.iter().enumerate() {
        for (step_index, step) in traj.iter().enumerate() {
            t.row([
                i.to_string(),
                step_index.to_string(),
                step.state.to_string(),
                step.action.to_string(),
                reward_repr(step.reward),
                step.next_state.to_string(),
            ]);
        }
    }
    t.finish(path)
}

/// Parses a dataset CSV. Lines starting with `#` are ignored. Trajectory ids
/// must start at 0 and appear in order, and `t` must count up from 0 within
/// each trajectory.
pub fn from_csv(text: &str, provenance: &str) -> Result<Dataset, DatasetError> {
    let mut rows = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    let (_, header) = rows.next().ok_or(DatasetError::MissingHeader)?;
    let fields: Vec<&str> = header.split(',').map(str::trim).collect();
    if fields != HEADER {
        return Err(DatasetError::BadHeader {
            found: header.to_owned(),
        });
    }
    let mut trajectories: Vec<Vec<Step>> = Vec::new();
    for (line, row) in rows {
        let bad = |message: String| DatasetError::BadRow { line, message };
        let cols: Vec<&str> = row.split(',').map(str::trim).collect();
        if cols.len() != HEADER.len() {
            return Err(bad(format!("expected {} fields, found {}", HEADER.len(), cols.len())));
        }
        let int = |i: usize| -> Result<usize, DatasetError> {
            cols[i]
                .parse::<usize>()
                .map_err(|_| bad(format!("`{}` is not a valid {}", cols[i], HEADER[i])))
        };
        let (traj, t) = (int(0)?, int(1)?);
        let reward: f64 = cols[4]
            .parse()
            .map_err(|_| bad(format!("`{}` is not a valid reward", cols[4])))?;
        if !reward.is_finite() {
            return Err(bad("reward must be finite".into()));
        }
        if traj == trajectories.len() {
            trajectories.push(Vec::new());
        } else if traj + 1 != trajectories.len() {
            return Err(bad(format!("trajectory id {traj} out of order")));
        }
        let current = trajectories.last_mut().expect("pushed above");
        if t != current.len() {
            return Err(bad(format!("step index {t} out of order in trajectory {traj}")));
        }
        current.push(Step {
            state: int(2)?,
            action: int(3)?,
            reward,
            next_state: int(5)?,
        });
    }
    Ok(Dataset::new(trajectories, provenance))
}
