//! Offline datasets: collection from a behavior policy, trajectory-level
//! mixing, and the empirical model estimated from a dataset.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_dim, Error, Result};
use crate::mdp::{Policy, TabularMdp, Transitions};

/// One logged transition; `reward` includes the sampled noise.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Step {
    pub state: usize,
    pub action: usize,
    pub reward: f64,
    pub next_state: usize,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct Dataset {
    pub trajectories: Vec<Vec<Step>>,
    /// Free-text label describing where the data came from.
    pub provenance: String,
}

impl Dataset {
    pub fn new(trajectories: Vec<Vec<Step>>, provenance: impl Into<String>) -> Self {
        Self {
            trajectories,
            provenance: provenance.into(),
        }
    }

    pub fn n_trajectories(&self) -> usize {
        self.trajectories.len()
    }

    pub fn n_steps(&self) -> usize {
        self.trajectories.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.n_steps() == 0
    }

    pub fn steps(&self) -> impl Iterator<Item = &Step> + '_ {
        self.trajectories.iter().flatten()
    }
}

/// Rolls out `n_trajectories` trajectories of exactly `horizon` steps under `behavior`.
pub fn collect<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    behavior: &Policy,
    n_trajectories: usize,
    horizon: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    mdp.check_policy(behavior)?;
    let mut trajectories = Vec::with_capacity(n_trajectories);
    for _ in 0..n_trajectories {
        let mut state = crate::math::categorical(mdp.initial_dist(), rng.random());
        let mut trajectory = Vec::with_capacity(horizon);
        for _ in 0..horizon {
            let action = behavior.sample_action(state, rng.random());
            let reward = mdp.sample_reward(state, action, rng);
            let next_state = mdp.transitions().sample(state, action, rng.random());
            trajectory.push(Step {
                state,
                action,
                reward,
                next_state,
            });
            state = next_state;
        }
        trajectories.push(trajectory);
    }
    Ok(Dataset::new(
        trajectories,
        format!("collected: {n_trajectories} x {horizon}"),
    ))
}

/// Draws `size` trajectories with replacement, each from `a` with probability
/// `p` and from `b` otherwise.
pub fn mix_datasets<R: Rng + ?Sized>(
    a: &Dataset,
    b: &Dataset,
    p: f64,
    size: usize,
    rng: &mut R,
) -> Result<Dataset> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "mixture probability {p} must lie in [0, 1]"
        )));
    }
    if size > 0 && p > 0.0 && a.trajectories.is_empty() {
        return Err(Error::InvalidArgument(
            "first dataset is empty but has positive selection probability".into(),
        ));
    }
    if size > 0 && p < 1.0 && b.trajectories.is_empty() {
        return Err(Error::InvalidArgument(
            "second dataset is empty but has positive selection probability".into(),
        ));
    }
    let trajectories = (0..size)
        .map(|_| {
            let source = if rng.random::<f64>() < p { a } else { b };
            let i = rng.random_range(0..source.trajectories.len());
            source.trajectories[i].clone()
        })
        .collect();
    Ok(Dataset::new(
        trajectories,
        format!("mixture p={p} of [{}] and [{}]", a.provenance, b.provenance),
    ))
}

/// Counts and maximum-likelihood estimates derived from a dataset.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalModel {
    pub n_states: usize,
    pub n_actions: usize,
    /// `N(s, a)`, indexed `s * n_actions + a`.
    pub count_sa: Vec<u64>,
    /// `N(s, a, s')` for observed triples.
    pub count_sas: BTreeMap<(usize, usize, usize), u64>,
    pub reward_sum: Vec<f64>,
    /// Empirical mean reward; 0 where `N(s, a) = 0`.
    pub reward_hat: Vec<f64>,
    /// Empirical transition frequencies; self-loop where `N(s, a) = 0`.
    pub transition_hat: Transitions,
    /// Action frequencies per state; uniform at unvisited states.
    pub behavior_hat: Policy,
}

impl EmpiricalModel {
    pub fn count(&self, s: usize, a: usize) -> u64 {
        self.count_sa[s * self.n_actions + a]
    }

    pub fn state_count(&self, s: usize) -> u64 {
        self.count_sa[s * self.n_actions..(s + 1) * self.n_actions]
            .iter()
            .sum()
    }

    pub fn reward_hat(&self, s: usize, a: usize) -> f64 {
        self.reward_hat[s * self.n_actions + a]
    }

    pub(crate) fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        check_dim("model states", n_states, self.n_states)?;
        check_dim("model actions", n_actions, self.n_actions)
    }
}

/// Estimates rewards, transitions and the behavior policy by counting.
pub fn fit_empirical(dataset: &Dataset, n_states: usize, n_actions: usize) -> Result<EmpiricalModel> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if n_states == 0 || n_actions == 0 {
        return Err(Error::InvalidArgument("model needs states and actions".into()));
    }
    let n_sa = n_states * n_actions;
    let mut count_sa = vec![0u64; n_sa];
    let mut count_sas = BTreeMap::new();
    let mut reward_sum = vec![0.0; n_sa];
    for step in dataset.steps() {
        if step.state >= n_states || step.next_state >= n_states || step.action >= n_actions {
            return Err(Error::InvalidArgument(format!(
                "step {step:?} out of range for {n_states} states and {n_actions} actions"
            )));
        }
        let i = step.state * n_actions + step.action;
        count_sa[i] += 1;
        reward_sum[i] += step.reward;
        *count_sas
            .entry((step.state, step.action, step.next_state))
            .or_insert(0u64) += 1;
    }

    let reward_hat: Vec<f64> = reward_sum
        .iter()
        .zip(&count_sa)
        .map(|(&sum, &n)| if n > 0 { sum / n as f64 } else { 0.0 })
        .collect();

    let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_sa];
    for (&(s, a, s_next), &n) in &count_sas {
        let i = s * n_actions + a;
        rows[i].push((s_next, n as f64 / count_sa[i] as f64));
    }
    for (i, row) in rows.iter_mut().enumerate() {
        if row.is_empty() {
            row.push((i / n_actions, 1.0));
        } else {
            renormalize(row.iter_mut().map(|(_, p)| p));
        }
    }
    let transition_hat = Transitions::from_rows(n_states, n_actions, rows)?;

    let mut behavior = vec![0.0; n_sa];
    for s in 0..n_states {
        let counts = &count_sa[s * n_actions..(s + 1) * n_actions];
        let total: u64 = counts.iter().sum();
        let out = &mut behavior[s * n_actions..(s + 1) * n_actions];
        if total == 0 {
            out.iter_mut().for_each(|p| *p = 1.0 / n_actions as f64);
        } else {
            for (p, &c) in out.iter_mut().zip(counts) {
                *p = c as f64 / total as f64;
            }
            renormalize(out.iter_mut());
        }
    }
    let behavior_hat = Policy::new(n_states, n_actions, behavior)?;

    Ok(EmpiricalModel {
        n_states,
        n_actions,
        count_sa,
        count_sas,
        reward_sum,
        reward_hat,
        transition_hat,
        behavior_hat,
    })
}

/// Folds the rounding residue of a frequency row into its largest entry.
fn renormalize<'a>(row: impl Iterator<Item = &'a mut f64>) {
    let mut entries: Vec<&mut f64> = row.collect();
    let sum: f64 = entries.iter().map(|p| **p).sum();
    if let Some(max) = entries.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        **max += 1.0 - sum;
    }
}
