//! The offline approximate modified policy iteration driver.
//!
//! Starting from `pi_0 = beta`, each iteration evaluates the current policy
//! on the empirical model and applies an improvement operator anchored to the
//! behavior policy. The variants differ only in schedule:
//!
//! * one-step: a single improvement against the behavior's Q estimate;
//! * multi-step: `K` iterations, each evaluated to convergence;
//! * iterative: many iterations with one warm-started backup each, so the
//!   estimate chases a moving policy as in actor-critic training.

use alloc::format;
use alloc::vec::Vec;
use core::time::Duration;

use crate::data::{fit_empirical, Dataset, EmpiricalModel};
use crate::diag::PolicyDiagnostics;
use crate::error::{check_dim, Error, Result};
use crate::eval::{evaluate_offline, EvalConfig, WarmStart};
use crate::improve::{self, BcqAnchor, BcqMode, ImprovementSpec};
use crate::math;
use crate::mdp::{j_value, mix_policies, Policy, QTable, TabularMdp};
use crate::rng::{child_rng, derive_seed, streams, LabRng};

/// Policy iterations used by the multi-step variant unless configured otherwise.
pub const DEFAULT_MULTI_STEP_K: usize = 5;
/// Policy iterations used by the iterative variant unless configured otherwise.
pub const DEFAULT_ITERATIVE_K: usize = 500;
/// Backups per evaluation in the gridworld protocol.
pub const GRID_EVAL_SWEEPS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Variant {
    OneStep,
    MultiStep,
    Iterative,
}

impl Variant {
    pub const ALL: [Variant; 3] = [Self::OneStep, Self::MultiStep, Self::Iterative];

    pub fn name(&self) -> &'static str {
        match self {
            Self::OneStep => "one_step",
            Self::MultiStep => "multi_step",
            Self::Iterative => "iterative",
        }
    }
}

/// Where `pi_0` and the improvement anchor come from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BehaviorSource {
    /// The true data-collecting policy.
    #[default]
    Oracle,
    /// The maximum-likelihood estimate from the dataset.
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OampiConfig {
    pub variant: Variant,
    /// Number of policy iterations `K`; one-step always runs exactly one.
    pub k_iterations: usize,
    pub eval: EvalConfig,
    pub improvement: ImprovementSpec,
    pub behavior_source: BehaviorSource,
    /// Policy mixing `pi_k = (1 - eta) pi_{k-1} + eta * I(...)`; 1 disables it.
    pub step_size: f64,
    pub seed: u64,
}

impl OampiConfig {
    pub fn one_step(improvement: ImprovementSpec) -> Self {
        Self {
            variant: Variant::OneStep,
            k_iterations: 1,
            eval: EvalConfig::convergent(),
            improvement,
            behavior_source: BehaviorSource::Oracle,
            step_size: 1.0,
            seed: 0,
        }
    }

    pub fn multi_step(improvement: ImprovementSpec, k_iterations: usize) -> Self {
        Self {
            variant: Variant::MultiStep,
            k_iterations,
            ..Self::one_step(improvement)
        }
    }

    pub fn iterative(improvement: ImprovementSpec, k_iterations: usize) -> Self {
        Self {
            variant: Variant::Iterative,
            k_iterations,
            eval: EvalConfig::single_warm_sweep(),
            ..Self::one_step(improvement)
        }
    }

    /// Default configuration of `variant` with its default `K` and schedule.
    pub fn for_variant(variant: Variant, improvement: ImprovementSpec) -> Self {
        match variant {
            Variant::OneStep => Self::one_step(improvement),
            Variant::MultiStep => Self::multi_step(improvement, DEFAULT_MULTI_STEP_K),
            Variant::Iterative => Self::iterative(improvement, DEFAULT_ITERATIVE_K),
        }
    }

    pub fn iterations(&self) -> usize {
        match self.variant {
            Variant::OneStep => 1,
            _ => self.k_iterations,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.eval.validate()?;
        self.improvement.validate()?;
        if self.iterations() == 0 {
            return Err(Error::InvalidArgument("k_iterations must be at least 1".into()));
        }
        if self.variant == Variant::Iterative && self.eval.warm_start != WarmStart::PreviousQ {
            return Err(Error::InvalidArgument(
                "the iterative variant requires warm_start = previous_q".into(),
            ));
        }
        if !(self.step_size > 0.0 && self.step_size <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "step size {} must lie in (0, 1]",
                self.step_size
            )));
        }
        Ok(())
    }
}

/// One pass of evaluation and improvement.
#[derive(Clone, Debug, PartialEq)]
pub struct IterationRecord {
    /// 1-based iteration index `k`.
    pub k: usize,
    /// Table the evaluation of `pi_{k-1}` started from.
    pub q_init: QTable,
    /// The estimate of `Q^{pi_{k-1}}` fed to the improvement step.
    pub q_hat: QTable,
    /// The improved policy `pi_k`.
    pub policy: Policy,
    /// Exact return `J(pi_k)` in the true MDP.
    pub j: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunResult {
    pub variant: Variant,
    pub improvement: ImprovementSpec,
    /// `pi_0`: the true or estimated behavior policy.
    pub behavior: Policy,
    pub j_behavior: f64,
    pub iterations: Vec<IterationRecord>,
    pub model: EmpiricalModel,
    /// One entry per policy `pi_0..pi_K`, filled by [`crate::diag::annotate_run`].
    pub diagnostics: Vec<PolicyDiagnostics>,
    /// Set by callers that time the run; never by the driver itself.
    pub wall_clock: Option<Duration>,
}

impl RunResult {
    pub fn final_policy(&self) -> &Policy {
        self.iterations
            .last()
            .map(|r| &r.policy)
            .unwrap_or(&self.behavior)
    }

    pub fn final_j(&self) -> f64 {
        self.iterations.last().map(|r| r.j).unwrap_or(self.j_behavior)
    }

    /// `pi_0, pi_1, ..., pi_K`.
    pub fn policies(&self) -> impl Iterator<Item = &Policy> + '_ {
        core::iter::once(&self.behavior).chain(self.iterations.iter().map(|r| &r.policy))
    }

    /// `J(pi_0), ..., J(pi_K)`.
    pub fn j_curve(&self) -> Vec<f64> {
        core::iter::once(self.j_behavior)
            .chain(self.iterations.iter().map(|r| r.j))
            .collect()
    }
}

fn resolve_behavior(
    source: BehaviorSource,
    model: &EmpiricalModel,
    oracle: Option<&Policy>,
) -> Result<Policy> {
    match source {
        BehaviorSource::Empirical => Ok(model.behavior_hat.clone()),
        BehaviorSource::Oracle => {
            let beta = oracle.ok_or_else(|| {
                Error::InvalidArgument("oracle behavior source needs the true behavior policy".into())
            })?;
            check_dim("behavior states", model.n_states, beta.n_states())?;
            check_dim("behavior actions", model.n_actions, beta.n_actions())?;
            Ok(beta.clone())
        }
    }
}

fn improve_step(
    spec: &ImprovementSpec,
    q_hat: &QTable,
    behavior: &Policy,
    previous: &Policy,
    dataset: &Dataset,
    rng: &mut LabRng,
) -> Result<Policy> {
    match *spec {
        ImprovementSpec::BehaviorClone => Ok(improve::behavior_clone(behavior)),
        ImprovementSpec::EasyBcq { m, mode, anchor } => {
            let anchor = match anchor {
                BcqAnchor::Previous => previous,
                BcqAnchor::Behavior => behavior,
            };
            match mode {
                BcqMode::Exact => improve::easy_bcq(q_hat, anchor, m),
                BcqMode::Sampled => improve::easy_bcq_sampled(q_hat, anchor, m, rng),
            }
        }
        ImprovementSpec::ReverseKl { alpha } => improve::reverse_kl(q_hat, behavior, alpha),
        ImprovementSpec::ExpWeighted { tau, clip } => {
            improve::exp_weighted(q_hat, dataset, behavior, tau, clip)
        }
    }
}

/// Runs OAMPI on `dataset`, scoring every iterate exactly in `mdp`.
///
/// `oracle_behavior` is required when `config.behavior_source` is
/// [`BehaviorSource::Oracle`]. The evaluation step uses `mdp` only for its
/// transitions (when configured) and discount; rewards always come from the
/// data. The iterative variant starts from a converged estimate of the
/// behavior's Q function.
pub fn run(
    mdp: &TabularMdp,
    dataset: &Dataset,
    oracle_behavior: Option<&Policy>,
    config: &OampiConfig,
) -> Result<RunResult> {
    drive(mdp, dataset, oracle_behavior, config, true)
}

/// Like [`run`] but keeps and scores only the final iterate, so
/// `iterations` has a single record. The final policy and `J` are identical
/// to those of [`run`]; sweeps use this to skip scoring intermediate iterates.
pub fn run_final(
    mdp: &TabularMdp,
    dataset: &Dataset,
    oracle_behavior: Option<&Policy>,
    config: &OampiConfig,
) -> Result<RunResult> {
    drive(mdp, dataset, oracle_behavior, config, false)
}

fn drive(
    mdp: &TabularMdp,
    dataset: &Dataset,
    oracle_behavior: Option<&Policy>,
    config: &OampiConfig,
    record_all: bool,
) -> Result<RunResult> {
    config.validate()?;
    let model = fit_empirical(dataset, mdp.n_states(), mdp.n_actions())?;
    let behavior = resolve_behavior(config.behavior_source, &model, oracle_behavior)?;
    let mut rng = child_rng(config.seed, streams::RUN);
    let j_behavior = j_value(mdp, &behavior)?;

    let mut previous_q = match config.variant {
        Variant::Iterative => {
            let pretrain = EvalConfig {
                n_sweeps: 0,
                warm_start: WarmStart::RewardInit,
                ..config.eval
            };
            Some(evaluate_offline(&model, Some(mdp), &behavior, &pretrain, None)?)
        }
        _ => None,
    };

    let n_iterations = config.iterations();
    let mut policy = behavior.clone();
    let mut iterations = Vec::with_capacity(if record_all { n_iterations } else { 1 });
    for k in 1..=n_iterations {
        let q_init = match (config.eval.warm_start, previous_q.take()) {
            (WarmStart::PreviousQ, Some(q)) => q,
            _ => QTable::from_raw(model.n_states, model.n_actions, model.reward_hat.clone()),
        };
        let eval = EvalConfig {
            warm_start: WarmStart::PreviousQ,
            ..config.eval
        };
        let q_hat = evaluate_offline(&model, Some(mdp), &policy, &eval, Some(&q_init))?;
        let target = improve_step(&config.improvement, &q_hat, &behavior, &policy, dataset, &mut rng)?;
        let next = if config.step_size == 1.0 {
            target
        } else {
            mix_policies(&target, &policy, config.step_size)?
        };
        if record_all || k == n_iterations {
            let j = j_value(mdp, &next)?;
            iterations.push(IterationRecord {
                k,
                q_init,
                q_hat: q_hat.clone(),
                policy: next.clone(),
                j,
            });
        }
        previous_q = Some(q_hat);
        policy = next;
    }

    Ok(RunResult {
        variant: config.variant,
        improvement: config.improvement,
        behavior,
        j_behavior,
        iterations,
        model,
        diagnostics: Vec::new(),
        wall_clock: None,
    })
}

/// One `(hyperparameter, seed)` cell of a sweep.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SweepCell {
    pub index: usize,
    pub hyperparameter: f64,
    pub seed_index: usize,
}

/// Cells in row-major `(hyperparameter, seed)` order.
pub fn sweep_cells(grid: &[f64], n_seeds: usize) -> Vec<SweepCell> {
    grid.iter()
        .enumerate()
        .flat_map(|(h, &value)| {
            (0..n_seeds).map(move |seed_index| SweepCell {
                index: h * n_seeds + seed_index,
                hyperparameter: value,
                seed_index,
            })
        })
        .collect()
}

/// Configuration of one cell: the base config with the cell's hyperparameter
/// and a seed derived from the base seed and the cell index.
pub fn cell_config(base: &OampiConfig, cell: &SweepCell) -> Result<OampiConfig> {
    Ok(OampiConfig {
        improvement: base.improvement.with_hyperparameter(cell.hyperparameter)?,
        seed: derive_seed(base.seed, cell.index as u64),
        ..*base
    })
}

/// Final exact return of one sweep cell.
pub fn run_sweep_cell(
    mdp: &TabularMdp,
    dataset: &Dataset,
    oracle_behavior: Option<&Policy>,
    base: &OampiConfig,
    cell: &SweepCell,
) -> Result<f64> {
    let config = cell_config(base, cell)?;
    Ok(run_final(mdp, dataset, oracle_behavior, &config)?.final_j())
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepEntry {
    pub hyperparameter: f64,
    /// Final `J` per seed.
    pub returns: Vec<f64>,
    pub mean: f64,
    /// Sample standard deviation across seeds (0 for a single seed).
    pub std: f64,
    pub min: f64,
    pub max: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepReport {
    pub entries: Vec<SweepEntry>,
    /// Index into `entries` of the best mean return; ties go to the earlier value.
    pub best: usize,
}

impl SweepReport {
    /// Summarizes final returns listed in [`sweep_cells`] order.
    pub fn from_returns(grid: &[f64], n_seeds: usize, returns: &[f64]) -> Result<Self> {
        if grid.is_empty() || n_seeds == 0 {
            return Err(Error::InvalidArgument("sweep needs a grid value and a seed".into()));
        }
        check_dim("sweep returns", grid.len() * n_seeds, returns.len())?;
        let entries: Vec<SweepEntry> = grid
            .iter()
            .zip(returns.chunks(n_seeds))
            .map(|(&hyperparameter, js)| {
                let mean = js.iter().sum::<f64>() / n_seeds as f64;
                let std = if n_seeds > 1 {
                    math::sqrt(
                        js.iter().map(|j| (j - mean) * (j - mean)).sum::<f64>()
                            / (n_seeds - 1) as f64,
                    )
                } else {
                    0.0
                };
                SweepEntry {
                    hyperparameter,
                    returns: js.to_vec(),
                    mean,
                    std,
                    min: js.iter().copied().fold(f64::INFINITY, f64::min),
                    max: js.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                }
            })
            .collect();
        let mut best = 0;
        for (i, e) in entries.iter().enumerate() {
            if e.mean > entries[best].mean {
                best = i;
            }
        }
        Ok(Self { entries, best })
    }

    pub fn best_hyperparameter(&self) -> f64 {
        self.entries[self.best].hyperparameter
    }

    pub fn best_entry(&self) -> &SweepEntry {
        &self.entries[self.best]
    }
}

/// Runs every `(hyperparameter, seed)` cell sequentially and selects the
/// hyperparameter with the best mean final return.
pub fn sweep(
    mdp: &TabularMdp,
    dataset: &Dataset,
    oracle_behavior: Option<&Policy>,
    base: &OampiConfig,
    grid: &[f64],
    n_seeds: usize,
) -> Result<SweepReport> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("sweep grid is empty".into()));
    }
    let returns = sweep_cells(grid, n_seeds)
        .iter()
        .map(|cell| run_sweep_cell(mdp, dataset, oracle_behavior, base, cell))
        .collect::<Result<Vec<f64>>>()?;
    SweepReport::from_returns(grid, n_seeds, &returns)
}

/// Hyperparameter grids swept for each operator.
pub mod grids {
    pub const REVERSE_KL_ALPHA: [f64; 6] = [0.03, 0.1, 0.3, 1.0, 3.0, 10.0];
    pub const EASY_BCQ_M: [f64; 6] = [2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
    pub const EXP_WEIGHTED_TAU: [f64; 6] = [0.1, 0.3, 1.0, 3.0, 10.0, 30.0];
}
