//! Builds environments from configs and executes experiments.
//!
//! Work is fanned out over a thread pool; every job owns its RNG streams and
//! results are merged in job order, so outputs do not depend on scheduling.
//! Nothing here touches the filesystem.

use std::path::PathBuf;

use oampi_core::diag::{annotate_run, DiagOptions, DiagWeights, PolicyDiagnostics};
use oampi_core::eval::{epsilon_beta, evaluate_offline, q_tilde};
use oampi_core::mdp::{
    exact_q, mix_policies, optimal_policy_with, suboptimal_policy, EXACT_TOL,
};
use oampi_core::oampi::{run, run_final, SweepReport};
use oampi_core::rng::{child_rng, derive_seed, streams};
use oampi_core::{
    build_gridworld, collect, mix_datasets, BcqAnchor, BcqMode, BehaviorSource, Dataset,
    EvalConfig, GridSpec, ImprovementSpec, OampiConfig, Policy, QTable, RunResult,
    SuboptimalPolicy, TabularMdp, TieBreak, TransitionSource, Variant, WarmStart,
};
use rayon::prelude::*;
use serde::Serialize;

use crate::config::*;
use crate::dataset_io;
use crate::error::LabError;
use crate::output::{num, opt_num, policy_table, q_table, Artifact, CsvTable, SeedTag};

/// The true MDP and the data-collecting policy of an experiment.
#[derive(Clone, Debug)]
pub struct Environment {
    pub spec: GridSpec,
    pub mdp: TabularMdp,
    /// The primary behavior policy.
    pub behavior: Policy,
}

fn grid_spec(env: &EnvironmentConfig) -> GridSpec {
    let mut spec = GridSpec::corner(env.width, env.height);
    spec.good_reward = env.good_reward;
    spec.noisy_mean = env.noisy_mean;
    spec.noisy_std = env.noisy_std;
    spec
}

fn base_policy(
    base: BasePolicy,
    behavior: &BehaviorConfig,
    spec: &GridSpec,
    mdp: &TabularMdp,
) -> oampi_core::Result<Policy> {
    match base {
        BasePolicy::Uniform => Ok(Policy::uniform(mdp.n_states(), mdp.n_actions())),
        BasePolicy::Optimal => {
            let ties = match behavior.optimal_ties {
                OptimalTies::Uniform => TieBreak::Uniform,
                OptimalTies::LowestIndex => TieBreak::LowestIndex,
            };
            optimal_policy_with(mdp, EXACT_TOL, ties)
        }
        BasePolicy::Suboptimal => {
            let kind = match behavior.suboptimal_policy {
                SuboptimalKind::HalfDownHalfLeft => SuboptimalPolicy::HalfDownHalfLeft,
                SuboptimalKind::AllDown => SuboptimalPolicy::AllDown,
                SuboptimalKind::AllLeft => SuboptimalPolicy::AllLeft,
            };
            suboptimal_policy(spec, kind)
        }
    }
}

/// `weight * base + (1 - weight) * uniform`.
fn behavior_from(
    base: BasePolicy,
    behavior: &BehaviorConfig,
    spec: &GridSpec,
    mdp: &TabularMdp,
) -> oampi_core::Result<Policy> {
    let pi = base_policy(base, behavior, spec, mdp)?;
    mix_policies(
        &pi,
        &Policy::uniform(mdp.n_states(), mdp.n_actions()),
        behavior.weight,
    )
}

pub fn build_environment(config: &ExperimentConfig) -> Result<Environment, LabError> {
    let spec = grid_spec(&config.environment);
    let mdp = build_gridworld(&spec, config.environment.discount)?;
    let behavior = behavior_from(config.behavior.base, &config.behavior, &spec, &mdp)?;
    Ok(Environment {
        spec,
        mdp,
        behavior,
    })
}

/// The training data of `seed` for a trajectory experiment.
pub fn seed_dataset(
    env: &Environment,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<Dataset, LabError> {
    Ok(collect(
        &env.mdp,
        &env.behavior,
        config.dataset.n_trajectories,
        config.dataset.horizon,
        &mut child_rng(seed, streams::DATA),
    )?)
}

fn core_variant(v: VariantName) -> Variant {
    match v {
        VariantName::OneStep => Variant::OneStep,
        VariantName::MultiStep => Variant::MultiStep,
        VariantName::Iterative => Variant::Iterative,
    }
}

/// Hyperparameter values to run; a single `None` for behavior cloning.
pub fn hyperparams(alg: &AlgorithmConfig) -> Vec<Option<f64>> {
    if alg.operator == OperatorName::BehaviorClone {
        vec![None]
    } else {
        alg.hyperparams.iter().copied().map(Some).collect()
    }
}

fn improvement(alg: &AlgorithmConfig, hyperparam: Option<f64>) -> ImprovementSpec {
    let h = hyperparam.unwrap_or(f64::NAN);
    match alg.operator {
        OperatorName::BehaviorClone => ImprovementSpec::BehaviorClone,
        OperatorName::EasyBcq => ImprovementSpec::EasyBcq {
            m: h as usize,
            mode: match alg.bcq_mode {
                BcqModeName::Exact => BcqMode::Exact,
                BcqModeName::Sampled => BcqMode::Sampled,
            },
            anchor: match alg.bcq_anchor {
                BcqAnchorName::Previous => BcqAnchor::Previous,
                BcqAnchorName::Behavior => BcqAnchor::Behavior,
            },
        },
        OperatorName::ReverseKl => ImprovementSpec::ReverseKl { alpha: h },
        OperatorName::ExpWeighted => ImprovementSpec::ExpWeighted {
            tau: h,
            clip: alg.weight_clip,
        },
    }
}

fn transition_source(s: Source) -> TransitionSource {
    match s {
        Source::Oracle => TransitionSource::Oracle,
        Source::Empirical => TransitionSource::Empirical,
    }
}

/// The core run configuration of one `(variant, hyperparameter)` pair.
pub fn oampi_config(
    alg: &AlgorithmConfig,
    variant: VariantName,
    hyperparam: Option<f64>,
    seed: u64,
) -> OampiConfig {
    let transitions = transition_source(alg.transition_source);
    let eval = match variant {
        VariantName::Iterative => EvalConfig {
            transition_source: transitions,
            ..EvalConfig::single_warm_sweep()
        },
        _ => EvalConfig {
            transition_source: transitions,
            n_sweeps: alg.eval_sweeps,
            warm_start: WarmStart::RewardInit,
            ..EvalConfig::convergent()
        },
    };
    OampiConfig {
        variant: core_variant(variant),
        k_iterations: match variant {
            VariantName::OneStep => 1,
            VariantName::MultiStep => alg.k_iterations,
            VariantName::Iterative => alg.iterative_k,
        },
        eval,
        improvement: improvement(alg, hyperparam),
        behavior_source: match alg.behavior_source {
            Source::Oracle => BehaviorSource::Oracle,
            Source::Empirical => BehaviorSource::Empirical,
        },
        step_size: alg.step_size,
        seed,
    }
}

pub fn diag_options(config: &ExperimentConfig) -> DiagOptions {
    DiagOptions {
        weights: match config.diagnostics.weights {
            WeightName::Dataset => DiagWeights::Dataset,
            WeightName::Visitation => DiagWeights::Visitation,
        },
        transition_source: transition_source(config.algorithm.transition_source),
        every: config.diagnostics.every,
        lemma_checks: config.diagnostics.lemma_checks,
    }
}

fn pool(threads: usize) -> Result<rayon::ThreadPool, LabError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| LabError::Runtime(format!("cannot start worker pool: {e}")))
}

fn variant_label(v: VariantName) -> &'static str {
    core_variant(v).name()
}

fn run_dir(variant: VariantName, hyperparam: Option<f64>) -> String {
    match hyperparam {
        Some(h) => format!("{}_{}", variant_label(variant), num(h)),
        None => variant_label(variant).to_owned(),
    }
}

/// Per-iterate numbers of one run, kept after the heavy tables are written.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub variant: VariantName,
    pub hyperparam: Option<f64>,
    /// `J(pi_0), ..., J(pi_K)`.
    pub j_curve: Vec<f64>,
    /// `(k, mse, kl, overestimation mean)` of each diagnosed iterate.
    pub diagnostics: Vec<(usize, f64, f64, f64)>,
}

#[derive(Clone, Debug)]
pub struct SeedOutcome {
    pub seed: u64,
    pub runs: Vec<RunSummary>,
    pub artifacts: Vec<Artifact>,
}

fn summarize(variant: VariantName, hyperparam: Option<f64>, result: &RunResult) -> RunSummary {
    RunSummary {
        variant,
        hyperparam,
        j_curve: result.j_curve(),
        diagnostics: result
            .diagnostics
            .iter()
            .map(|d: &PolicyDiagnostics| {
                (
                    d.k,
                    d.report.mse,
                    d.report.kl_to_behavior,
                    d.report.overestimation.mean,
                )
            })
            .collect(),
    }
}

fn reward_table(mdp: &TabularMdp) -> QTable {
    QTable::new(mdp.n_states(), mdp.n_actions(), mdp.reward_mean().to_vec())
        .expect("reward table has MDP shape")
}

/// Q, error-propagation and policy tables of every iterate, plus the
/// overestimation histograms of the diagnosed iterates.
fn run_tables(
    env: &Environment,
    hash: &str,
    seed: u64,
    dir: &str,
    result: &RunResult,
    eval: &EvalConfig,
) -> Result<Vec<Artifact>, LabError> {
    let mdp = &env.mdp;
    let mut out = Vec::new();
    let eval = EvalConfig {
        warm_start: WarmStart::RewardInit,
        ..*eval
    };
    let q_beta_hat = evaluate_offline(&result.model, Some(mdp), &result.behavior, &eval, None)?;
    let eps = epsilon_beta(&result.model, mdp, &result.behavior, &q_beta_hat)?;
    let eps_table = QTable::new(mdp.n_states(), mdp.n_actions(), eps.epsilon.clone())?;
    let base = PathBuf::from(format!("seed_{seed}")).join(dir);
    out.push(q_table(hash, seed, &eps_table, base.join("epsilon.csv")));
    for (k, pi) in result.policies().enumerate() {
        let q = exact_q(mdp, pi, EXACT_TOL)?;
        let qt = q_tilde(mdp, pi, &eps, EXACT_TOL)?;
        out.push(policy_table(hash, seed, pi, base.join(format!("policy_{k}.csv"))));
        out.push(q_table(hash, seed, &q, base.join(format!("q_{k}.csv"))));
        out.push(q_table(hash, seed, &qt, base.join(format!("qtilde_{k}.csv"))));
    }
    let mut hist = CsvTable::new(
        hash,
        SeedTag::Single(seed),
        &["iteration", "bin", "lo", "hi", "count"],
    );
    for d in &result.diagnostics {
        let h = &d.report.overestimation.histogram;
        let edges = h.edges();
        for (b, count) in h.counts.iter().enumerate() {
            hist.row([
                d.k.to_string(),
                b.to_string(),
                num(edges[b]),
                num(edges[b + 1]),
                count.to_string(),
            ]);
        }
    }
    out.push(hist.finish(base.join("overestimation.csv")));
    Ok(out)
}

fn trajectory_seed(
    env: &Environment,
    config: &ExperimentConfig,
    dataset: Option<&Dataset>,
    hash: &str,
    seed: u64,
) -> Result<SeedOutcome, LabError> {
    let data = match dataset {
        Some(d) => d.clone(),
        None => seed_dataset(env, config, seed)?,
    };
    let mut artifacts = Vec::new();
    if config.dataset.export {
        artifacts.push(dataset_io::to_csv(
            &data,
            hash,
            seed,
            format!("seed_{seed}/dataset.csv"),
        ));
    }
    if config.diagnostics.tables {
        artifacts.push(q_table(
            hash,
            seed,
            &reward_table(&env.mdp),
            format!("seed_{seed}/reward.csv"),
        ));
    }
    let options = diag_options(config);
    let mut runs = Vec::new();
    for &variant in &config.algorithm.variants {
        for h in hyperparams(&config.algorithm) {
            let oc = oampi_config(&config.algorithm, variant, h, seed);
            let start = std::time::Instant::now();
            let mut result = run(&env.mdp, &data, Some(&env.behavior), &oc)?;
            annotate_run(&mut result, &env.mdp, &data, &options)?;
            result.wall_clock = Some(start.elapsed());
            if config.diagnostics.tables {
                artifacts.extend(run_tables(
                    env,
                    hash,
                    seed,
                    &run_dir(variant, h),
                    &result,
                    &oc.eval,
                )?);
            }
            runs.push(summarize(variant, h, &result));
        }
    }
    Ok(SeedOutcome {
        seed,
        runs,
        artifacts,
    })
}

/// Final-`J` statistics of one `(variant, hyperparameter)` pair across seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConfigSummary {
    pub variant: VariantName,
    pub hyperparam: Option<f64>,
    pub mean_j_curve: Vec<f64>,
    pub mean_final_j: f64,
    pub std_final_j: f64,
    /// Per iteration `k = 1..=K`: seeds whose best iterate (among `pi_1..pi_K`,
    /// earliest on ties) is `pi_k`.
    pub best_iterate_counts: Vec<usize>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TrajectorySummary {
    pub configurations: Vec<ConfigSummary>,
}

#[derive(Clone, Debug)]
pub struct TrajectoryOutcome {
    pub seeds: Vec<SeedOutcome>,
    pub summary: TrajectorySummary,
    pub artifacts: Vec<Artifact>,
}

fn best_iterate(curve: &[f64]) -> usize {
    let mut best = 1;
    for k in 2..curve.len() {
        if curve[k] > curve[best] {
            best = k;
        }
    }
    best
}

pub fn run_trajectory(
    config: &ExperimentConfig,
    seeds: &[u64],
    dataset: Option<&Dataset>,
    threads: usize,
) -> Result<TrajectoryOutcome, LabError> {
    let env = build_environment(config)?;
    let hash = config.content_hash();
    let outcomes: Vec<SeedOutcome> = pool(threads)?.install(|| {
        seeds
            .par_iter()
            .map(|&seed| trajectory_seed(&env, config, dataset, &hash, seed))
            .collect::<Result<_, _>>()
    })?;

    let mut runs_csv = CsvTable::new(
        &hash,
        SeedTag::Column,
        &[
            "preset",
            "seed",
            "variant",
            "hyperparam",
            "iteration",
            "J",
            "mse",
            "kl",
            "overestimation_mean",
        ],
    );
    for outcome in &outcomes {
        for r in &outcome.runs {
            for (k, j) in r.j_curve.iter().enumerate() {
                let diag = r.diagnostics.iter().find(|d| d.0 == k);
                runs_csv.row([
                    config.name.clone(),
                    outcome.seed.to_string(),
                    variant_label(r.variant).to_owned(),
                    opt_num(r.hyperparam),
                    k.to_string(),
                    num(*j),
                    opt_num(diag.map(|d| d.1)),
                    opt_num(diag.map(|d| d.2)),
                    opt_num(diag.map(|d| d.3)),
                ]);
            }
        }
    }

    let n_runs = outcomes.first().map_or(0, |o| o.runs.len());
    let mut configurations = Vec::with_capacity(n_runs);
    let mut sweep_csv = CsvTable::new(
        &hash,
        SeedTag::All(seeds),
        &["variant", "hyperparam", "n_seeds", "mean_final_J", "std_final_J", "best"],
    );
    for &variant in &config.algorithm.variants {
        let indices: Vec<usize> = (0..n_runs)
            .filter(|&i| outcomes[0].runs[i].variant == variant)
            .collect();
        let grid: Vec<f64> = indices
            .iter()
            .map(|&i| outcomes[0].runs[i].hyperparam.unwrap_or(f64::NAN))
            .collect();
        let finals: Vec<f64> = indices
            .iter()
            .flat_map(|&i| {
                outcomes
                    .iter()
                    .map(move |o| *o.runs[i].j_curve.last().expect("nonempty curve"))
            })
            .collect();
        let report = SweepReport::from_returns(&grid, outcomes.len(), &finals)?;
        for (pos, &i) in indices.iter().enumerate() {
            let first = &outcomes[0].runs[i];
            let len = first.j_curve.len();
            let mut mean_curve = vec![0.0; len];
            let mut best_counts = vec![0usize; len.saturating_sub(1)];
            for o in &outcomes {
                let curve = &o.runs[i].j_curve;
                for (m, j) in mean_curve.iter_mut().zip(curve) {
                    *m += j / outcomes.len() as f64;
                }
                if len > 1 {
                    best_counts[best_iterate(curve) - 1] += 1;
                }
            }
            let entry = &report.entries[pos];
            sweep_csv.row([
                variant_label(variant).to_owned(),
                opt_num(first.hyperparam),
                outcomes.len().to_string(),
                num(entry.mean),
                num(entry.std),
                (pos == report.best).to_string(),
            ]);
            configurations.push(ConfigSummary {
                variant,
                hyperparam: first.hyperparam,
                mean_j_curve: mean_curve,
                mean_final_j: entry.mean,
                std_final_j: entry.std,
                best_iterate_counts: best_counts,
            });
        }
    }

    let mut artifacts = vec![runs_csv.finish("runs.csv"), sweep_csv.finish("sweep.csv")];
    for o in &outcomes {
        artifacts.extend(o.artifacts.iter().cloned());
    }
    Ok(TrajectoryOutcome {
        seeds: outcomes,
        summary: TrajectorySummary { configurations },
        artifacts,
    })
}

/// Source datasets of a mixture experiment for one seed.
pub fn mixture_sources(
    env: &Environment,
    config: &ExperimentConfig,
    seed: u64,
) -> Result<(Dataset, Dataset), LabError> {
    let mix = config.mixture.as_ref().expect("validated mixture config");
    let secondary = behavior_from(
        mix.secondary,
        &BehaviorConfig {
            weight: 1.0,
            ..config.behavior.clone()
        },
        &env.spec,
        &env.mdp,
    )?;
    let primary = collect(
        &env.mdp,
        &env.behavior,
        mix.size,
        config.dataset.horizon,
        &mut child_rng(seed, streams::DATA),
    )?;
    let secondary = collect(
        &env.mdp,
        &secondary,
        mix.size,
        config.dataset.horizon,
        &mut child_rng(seed, streams::DATA_SECONDARY),
    )?;
    Ok((primary, secondary))
}

/// The mixed dataset of `seed` at grid position `p_index`.
pub fn mixture_dataset(
    primary: &Dataset,
    secondary: &Dataset,
    p: f64,
    size: usize,
    seed: u64,
    p_index: usize,
) -> Result<Dataset, LabError> {
    let mut rng = child_rng(derive_seed(seed, p_index as u64), streams::MIX);
    Ok(mix_datasets(primary, secondary, p, size, &mut rng)?)
}

/// One `(seed, p, variant, hyperparameter)` result of a mixture experiment.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MixtureCell {
    pub seed: u64,
    pub p_index: usize,
    pub variant: VariantName,
    pub hyperparam: Option<f64>,
    pub final_j: f64,
    pub mse: f64,
    pub kl: f64,
    pub overestimation_mean: f64,
}

/// The tuned result of one variant at one `p`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TunedEntry {
    pub p: f64,
    pub variant: VariantName,
    pub hyperparam: Option<f64>,
    pub mean_j: f64,
    pub std_j: f64,
    /// Final `J` per seed at the tuned hyperparameter, in seed order.
    pub per_seed: Vec<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct MixtureSummary {
    pub p_grid: Vec<f64>,
    pub tuned: Vec<TunedEntry>,
    /// Per `p`: seeds where the iterative tuned `J` is at least the one-step tuned `J`.
    pub iterative_at_least_one_step: Vec<usize>,
    /// Per `p`: seeds where the one-step tuned `J` is at least the iterative tuned `J`.
    pub one_step_at_least_iterative: Vec<usize>,
    /// Smallest `p` at which the mean tuned one-step `J` reaches the iterative one.
    pub crossover_p: Option<f64>,
}

#[derive(Clone, Debug)]
pub struct MixtureOutcome {
    pub cells: Vec<MixtureCell>,
    pub summary: MixtureSummary,
    pub artifacts: Vec<Artifact>,
}

impl MixtureSummary {
    pub fn tuned(&self, p_index: usize, variant: VariantName) -> Option<&TunedEntry> {
        let p = self.p_grid[p_index];
        self.tuned.iter().find(|t| t.p == p && t.variant == variant)
    }
}

fn mixture_job(
    env: &Environment,
    config: &ExperimentConfig,
    seed: u64,
    p_index: usize,
    sources: &(Dataset, Dataset),
) -> Result<Vec<MixtureCell>, LabError> {
    let mix = config.mixture.as_ref().expect("validated mixture config");
    let data = mixture_dataset(
        &sources.0,
        &sources.1,
        mix.p_grid[p_index],
        mix.size,
        seed,
        p_index,
    )?;
    // Only the final policy is diagnosed.
    let options = DiagOptions {
        every: usize::MAX,
        ..diag_options(config)
    };
    let run_seed = derive_seed(seed, p_index as u64);
    let mut cells = Vec::new();
    for &variant in &config.algorithm.variants {
        for h in hyperparams(&config.algorithm) {
            let oc = oampi_config(&config.algorithm, variant, h, run_seed);
            let mut result = run_final(&env.mdp, &data, Some(&env.behavior), &oc)?;
            annotate_run(&mut result, &env.mdp, &data, &options)?;
            let last = result.diagnostics.last().expect("final iterate diagnosed");
            cells.push(MixtureCell {
                seed,
                p_index,
                variant,
                hyperparam: h,
                final_j: result.final_j(),
                mse: last.report.mse,
                kl: last.report.kl_to_behavior,
                overestimation_mean: last.report.overestimation.mean,
            });
        }
    }
    Ok(cells)
}

pub fn run_mixture(
    config: &ExperimentConfig,
    seeds: &[u64],
    threads: usize,
) -> Result<MixtureOutcome, LabError> {
    let mix = config.mixture.as_ref().expect("validated mixture config");
    let env = build_environment(config)?;
    let hash = config.content_hash();
    let pool = pool(threads)?;
    let sources: Vec<(Dataset, Dataset)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| mixture_sources(&env, config, seed))
            .collect::<Result<_, _>>()
    })?;
    let jobs: Vec<(usize, usize)> = (0..seeds.len())
        .flat_map(|s| (0..mix.p_grid.len()).map(move |p| (s, p)))
        .collect();
    let cells: Vec<MixtureCell> = pool
        .install(|| {
            jobs.par_iter()
                .map(|&(s, p)| mixture_job(&env, config, seeds[s], p, &sources[s]))
                .collect::<Result<Vec<_>, _>>()
        })?
        .into_iter()
        .flatten()
        .collect();

    let mut artifacts = Vec::new();
    if config.dataset.export {
        for (seed, (a, b)) in seeds.iter().zip(&sources) {
            artifacts.push(dataset_io::to_csv(a, &hash, *seed, format!("seed_{seed}/dataset_primary.csv")));
            artifacts.push(dataset_io::to_csv(b, &hash, *seed, format!("seed_{seed}/dataset_secondary.csv")));
        }
    }

    let mut cells_csv = CsvTable::new(
        &hash,
        SeedTag::Column,
        &["p", "seed", "variant", "hyperparam", "J", "mse", "kl", "overestimation_mean"],
    );
    let mut ordered = cells.clone();
    ordered.sort_by_key(|c| (c.p_index, c.seed, c.variant as u8));
    for c in &ordered {
        cells_csv.row([
            num(mix.p_grid[c.p_index]),
            c.seed.to_string(),
            variant_label(c.variant).to_owned(),
            opt_num(c.hyperparam),
            num(c.final_j),
            num(c.mse),
            num(c.kl),
            num(c.overestimation_mean),
        ]);
    }

    let grid: Vec<Option<f64>> = hyperparams(&config.algorithm);
    let grid_values: Vec<f64> = grid.iter().map(|h| h.unwrap_or(f64::NAN)).collect();
    let mut tuned = Vec::new();
    let mut summary_csv = CsvTable::new(
        &hash,
        SeedTag::All(seeds),
        &["p", "variant", "tuned_hyperparam", "mean_J", "std_J"],
    );
    for (p_index, &p) in mix.p_grid.iter().enumerate() {
        for &variant in &config.algorithm.variants {
            // Returns in hyperparameter-major, seed-minor order.
            let returns: Vec<f64> = grid
                .iter()
                .flat_map(|h| {
                    seeds.iter().map(move |&seed| (h, seed))
                })
                .map(|(h, seed)| {
                    cells
                        .iter()
                        .find(|c| {
                            c.p_index == p_index
                                && c.variant == variant
                                && c.seed == seed
                                && c.hyperparam == *h
                        })
                        .expect("every cell ran")
                        .final_j
                })
                .collect();
            let report = SweepReport::from_returns(&grid_values, seeds.len(), &returns)?;
            let best = report.best_entry();
            summary_csv.row([
                num(p),
                variant_label(variant).to_owned(),
                opt_num(grid[report.best]),
                num(best.mean),
                num(best.std),
            ]);
            tuned.push(TunedEntry {
                p,
                variant,
                hyperparam: grid[report.best],
                mean_j: best.mean,
                std_j: best.std,
                per_seed: best.returns.clone(),
            });
        }
    }

    let mut iterative_wins = Vec::new();
    let mut one_step_wins = Vec::new();
    let mut compare_csv = CsvTable::new(
        &hash,
        SeedTag::All(seeds),
        &[
            "p",
            "iterative_at_least_one_step",
            "one_step_at_least_iterative",
            "mean_one_step_minus_iterative",
        ],
    );
    let find = |p: f64, v: VariantName| {
        tuned
            .iter()
            .find(|t| t.p == p && t.variant == v)
            .expect("tuned entry exists")
    };
    let mut crossover_p = None;
    for &p in &mix.p_grid {
        let one = find(p, VariantName::OneStep);
        let it = find(p, VariantName::Iterative);
        let it_wins = it.per_seed.iter().zip(&one.per_seed).filter(|(i, o)| i >= o).count();
        let one_wins = it.per_seed.iter().zip(&one.per_seed).filter(|(i, o)| o >= i).count();
        if crossover_p.is_none() && one.mean_j >= it.mean_j {
            crossover_p = Some(p);
        }
        compare_csv.row([
            num(p),
            it_wins.to_string(),
            one_wins.to_string(),
            num(one.mean_j - it.mean_j),
        ]);
        iterative_wins.push(it_wins);
        one_step_wins.push(one_wins);
    }

    artifacts.insert(0, cells_csv.finish("mixture.csv"));
    artifacts.insert(1, summary_csv.finish("mixture_summary.csv"));
    artifacts.insert(2, compare_csv.finish("mixture_compare.csv"));
    Ok(MixtureOutcome {
        cells,
        summary: MixtureSummary {
            p_grid: mix.p_grid.clone(),
            tuned,
            iterative_at_least_one_step: iterative_wins,
            one_step_at_least_iterative: one_step_wins,
            crossover_p,
        },
        artifacts,
    })
}
