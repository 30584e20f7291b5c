//! Diagnostics: evaluation error, distribution shift, overestimation, and
//! exact checks of the performance-difference and conservative-improvement
//! lemmas.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::{Dataset, EmpiricalModel};
use crate::error::{check_dim, Error, Result};
use crate::eval::{evaluate_offline, EvalConfig, TransitionSource};
use crate::improve::kl_row;
use crate::math;
use crate::mdp::{discounted_visitation, exact_q, Policy, QTable, TabularMdp, EXACT_TOL};
use crate::oampi::RunResult;

/// Bins in every overestimation histogram.
pub const HISTOGRAM_BINS: usize = 64;

const WEIGHT_SUM_TOL: f64 = 1e-9;

fn check_distribution(what: &str, weights: &[f64]) -> Result<()> {
    if weights.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(Error::InvalidArgument(format!("{what} must be finite and nonnegative")));
    }
    let total: f64 = weights.iter().sum();
    if (total - 1.0).abs() > WEIGHT_SUM_TOL {
        return Err(Error::InvalidArgument(format!("{what} sum to {total}, expected 1")));
    }
    Ok(())
}

/// Empirical `(s, a)` frequencies of the dataset, row-major.
pub fn dataset_sa_weights(model: &EmpiricalModel) -> Vec<f64> {
    let total: u64 = model.count_sa.iter().sum();
    model
        .count_sa
        .iter()
        .map(|&c| if total == 0 { 0.0 } else { c as f64 / total as f64 })
        .collect()
}

/// Empirical state frequencies of the dataset.
pub fn dataset_state_weights(model: &EmpiricalModel) -> Vec<f64> {
    let total: u64 = model.count_sa.iter().sum();
    (0..model.n_states)
        .map(|s| if total == 0 { 0.0 } else { model.state_count(s) as f64 / total as f64 })
        .collect()
}

/// `(s, a)` weights `d^beta(s) beta(a|s)` under the true dynamics.
pub fn visitation_sa_weights(mdp: &TabularMdp, beta: &Policy) -> Result<Vec<f64>> {
    let d = discounted_visitation(mdp, beta, EXACT_TOL)?;
    let n_actions = mdp.n_actions();
    Ok((0..mdp.n_states() * n_actions)
        .map(|i| d[i / n_actions] * beta.probs()[i])
        .collect())
}

/// Weighted mean squared error `sum w(s, a) (q_hat - q_true)^2`.
pub fn evaluation_mse(q_hat: &QTable, q_true: &QTable, weights: &[f64]) -> Result<f64> {
    q_hat.check_shape(q_true.n_states(), q_true.n_actions())?;
    check_dim("mse weights", q_true.values().len(), weights.len())?;
    check_distribution("mse weights", weights)?;
    Ok(q_hat
        .values()
        .iter()
        .zip(q_true.values())
        .zip(weights)
        .map(|((a, b), w)| w * (a - b) * (a - b))
        .sum())
}

/// `sum_s w(s) KL(pi(.|s) || beta(.|s))`; states with zero weight are ignored.
pub fn policy_kl(pi: &Policy, beta: &Policy, state_weights: &[f64]) -> Result<f64> {
    check_dim("kl policy states", beta.n_states(), pi.n_states())?;
    check_dim("kl policy actions", beta.n_actions(), pi.n_actions())?;
    check_dim("kl state weights", pi.n_states(), state_weights.len())?;
    check_distribution("kl state weights", state_weights)?;
    Ok((0..pi.n_states())
        .filter(|&s| state_weights[s] > 0.0)
        .map(|s| state_weights[s] * kl_row(pi.row(s), beta.row(s)))
        .sum())
}

/// Fixed-width histogram over `[lo, hi]`; the last bin is closed.
#[derive(Clone, Debug, PartialEq)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    /// `bins` equal bins spanning the observed range of `values`. A
    /// degenerate range is widened to `value +/- 0.5`.
    pub fn observed(values: &[f64], bins: usize) -> Self {
        let bins = bins.max(1);
        let (mut lo, mut hi) = values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
        if values.is_empty() {
            lo = 0.0;
            hi = 0.0;
        }
        if hi <= lo {
            lo -= 0.5;
            hi += 0.5;
        }
        let mut counts = vec![0u64; bins];
        let width = (hi - lo) / bins as f64;
        for &v in values {
            let idx = ((v - lo) / width) as usize;
            counts[idx.min(bins - 1)] += 1;
        }
        Self { lo, hi, counts }
    }

    /// Bin edges, `counts.len() + 1` of them.
    pub fn edges(&self) -> Vec<f64> {
        let n = self.counts.len();
        (0..=n)
            .map(|i| self.lo + (self.hi - self.lo) * i as f64 / n as f64)
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OverestimationSummary {
    /// `q_hat(s, a) - q_true(s, a)` per sampled pair, in input order.
    pub differences: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation of the differences.
    pub std: f64,
    pub histogram: Histogram,
}

impl OverestimationSummary {
    /// Standard error of the mean.
    pub fn std_error(&self) -> f64 {
        self.std / math::sqrt(self.differences.len() as f64)
    }
}

/// Overestimation `q_hat - q_true` at each sampled `(s, a)` pair.
pub fn overestimation(
    q_hat: &QTable,
    q_true: &QTable,
    pairs: &[(usize, usize)],
) -> Result<OverestimationSummary> {
    q_hat.check_shape(q_true.n_states(), q_true.n_actions())?;
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("overestimation needs at least one pair".into()));
    }
    let mut differences = Vec::with_capacity(pairs.len());
    for &(s, a) in pairs {
        if s >= q_true.n_states() || a >= q_true.n_actions() {
            return Err(Error::InvalidArgument(format!("pair ({s}, {a}) out of range")));
        }
        differences.push(q_hat.get(s, a) - q_true.get(s, a));
    }
    let n = differences.len() as f64;
    let mean = differences.iter().sum::<f64>() / n;
    let var = differences.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    let histogram = Histogram::observed(&differences, HISTOGRAM_BINS);
    Ok(OverestimationSummary {
        differences,
        mean,
        std: math::sqrt(var),
        histogram,
    })
}

/// Every `(s, a)` pair of the dataset, with multiplicity.
pub fn dataset_pairs(dataset: &Dataset) -> Vec<(usize, usize)> {
    dataset.steps().map(|step| (step.state, step.action)).collect()
}

/// `Q(s, pi) - Q(s, beta)` per state.
fn advantage_of(q_beta: &QTable, pi: &Policy, beta: &Policy) -> Vec<f64> {
    let v_pi = q_beta.state_values(pi).values;
    let v_beta = q_beta.state_values(beta).values;
    v_pi.iter().zip(&v_beta).map(|(a, b)| a - b).collect()
}

fn check_pair(mdp: &TabularMdp, pi: &Policy, beta: &Policy) -> Result<()> {
    mdp.check_policy(pi)?;
    mdp.check_policy(beta)
}

/// Both sides of the performance difference lemma:
/// `J(pi) - J(beta)` and `E_{s~d^pi}[Q^beta(s, pi) - Q^beta(s, beta)] / (1 - gamma)`.
pub fn performance_difference(mdp: &TabularMdp, pi: &Policy, beta: &Policy) -> Result<(f64, f64)> {
    check_pair(mdp, pi, beta)?;
    let q_beta = exact_q(mdp, beta, EXACT_TOL)?;
    let q_pi = exact_q(mdp, pi, EXACT_TOL)?;
    let j = |q: &QTable, p: &Policy| -> f64 {
        q.state_values(p)
            .values
            .iter()
            .zip(mdp.initial_dist())
            .map(|(v, rho)| v * rho)
            .sum()
    };
    let lhs = j(&q_pi, pi) - j(&q_beta, beta);
    let d_pi = discounted_visitation(mdp, pi, EXACT_TOL)?;
    let adv = advantage_of(&q_beta, pi, beta);
    let rhs = d_pi.iter().zip(&adv).map(|(d, a)| d * a).sum::<f64>() / (1.0 - mdp.discount());
    Ok((lhs, rhs))
}

/// Total variation distance per state, half the L1 distance.
pub fn total_variation(pi: &[f64], beta: &[f64]) -> f64 {
    0.5 * pi.iter().zip(beta).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// The realized improvement `J(pi) - J(beta)` and the conservative lower bound
/// `E_{s~d^beta}[A(s) - 2 gamma max|A| TV(s) / (1 - gamma)] / (1 - gamma)`
/// with `A(s) = Q^beta(s, pi) - Q^beta(s, beta)`.
pub fn conservative_bound(mdp: &TabularMdp, pi: &Policy, beta: &Policy) -> Result<(f64, f64)> {
    check_pair(mdp, pi, beta)?;
    let gamma = mdp.discount();
    let q_beta = exact_q(mdp, beta, EXACT_TOL)?;
    let adv = advantage_of(&q_beta, pi, beta);
    let adv_sup = adv.iter().fold(0.0f64, |m, a| m.max(a.abs()));
    let d_beta = discounted_visitation(mdp, beta, EXACT_TOL)?;
    let penalty = 2.0 * gamma * adv_sup / (1.0 - gamma);
    let lower = (0..mdp.n_states())
        .map(|s| d_beta[s] * (adv[s] - penalty * total_variation(pi.row(s), beta.row(s))))
        .sum::<f64>()
        / (1.0 - gamma);
    let improvement = crate::mdp::j_value(mdp, pi)? - crate::mdp::j_value(mdp, beta)?;
    Ok((improvement, lower))
}

/// The per-policy diagnostic record.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagReport {
    pub mse: f64,
    pub kl_to_behavior: f64,
    pub overestimation: OverestimationSummary,
    /// `(lhs, rhs)` of the performance difference lemma, then
    /// `(improvement, lower_bound)` of the conservative bound.
    pub lemma_checks: Vec<(f64, f64)>,
}

/// Diagnostics for `pi_k` of a run.
#[derive(Clone, Debug, PartialEq)]
pub struct PolicyDiagnostics {
    pub k: usize,
    pub j: f64,
    pub report: DiagReport,
}

/// Which distribution weighs the MSE and KL terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum DiagWeights {
    /// Empirical frequencies of the training data.
    #[default]
    Dataset,
    /// Exact discounted visitation of the behavior policy.
    Visitation,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiagOptions {
    pub weights: DiagWeights,
    /// Transitions used to fit `Q_hat^{pi_k}` on the training data.
    pub transition_source: TransitionSource,
    /// Annotate `pi_0, pi_every, pi_{2 every}, ...` and always `pi_K`.
    pub every: usize,
    pub lemma_checks: bool,
}

impl Default for DiagOptions {
    fn default() -> Self {
        Self {
            weights: DiagWeights::Dataset,
            transition_source: TransitionSource::Oracle,
            every: 1,
            lemma_checks: true,
        }
    }
}

/// Diagnostics of one policy against a training model: `Q_hat^pi` is fit to
/// convergence on `model` and compared with the exact `Q^pi`.
pub fn diagnose_policy(
    mdp: &TabularMdp,
    model: &EmpiricalModel,
    pairs: &[(usize, usize)],
    pi: &Policy,
    beta: &Policy,
    options: &DiagOptions,
) -> Result<DiagReport> {
    let eval = EvalConfig {
        transition_source: options.transition_source,
        ..EvalConfig::convergent()
    };
    let q_hat = evaluate_offline(model, Some(mdp), pi, &eval, None)?;
    let q_true = exact_q(mdp, pi, EXACT_TOL)?;
    let (sa_weights, state_weights) = match options.weights {
        DiagWeights::Dataset => (dataset_sa_weights(model), dataset_state_weights(model)),
        DiagWeights::Visitation => (
            visitation_sa_weights(mdp, beta)?,
            discounted_visitation(mdp, beta, EXACT_TOL)?,
        ),
    };
    let lemma_checks = if options.lemma_checks {
        vec![performance_difference(mdp, pi, beta)?, conservative_bound(mdp, pi, beta)?]
    } else {
        Vec::new()
    };
    Ok(DiagReport {
        mse: evaluation_mse(&q_hat, &q_true, &sa_weights)?,
        kl_to_behavior: policy_kl(pi, beta, &state_weights)?,
        overestimation: overestimation(&q_hat, &q_true, pairs)?,
        lemma_checks,
    })
}

/// Fills `run.diagnostics` for the selected recorded policies among `pi_0..pi_K`.
pub fn annotate_run(
    run: &mut RunResult,
    mdp: &TabularMdp,
    dataset: &Dataset,
    options: &DiagOptions,
) -> Result<()> {
    let every = options.every.max(1);
    let pairs = dataset_pairs(dataset);
    let last = run.iterations.last().map_or(0, |r| r.k);
    let entries = core::iter::once((0, &run.behavior, run.j_behavior))
        .chain(run.iterations.iter().map(|r| (r.k, &r.policy, r.j)));
    let mut out = Vec::new();
    for (k, pi, j) in entries {
        if k % every != 0 && k != last {
            continue;
        }
        let report = diagnose_policy(mdp, &run.model, &pairs, pi, &run.behavior, options)?;
        out.push(PolicyDiagnostics { k, j, report });
    }
    run.diagnostics = out;
    Ok(())
}
