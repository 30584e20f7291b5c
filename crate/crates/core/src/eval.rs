//! Offline policy evaluation on the empirical model and the Bellman-error
//! decomposition of its estimates.
//!
//! Evaluation runs exact synchronous Bellman backups with the estimated
//! rewards, using either the true transitions or the estimated ones. The
//! error terms ([`epsilon_beta`], [`q_tilde`]) are laboratory diagnostics
//! computed against the true model.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::data::EmpiricalModel;
use crate::error::{Error, Result};
use crate::math;
use crate::mdp::{self, Policy, QTable, Stop, TabularMdp, Transitions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TransitionSource {
    /// True transitions of the MDP (the agent is given the dynamics).
    #[default]
    Oracle,
    /// Transition frequencies estimated from the dataset.
    Empirical,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum WarmStart {
    /// Start from the supplied previous estimate.
    PreviousQ,
    /// Start from the empirical rewards broadcast over `(s, a)`.
    #[default]
    RewardInit,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalConfig {
    pub transition_source: TransitionSource,
    /// Number of backups; 0 iterates until the sup-norm change is at most `tol`.
    pub n_sweeps: usize,
    pub tol: f64,
    pub warm_start: WarmStart,
    /// Discount used by the backups; `None` takes the MDP's discount.
    pub discount: Option<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self::convergent()
    }
}

impl EvalConfig {
    /// Evaluate to convergence from the empirical rewards.
    pub const fn convergent() -> Self {
        Self {
            transition_source: TransitionSource::Oracle,
            n_sweeps: 0,
            tol: 1e-12,
            warm_start: WarmStart::RewardInit,
            discount: None,
        }
    }

    /// Exactly `n` backups from the empirical rewards.
    pub const fn sweeps(n: usize) -> Self {
        Self {
            n_sweeps: n,
            ..Self::convergent()
        }
    }

    /// One backup warm-started from the previous estimate.
    pub const fn single_warm_sweep() -> Self {
        Self {
            n_sweeps: 1,
            warm_start: WarmStart::PreviousQ,
            ..Self::convergent()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) || !self.tol.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "evaluation tolerance {} must be positive",
                self.tol
            )));
        }
        if let Some(g) = self.discount {
            if !(0.0..1.0).contains(&g) {
                return Err(Error::InvalidArgument(format!(
                    "evaluation discount {g} must lie in [0, 1)"
                )));
            }
        }
        Ok(())
    }

    fn stop(&self) -> Stop {
        if self.n_sweeps == 0 {
            Stop::Tolerance(self.tol)
        } else {
            Stop::Sweeps(self.n_sweeps)
        }
    }
}

/// Per-`(s, a)` Bellman error of an estimate under the true model.
#[derive(Clone, Debug, PartialEq)]
pub struct ErrorTable {
    pub n_states: usize,
    pub n_actions: usize,
    pub epsilon: Vec<f64>,
}

impl ErrorTable {
    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.epsilon[s * self.n_actions + a]
    }

    pub fn max_abs_diff(&self, other: &ErrorTable) -> f64 {
        math::sup_diff(&self.epsilon, &other.epsilon)
    }
}

/// Transitions and discount used for backups under `config`.
fn backup_model<'a>(
    model: &'a EmpiricalModel,
    mdp: Option<&'a TabularMdp>,
    config: &EvalConfig,
) -> Result<(&'a Transitions, f64)> {
    if let Some(mdp) = mdp {
        model.check_shape(mdp.n_states(), mdp.n_actions())?;
    }
    let transitions = match (config.transition_source, mdp) {
        (TransitionSource::Oracle, Some(mdp)) => mdp.transitions(),
        (TransitionSource::Oracle, None) => {
            return Err(Error::InvalidArgument(
                "oracle transitions requested but no MDP was supplied".into(),
            ))
        }
        (TransitionSource::Empirical, _) => &model.transition_hat,
    };
    let discount = match (config.discount, mdp) {
        (Some(g), _) => g,
        (None, Some(mdp)) => mdp.discount(),
        (None, None) => {
            return Err(Error::InvalidArgument(
                "no discount configured and no MDP supplied".into(),
            ))
        }
    };
    Ok((transitions, discount))
}

/// The evaluation operator: Bellman backups of `policy` on the empirical rewards.
pub fn evaluate_offline(
    model: &EmpiricalModel,
    mdp: Option<&TabularMdp>,
    policy: &Policy,
    config: &EvalConfig,
    init: Option<&QTable>,
) -> Result<QTable> {
    config.validate()?;
    let (transitions, discount) = backup_model(model, mdp, config)?;
    let (n_states, n_actions) = (model.n_states, model.n_actions);
    crate::error::check_dim("policy states", n_states, policy.n_states())?;
    crate::error::check_dim("policy actions", n_actions, policy.n_actions())?;
    let start = match config.warm_start {
        WarmStart::RewardInit => model.reward_hat.clone(),
        WarmStart::PreviousQ => {
            let q = init.ok_or_else(|| {
                Error::InvalidArgument("warm start from previous Q requires an initial table".into())
            })?;
            q.check_shape(n_states, n_actions)?;
            q.values().to_vec()
        }
    };
    let q = mdp::iterate_policy_backup(
        transitions,
        &model.reward_hat,
        discount,
        policy,
        start,
        config.stop(),
    );
    Ok(QTable::from_raw(n_states, n_actions, q))
}

/// `eps(s, a) = q_hat(s, a) - r(s, a) - gamma E_{s'~P, a'~pi}[q_hat(s', a')]`
/// with the true reward and transitions.
pub fn epsilon_beta(
    model: &EmpiricalModel,
    mdp: &TabularMdp,
    policy: &Policy,
    q_hat: &QTable,
) -> Result<ErrorTable> {
    model.check_shape(mdp.n_states(), mdp.n_actions())?;
    mdp.check_policy(policy)?;
    q_hat.check_shape(mdp.n_states(), mdp.n_actions())?;
    let mut backed = vec![0.0; q_hat.values().len()];
    mdp::policy_backup(
        mdp.transitions(),
        mdp.reward_mean(),
        mdp.discount(),
        policy,
        q_hat.values(),
        &mut backed,
    );
    let epsilon = q_hat
        .values()
        .iter()
        .zip(&backed)
        .map(|(q, b)| q - b)
        .collect();
    Ok(ErrorTable {
        n_states: mdp.n_states(),
        n_actions: mdp.n_actions(),
        epsilon,
    })
}

/// Discounted accumulation of `eps` under `policy` and the true transitions.
pub fn q_tilde(mdp: &TabularMdp, policy: &Policy, eps: &ErrorTable, tol: f64) -> Result<QTable> {
    crate::error::check_dim("error table", mdp.n_states() * mdp.n_actions(), eps.epsilon.len())?;
    let aux = mdp.with_rewards(eps.epsilon.clone())?;
    mdp::exact_q(&aux, policy, tol)
}

/// Sup-norm change of one backup of `q` under the configured model.
pub fn bellman_residual(
    q: &QTable,
    policy: &Policy,
    model: &EmpiricalModel,
    mdp: Option<&TabularMdp>,
    config: &EvalConfig,
) -> Result<f64> {
    let (transitions, discount) = backup_model(model, mdp, config)?;
    q.check_shape(model.n_states, model.n_actions)?;
    let mut next = vec![0.0; q.values().len()];
    mdp::policy_backup(transitions, &model.reward_hat, discount, policy, q.values(), &mut next);
    Ok(math::sup_diff(q.values(), &next))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{collect, fit_empirical, Dataset, Step};
    use crate::mdp::{build_gridworld, exact_q, GridSpec, RewardNoise};
    use crate::rng::child_rng;

    fn step(state: usize, action: usize, reward: f64, next_state: usize) -> Step {
        Step {
            state,
            action,
            reward,
            next_state,
        }
    }

    /// 0 -> 1 -> 1 chain with a single action, true rewards (1, 0).
    fn chain() -> TabularMdp {
        TabularMdp::new(
            Transitions::deterministic(2, 1, &[1, 1]).unwrap(),
            vec![1.0, 0.0],
            vec![RewardNoise::None; 2],
            vec![0.5, 0.5],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn three_hand_backups() {
        let mdp = chain();
        let data = Dataset::new(vec![vec![step(0, 0, 1.0, 1), step(1, 0, 0.5, 1)]], "hand");
        let model = fit_empirical(&data, 2, 1).unwrap();
        let pi = Policy::uniform(2, 1);
        let q = evaluate_offline(&model, Some(&mdp), &pi, &EvalConfig::sweeps(3), None).unwrap();
        // Q0 = (1, .5); Q1 = (1.25, .75); Q2 = (1.375, .875); Q3 = (1.4375, .9375)
        assert_eq!(q.values(), &[1.4375, 0.9375]);
    }

    #[test]
    fn full_coverage_matches_exact() {
        let spec = GridSpec {
            noisy_std: 0.0,
            ..GridSpec::corner(4, 4)
        };
        let mdp = build_gridworld(&spec, 0.9).unwrap();
        let pi = Policy::uniform(16, 4);
        let data = collect(&mdp, &pi, 50, 50, &mut child_rng(0, 0)).unwrap();
        let model = fit_empirical(&data, 16, 4).unwrap();
        assert!(model.count_sa.iter().all(|&n| n > 0));
        let config = EvalConfig {
            tol: 1e-11,
            ..EvalConfig::convergent()
        };
        let q_hat = evaluate_offline(&model, Some(&mdp), &pi, &config, None).unwrap();
        let q = exact_q(&mdp, &pi, 1e-11).unwrap();
        assert!(q_hat.max_abs_diff(&q) < 1e-9);
        let eps = epsilon_beta(&model, &mdp, &pi, &q_hat).unwrap();
        assert!(eps.epsilon.iter().all(|e| e.abs() < 1e-9));
        // Empirical transitions of a deterministic grid equal the true ones.
        let emp = EvalConfig {
            transition_source: TransitionSource::Empirical,
            ..config
        };
        let q_emp = evaluate_offline(&model, Some(&mdp), &pi, &emp, None).unwrap();
        assert!(q_emp.max_abs_diff(&q) < 1e-9);
    }

    #[test]
    fn true_q_has_zero_bellman_error() {
        let mdp = chain();
        let pi = Policy::uniform(2, 1);
        let q = exact_q(&mdp, &pi, 1e-13).unwrap();
        let data = Dataset::new(vec![vec![step(0, 0, 3.0, 1)]], "x");
        let model = fit_empirical(&data, 2, 1).unwrap();
        let eps = epsilon_beta(&model, &mdp, &pi, &q).unwrap();
        assert!(eps.epsilon.iter().all(|e| e.abs() < 1e-12));
    }

    #[test]
    fn q_tilde_of_constant_error() {
        let mdp = chain();
        let pi = Policy::uniform(2, 1);
        let zero = ErrorTable {
            n_states: 2,
            n_actions: 1,
            epsilon: vec![0.0; 2],
        };
        assert!(q_tilde(&mdp, &pi, &zero, 1e-12).unwrap().values().iter().all(|&v| v == 0.0));
        let c = ErrorTable {
            epsilon: vec![0.25; 2],
            ..zero
        };
        let qt = q_tilde(&mdp, &pi, &c, 1e-13).unwrap();
        assert!(qt.values().iter().all(|v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn oracle_without_mdp_is_an_error() {
        let data = Dataset::new(vec![vec![step(0, 0, 1.0, 0)]], "x");
        let model = fit_empirical(&data, 1, 1).unwrap();
        let pi = Policy::uniform(1, 1);
        let err = evaluate_offline(&model, None, &pi, &EvalConfig::convergent(), None);
        assert!(matches!(err, Err(Error::InvalidArgument(_))));
        let emp = EvalConfig {
            transition_source: TransitionSource::Empirical,
            discount: Some(0.5),
            ..EvalConfig::convergent()
        };
        let q = evaluate_offline(&model, None, &pi, &emp, None).unwrap();
        assert!((q.get(0, 0) - 2.0).abs() < 1e-11);
        let warm = EvalConfig::single_warm_sweep();
        assert!(evaluate_offline(&model, Some(&chain_one()), &pi, &warm, None).is_err());
    }

    fn chain_one() -> TabularMdp {
        TabularMdp::new(
            Transitions::deterministic(1, 1, &[0]).unwrap(),
            vec![1.0],
            vec![RewardNoise::None],
            vec![1.0],
            0.5,
        )
        .unwrap()
    }

    #[test]
    fn residual_of_zero_table_is_max_reward() {
        let mdp = chain();
        let data = Dataset::new(vec![vec![step(0, 0, -2.0, 1), step(1, 0, 0.5, 1)]], "x");
        let model = fit_empirical(&data, 2, 1).unwrap();
        let pi = Policy::uniform(2, 1);
        let r = bellman_residual(&QTable::zeros(2, 1), &pi, &model, Some(&mdp), &EvalConfig::convergent())
            .unwrap();
        assert_eq!(r, 2.0);
        let config = EvalConfig {
            tol: 1e-10,
            ..EvalConfig::convergent()
        };
        let q = evaluate_offline(&model, Some(&mdp), &pi, &config, None).unwrap();
        assert!(bellman_residual(&q, &pi, &model, Some(&mdp), &config).unwrap() <= 1e-10);
    }
}
