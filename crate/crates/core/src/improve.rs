//! Policy improvement operators.
//!
//! Each operator maps a Q estimate to a new policy while a single
//! hyperparameter controls how far the result may move from the behavior
//! policy: the sample count `m` for Easy BCQ, the temperature `alpha` for
//! reverse-KL regularization, and the inverse temperature `tau` for
//! exponentially weighted imitation.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::Dataset;
use crate::error::{check_dim, Error, Result};
use crate::math;
use crate::mdp::{Policy, QTable};

/// Weight clip applied to exponentiated advantages before normalization.
pub const DEFAULT_WEIGHT_CLIP: f64 = 100.0;

/// How Easy BCQ produces its policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BcqMode {
    /// Exact action distribution of the best-of-`m` rule.
    #[default]
    Exact,
    /// One realized draw of `m` candidates per state (a point-mass policy).
    Sampled,
}

/// Which policy Easy BCQ draws its candidate actions from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum BcqAnchor {
    /// The previous iterate, as the update rule is written.
    #[default]
    Previous,
    /// The behavior policy at every iteration.
    Behavior,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ImprovementSpec {
    BehaviorClone,
    EasyBcq {
        m: usize,
        mode: BcqMode,
        anchor: BcqAnchor,
    },
    ReverseKl {
        alpha: f64,
    },
    ExpWeighted {
        tau: f64,
        clip: f64,
    },
}

impl ImprovementSpec {
    pub fn easy_bcq(m: usize) -> Self {
        Self::EasyBcq {
            m,
            mode: BcqMode::Exact,
            anchor: BcqAnchor::Previous,
        }
    }

    pub fn reverse_kl(alpha: f64) -> Self {
        Self::ReverseKl { alpha }
    }

    pub fn exp_weighted(tau: f64) -> Self {
        Self::ExpWeighted {
            tau,
            clip: DEFAULT_WEIGHT_CLIP,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Self::BehaviorClone => "behavior_clone",
            Self::EasyBcq { .. } => "easy_bcq",
            Self::ReverseKl { .. } => "reverse_kl",
            Self::ExpWeighted { .. } => "exp_weighted",
        }
    }

    /// The deviation-controlling hyperparameter, if the operator has one.
    pub fn hyperparameter(&self) -> Option<f64> {
        match *self {
            Self::BehaviorClone => None,
            Self::EasyBcq { m, .. } => Some(m as f64),
            Self::ReverseKl { alpha } => Some(alpha),
            Self::ExpWeighted { tau, .. } => Some(tau),
        }
    }

    /// Copy of this spec with its hyperparameter replaced by `value`.
    pub fn with_hyperparameter(&self, value: f64) -> Result<Self> {
        let spec = match *self {
            Self::BehaviorClone => {
                return Err(Error::InvalidArgument(
                    "behavior cloning has no hyperparameter to sweep".into(),
                ))
            }
            Self::EasyBcq { mode, anchor, .. } => {
                if value < 1.0 || libm::trunc(value) != value || value > usize::MAX as f64 {
                    return Err(Error::InvalidArgument(format!(
                        "Easy BCQ sample count {value} must be a positive integer"
                    )));
                }
                Self::EasyBcq {
                    m: value as usize,
                    mode,
                    anchor,
                }
            }
            Self::ReverseKl { .. } => Self::ReverseKl { alpha: value },
            Self::ExpWeighted { clip, .. } => Self::ExpWeighted { tau: value, clip },
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::BehaviorClone => Ok(()),
            Self::EasyBcq { m, .. } if m >= 1 => Ok(()),
            Self::EasyBcq { m, .. } => Err(Error::InvalidArgument(format!(
                "Easy BCQ sample count {m} must be at least 1"
            ))),
            Self::ReverseKl { alpha } => check_positive("alpha", alpha),
            Self::ExpWeighted { tau, clip } => {
                check_positive("tau", tau)?;
                check_positive("weight clip", clip)
            }
        }
    }
}

fn check_positive(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("{name} = {value} must be positive")))
    }
}

fn check_shapes(q: &QTable, policy: &Policy) -> Result<()> {
    check_dim("policy states", q.n_states(), policy.n_states())?;
    check_dim("policy actions", q.n_actions(), policy.n_actions())
}

/// Returns the estimated behavior policy unchanged.
pub fn behavior_clone(behavior_hat: &Policy) -> Policy {
    behavior_hat.clone()
}

/// Action indices ordered best-first by `q`, ties to the lower index.
fn rank_actions(q_row: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..q_row.len()).collect();
    order.sort_by(|&a, &b| q_row[b].total_cmp(&q_row[a]).then(a.cmp(&b)));
    order
}

/// Distribution of the best of `m` i.i.d. draws from `probs`, ranked by `q_row`.
///
/// The action at rank `i` wins iff every draw lands on rank `i` or worse and
/// at least one lands exactly on `i`, so its mass is `T_i^m - T_{i+1}^m`
/// where `T_i` is the probability of rank `i` or worse.
pub fn easy_bcq_row(q_row: &[f64], probs: &[f64], m: usize, out: &mut [f64]) {
    if m == 1 {
        out.copy_from_slice(probs);
        return;
    }
    let order = rank_actions(q_row);
    let mut tail_below = 0.0;
    let mut total = 0.0;
    for &a in order.iter().rev() {
        let tail = tail_below + probs[a];
        out[a] = if probs[a] > 0.0 {
            math::powi(tail, m) - math::powi(tail_below, m)
        } else {
            0.0
        };
        total += out[a];
        tail_below = tail;
    }
    out.iter_mut().for_each(|p| *p /= total);
}

/// Easy BCQ in closed form: per state, the exact law of "draw `m` actions
/// from `anchor`, take the one with the highest `q`".
pub fn easy_bcq(q: &QTable, anchor: &Policy, m: usize) -> Result<Policy> {
    check_shapes(q, anchor)?;
    ImprovementSpec::easy_bcq(m).validate()?;
    let n_actions = q.n_actions();
    let mut probs = vec![0.0; q.n_states() * n_actions];
    for (s, out) in probs.chunks_mut(n_actions).enumerate() {
        easy_bcq_row(q.row(s), anchor.row(s), m, out);
    }
    Ok(Policy::from_raw(q.n_states(), n_actions, probs))
}

/// One execution of the best-of-`m` rule at a single state.
pub fn sample_easy_bcq_action<R: Rng + ?Sized>(
    q_row: &[f64],
    probs: &[f64],
    m: usize,
    rng: &mut R,
) -> usize {
    let mut best = math::categorical(probs, rng.random());
    for _ in 1..m {
        let a = math::categorical(probs, rng.random());
        if q_row[a] > q_row[best] || (q_row[a] == q_row[best] && a < best) {
            best = a;
        }
    }
    best
}

/// Easy BCQ by sampling: a point mass per state on one realized best-of-`m` draw.
pub fn easy_bcq_sampled<R: Rng + ?Sized>(
    q: &QTable,
    anchor: &Policy,
    m: usize,
    rng: &mut R,
) -> Result<Policy> {
    check_shapes(q, anchor)?;
    ImprovementSpec::easy_bcq(m).validate()?;
    let actions: Vec<usize> = (0..q.n_states())
        .map(|s| sample_easy_bcq_action(q.row(s), anchor.row(s), m, rng))
        .collect();
    Policy::deterministic(q.n_actions(), &actions)
}

/// Per-state maximizer of `E_{a~pi}[q(s, a)] - alpha * KL(pi || behavior)`:
/// `pi(a|s) = behavior(a|s) exp(q(s, a) / alpha) / Z(s)`.
pub fn reverse_kl(q: &QTable, behavior: &Policy, alpha: f64) -> Result<Policy> {
    check_shapes(q, behavior)?;
    check_positive("alpha", alpha)?;
    let n_actions = q.n_actions();
    let mut probs = vec![0.0; q.n_states() * n_actions];
    for (s, out) in probs.chunks_mut(n_actions).enumerate() {
        let q_row = q.row(s);
        let beta = behavior.row(s);
        // Shift by the best supported value so every exponent is <= 0.
        let shift = q_row
            .iter()
            .zip(beta)
            .filter(|(_, &b)| b > 0.0)
            .map(|(&v, _)| v)
            .fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for a in 0..n_actions {
            out[a] = if beta[a] > 0.0 {
                beta[a] * math::exp((q_row[a] - shift) / alpha)
            } else {
                0.0
            };
            z += out[a];
        }
        out.iter_mut().for_each(|p| *p /= z);
    }
    Ok(Policy::from_raw(q.n_states(), n_actions, probs))
}

/// `KL(pi || beta)` for one state; infinite when `pi` leaves the support of `beta`.
pub fn kl_row(pi: &[f64], beta: &[f64]) -> f64 {
    let kl: f64 = pi
        .iter()
        .zip(beta)
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &b)| if b > 0.0 { p * math::ln(p / b) } else { f64::INFINITY })
        .sum();
    kl.max(0.0)
}

/// The per-state reverse-KL regularized objective.
pub fn regularized_objective(q_row: &[f64], pi: &[f64], beta: &[f64], alpha: f64) -> f64 {
    let value: f64 = q_row.iter().zip(pi).map(|(q, p)| q * p).sum();
    value - alpha * kl_row(pi, beta)
}

/// Exponentially weighted imitation: the tabular weighted maximum-likelihood
/// policy over dataset actions, with weights
/// `min(exp(tau * (q(s_i, a_i) - V(s_i))), clip)` and
/// `V(s) = E_{a~behavior}[q(s, a)]`. Unvisited states get the uniform policy.
pub fn exp_weighted(
    q: &QTable,
    dataset: &Dataset,
    behavior: &Policy,
    tau: f64,
    clip: f64,
) -> Result<Policy> {
    check_shapes(q, behavior)?;
    check_positive("tau", tau)?;
    check_positive("weight clip", clip)?;
    let (n_states, n_actions) = (q.n_states(), q.n_actions());
    let values = q.state_values(behavior).values;
    let mut weights = vec![0.0; n_states * n_actions];
    for step in dataset.steps() {
        if step.state >= n_states || step.action >= n_actions {
            return Err(Error::InvalidArgument(format!(
                "dataset step {step:?} out of range"
            )));
        }
        let advantage = q.get(step.state, step.action) - values[step.state];
        weights[step.state * n_actions + step.action] += math::exp(tau * advantage).min(clip);
    }
    for row in weights.chunks_mut(n_actions) {
        let total: f64 = row.iter().sum();
        if total > 0.0 {
            row.iter_mut().for_each(|w| *w /= total);
        } else {
            row.iter_mut().for_each(|w| *w = 1.0 / n_actions as f64);
        }
    }
    Ok(Policy::from_raw(n_states, n_actions, weights))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Step;

    fn one_state_q(values: &[f64]) -> QTable {
        QTable::new(1, values.len(), values.to_vec()).unwrap()
    }

    #[test]
    fn bcq_single_sample_is_identity() {
        let q = one_state_q(&[0.3, 2.0, -1.0]);
        let p = Policy::new(1, 3, vec![0.2, 0.3, 0.5]).unwrap();
        assert_eq!(easy_bcq(&q, &p, 1).unwrap(), p);
    }

    #[test]
    fn bcq_two_samples_two_actions() {
        // Of the four equiprobable pairs, three contain action 0.
        let q = one_state_q(&[1.0, 0.0]);
        let p = Policy::uniform(1, 2);
        let out = easy_bcq(&q, &p, 2).unwrap();
        assert_eq!(out.row(0), &[0.75, 0.25]);
    }

    #[test]
    fn bcq_large_m_is_argmax_on_support() {
        let q = one_state_q(&[5.0, 1.0, 3.0, 2.0]);
        let p = Policy::new(1, 4, vec![0.0, 0.25, 0.25, 0.5]).unwrap();
        let out = easy_bcq(&q, &p, 1_000_000).unwrap();
        assert!((out.prob(0, 2) - 1.0).abs() < 1e-4);
        assert_eq!(out.prob(0, 0), 0.0);
    }

    #[test]
    fn bcq_ties_go_to_lower_index() {
        let q = one_state_q(&[1.0, 1.0]);
        let p = Policy::uniform(1, 2);
        let out = easy_bcq(&q, &p, 2).unwrap();
        assert_eq!(out.row(0), &[0.75, 0.25]);
    }

    #[test]
    fn reverse_kl_hand_value() {
        let q = one_state_q(&[1.0, 0.0]);
        let out = reverse_kl(&q, &Policy::uniform(1, 2), 1.0).unwrap();
        let e = core::f64::consts::E;
        assert!((out.prob(0, 0) - e / (1.0 + e)).abs() < 1e-15);
        assert!((out.prob(0, 0) - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn reverse_kl_constant_q_returns_behavior() {
        let q = QTable::new(2, 4, vec![3.0; 8]).unwrap();
        let beta = Policy::new(2, 4, vec![0.5, 0.25, 0.125, 0.125, 0.0, 0.5, 0.25, 0.25]).unwrap();
        assert_eq!(reverse_kl(&q, &beta, 0.1).unwrap(), beta);
    }

    #[test]
    fn reverse_kl_respects_support() {
        let q = one_state_q(&[100.0, 0.0, 1.0]);
        let beta = Policy::new(1, 3, vec![0.0, 0.5, 0.5]).unwrap();
        let out = reverse_kl(&q, &beta, 1e-9).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0, 1.0]);
        assert!(reverse_kl(&q, &beta, 0.0).is_err());
    }

    #[test]
    fn exp_weighted_hand_example() {
        let data = Dataset::new(
            vec![[0, 0, 1]
                .iter()
                .map(|&a| Step {
                    state: 0,
                    action: a,
                    reward: 0.0,
                    next_state: 0,
                })
                .collect()],
            "hand",
        );
        let q = one_state_q(&[1.0, 0.0]);
        let beta_hat = Policy::new(1, 2, vec![2.0 / 3.0, 1.0 / 3.0]).unwrap();
        let out = exp_weighted(&q, &data, &beta_hat, 1.0, 100.0).unwrap();
        let w0 = (1.0f64 / 3.0).exp();
        let w1 = (-2.0f64 / 3.0).exp();
        let expected = 2.0 * w0 / (2.0 * w0 + w1);
        assert!((out.prob(0, 0) - expected).abs() < 1e-15);
        assert!((out.prob(0, 0) - 0.8446).abs() < 1e-4);
    }

    #[test]
    fn exp_weighted_constant_q_is_action_frequency_and_uniform_when_unseen() {
        let steps = [(0, 1), (0, 1), (0, 0), (0, 2)]
            .iter()
            .map(|&(s, a)| Step {
                state: s,
                action: a,
                reward: 0.0,
                next_state: s,
            })
            .collect();
        let data = Dataset::new(vec![steps], "x");
        let q = QTable::new(2, 3, vec![1.0; 6]).unwrap();
        let out = exp_weighted(&q, &data, &Policy::uniform(2, 3), 3.0, 100.0).unwrap();
        assert_eq!(out.row(0), &[0.25, 0.5, 0.25]);
        assert_eq!(out.row(1), &[1.0 / 3.0; 3]);
    }

    #[test]
    fn exp_weighted_clip_bounds_weights() {
        let steps = [0usize, 1]
            .iter()
            .map(|&a| Step {
                state: 0,
                action: a,
                reward: 0.0,
                next_state: 0,
            })
            .collect();
        let data = Dataset::new(vec![steps], "x");
        let q = one_state_q(&[10.0, 0.0]);
        let out = exp_weighted(&q, &data, &Policy::uniform(1, 2), 1e3, 100.0).unwrap();
        // Action 0 is clipped to 100, action 1 underflows to 0.
        assert_eq!(out.row(0), &[1.0, 0.0]);
        let soft = exp_weighted(&q, &data, &Policy::uniform(1, 2), 1.0, 2.0).unwrap();
        assert!((soft.prob(0, 0) - 2.0 / (2.0 + (-5.0f64).exp())).abs() < 1e-15);
    }

    #[test]
    fn hyperparameter_replacement() {
        let spec = ImprovementSpec::easy_bcq(2);
        assert_eq!(spec.with_hyperparameter(50.0).unwrap(), ImprovementSpec::easy_bcq(50));
        assert!(spec.with_hyperparameter(2.5).is_err());
        assert!(ImprovementSpec::BehaviorClone.with_hyperparameter(1.0).is_err());
        assert_eq!(
            ImprovementSpec::reverse_kl(1.0).with_hyperparameter(0.3).unwrap(),
            ImprovementSpec::reverse_kl(0.3)
        );
        assert!(ImprovementSpec::reverse_kl(1.0).with_hyperparameter(-1.0).is_err());
        assert_eq!(ImprovementSpec::exp_weighted(3.0).hyperparameter(), Some(3.0));
    }
}
