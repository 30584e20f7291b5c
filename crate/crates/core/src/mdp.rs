//! Ground-truth finite MDPs, gridworld constructors and exact dynamic
//! programming.
//!
//! Everything in this module uses the true model and serves as the reference
//! that offline estimates are compared against.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{check_dim, Error, Result};
use crate::math;

/// Tolerance on probability-vector normalization.
pub const PROB_TOL: f64 = 1e-12;

/// Default sup-norm tolerance for exact evaluation inside derived quantities
/// such as [`j_value`].
pub const EXACT_TOL: f64 = 1e-12;

fn check_distribution(what: &str, probs: &[f64]) -> Result<()> {
    let mut sum = 0.0;
    for &p in probs {
        if !(p >= 0.0) || !p.is_finite() {
            return Err(Error::InvalidModel(format!(
                "{what} has a negative or non-finite entry {p}"
            )));
        }
        sum += p;
    }
    if (sum - 1.0).abs() > PROB_TOL {
        return Err(Error::InvalidModel(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

/// Sparse row-stochastic transition kernel `P[s][a] -> distribution over s'`.
#[derive(Clone, Debug, PartialEq)]
pub struct Transitions {
    n_states: usize,
    n_actions: usize,
    offsets: Vec<usize>,
    next: Vec<usize>,
    prob: Vec<f64>,
}

impl Transitions {
    /// Builds a kernel from one sparse row per `(s, a)` pair, in `s * n_actions + a` order.
    pub fn from_rows(
        n_states: usize,
        n_actions: usize,
        rows: impl IntoIterator<Item = Vec<(usize, f64)>>,
    ) -> Result<Self> {
        let mut offsets = Vec::with_capacity(n_states * n_actions + 1);
        let mut next = Vec::new();
        let mut prob = Vec::new();
        offsets.push(0);
        for row in rows {
            let mut sum = 0.0;
            for (s_next, p) in row {
                if s_next >= n_states {
                    return Err(Error::InvalidModel(format!(
                        "transition target {s_next} out of range for {n_states} states"
                    )));
                }
                if !(p >= 0.0) || !p.is_finite() {
                    return Err(Error::InvalidModel(format!(
                        "transition probability {p} is negative or non-finite"
                    )));
                }
                if p > 0.0 {
                    next.push(s_next);
                    prob.push(p);
                }
                sum += p;
            }
            if (sum - 1.0).abs() > PROB_TOL {
                let row = offsets.len() - 1;
                return Err(Error::InvalidModel(format!(
                    "transition row (s={}, a={}) sums to {sum}",
                    row / n_actions.max(1),
                    row % n_actions.max(1)
                )));
            }
            offsets.push(next.len());
        }
        check_dim("transition rows", n_states * n_actions, offsets.len() - 1)?;
        Ok(Self {
            n_states,
            n_actions,
            offsets,
            next,
            prob,
        })
    }

    /// Deterministic kernel: `(s, a)` moves to `targets[s * n_actions + a]`.
    pub fn deterministic(n_states: usize, n_actions: usize, targets: &[usize]) -> Result<Self> {
        Self::from_rows(
            n_states,
            n_actions,
            targets.iter().map(|&t| vec![(t, 1.0)]),
        )
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    /// Non-zero entries of `P[s][a]`.
    pub fn row(&self, s: usize, a: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let i = s * self.n_actions + a;
        let range = self.offsets[i]..self.offsets[i + 1];
        self.next[range.clone()]
            .iter()
            .copied()
            .zip(self.prob[range].iter().copied())
    }

    /// `E_{s' ~ P(.|s,a)}[values(s')]`.
    #[inline]
    pub fn expect(&self, s: usize, a: usize, values: &[f64]) -> f64 {
        let i = s * self.n_actions + a;
        let mut acc = 0.0;
        for j in self.offsets[i]..self.offsets[i + 1] {
            acc += self.prob[j] * values[self.next[j]];
        }
        acc
    }

    pub(crate) fn sample(&self, s: usize, a: usize, u: f64) -> usize {
        let i = s * self.n_actions + a;
        let range = self.offsets[i]..self.offsets[i + 1];
        self.next[range.clone()][math::categorical(&self.prob[range], u)]
    }

    /// Pushes a state distribution one step forward under `policy`.
    pub(crate) fn push_forward(&self, policy: &Policy, dist: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|x| *x = 0.0);
        for s in 0..self.n_states {
            let mass = dist[s];
            if mass == 0.0 {
                continue;
            }
            for (a, &pa) in policy.row(s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                for (s_next, p) in self.row(s, a) {
                    out[s_next] += mass * pa * p;
                }
            }
        }
    }
}

/// Reward noise around the mean at one `(s, a)` pair.
#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub enum RewardNoise {
    #[default]
    None,
    /// Zero-mean Gaussian noise with standard deviation `std`.
    Gaussian { std: f64 },
}

/// A finite, infinite-horizon discounted MDP.
#[derive(Clone, Debug, PartialEq)]
pub struct TabularMdp {
    transitions: Transitions,
    reward_mean: Vec<f64>,
    reward_noise: Vec<RewardNoise>,
    initial: Vec<f64>,
    discount: f64,
}

impl TabularMdp {
    pub fn new(
        transitions: Transitions,
        reward_mean: Vec<f64>,
        reward_noise: Vec<RewardNoise>,
        initial: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        let n_states = transitions.n_states();
        let n_sa = n_states * transitions.n_actions();
        if n_states == 0 || transitions.n_actions() == 0 {
            return Err(Error::InvalidModel("MDP needs at least one state and action".into()));
        }
        check_dim("reward table", n_sa, reward_mean.len())?;
        check_dim("reward noise table", n_sa, reward_noise.len())?;
        check_dim("initial distribution", n_states, initial.len())?;
        if let Some(r) = reward_mean.iter().find(|r| !r.is_finite()) {
            return Err(Error::InvalidModel(format!("reward {r} is not finite")));
        }
        for noise in &reward_noise {
            if let RewardNoise::Gaussian { std } = noise {
                if !(*std >= 0.0) || !std.is_finite() {
                    return Err(Error::InvalidModel(format!("noise std {std} is invalid")));
                }
            }
        }
        check_distribution("initial distribution", &initial)?;
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::InvalidModel(format!(
                "discount {discount} must lie in [0, 1)"
            )));
        }
        Ok(Self {
            transitions,
            reward_mean,
            reward_noise,
            initial,
            discount,
        })
    }

    /// Random dense MDP with rewards in [-1, 1], used by property suites.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        discount: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let rows: Vec<Vec<(usize, f64)>> = (0..n_states * n_actions)
            .map(|_| random_simplex(n_states, rng).into_iter().enumerate().collect())
            .collect();
        let transitions = Transitions::from_rows(n_states, n_actions, rows)?;
        let reward_mean = (0..n_states * n_actions)
            .map(|_| rng.random_range(-1.0..=1.0))
            .collect();
        let initial = random_simplex(n_states, rng);
        Self::new(
            transitions,
            reward_mean,
            vec![RewardNoise::None; n_states * n_actions],
            initial,
            discount,
        )
    }

    pub fn n_states(&self) -> usize {
        self.transitions.n_states()
    }

    pub fn n_actions(&self) -> usize {
        self.transitions.n_actions()
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transitions(&self) -> &Transitions {
        &self.transitions
    }

    pub fn reward_mean(&self) -> &[f64] {
        &self.reward_mean
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward_mean[s * self.n_actions() + a]
    }

    pub fn reward_noise(&self, s: usize, a: usize) -> RewardNoise {
        self.reward_noise[s * self.n_actions() + a]
    }

    pub fn initial_dist(&self) -> &[f64] {
        &self.initial
    }

    /// Replaces the reward table, keeping transitions, initial distribution and discount.
    pub fn with_rewards(&self, reward_mean: Vec<f64>) -> Result<Self> {
        Self::new(
            self.transitions.clone(),
            reward_mean,
            vec![RewardNoise::None; self.n_states() * self.n_actions()],
            self.initial.clone(),
            self.discount,
        )
    }

    pub(crate) fn sample_reward<R: Rng + ?Sized>(&self, s: usize, a: usize, rng: &mut R) -> f64 {
        let mean = self.reward(s, a);
        match self.reward_noise(s, a) {
            RewardNoise::None => mean,
            RewardNoise::Gaussian { std } => {
                let z: f64 = StandardNormal.sample(rng);
                mean + std * z
            }
        }
    }

    pub(crate) fn check_policy(&self, policy: &Policy) -> Result<()> {
        check_dim("policy states", self.n_states(), policy.n_states())?;
        check_dim("policy actions", self.n_actions(), policy.n_actions())
    }
}

fn random_simplex<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<f64> {
    // Normalized exponentials give a uniform draw from the simplex.
    let mut w: Vec<f64> = (0..n)
        .map(|_| -math::ln(1.0 - rng.random::<f64>()))
        .collect();
    let total: f64 = w.iter().sum();
    w.iter_mut().for_each(|x| *x /= total);
    // Push the rounding remainder onto the largest entry so the row sums to 1.
    let sum: f64 = w.iter().sum();
    if let Some(max) = w.iter_mut().max_by(|a, b| a.total_cmp(b)) {
        *max += 1.0 - sum;
    }
    w
}

/// A stochastic policy: one action distribution per state.
#[derive(Clone, Debug, PartialEq)]
pub struct Policy {
    n_states: usize,
    n_actions: usize,
    probs: Vec<f64>,
}

impl Policy {
    /// Validates that every row is a probability distribution.
    pub fn new(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Result<Self> {
        check_dim("policy table", n_states * n_actions, probs.len())?;
        if n_actions == 0 {
            return Err(Error::InvalidModel("policy needs at least one action".into()));
        }
        for row in probs.chunks(n_actions) {
            check_distribution("policy row", row)?;
        }
        Ok(Self {
            n_states,
            n_actions,
            probs,
        })
    }

    pub(crate) fn from_raw(n_states: usize, n_actions: usize, probs: Vec<f64>) -> Self {
        debug_assert_eq!(probs.len(), n_states * n_actions);
        Self {
            n_states,
            n_actions,
            probs,
        }
    }

    pub fn uniform(n_states: usize, n_actions: usize) -> Self {
        let p = 1.0 / n_actions as f64;
        Self::from_raw(n_states, n_actions, vec![p; n_states * n_actions])
    }

    /// Point mass on `actions[s]` at each state.
    pub fn deterministic(n_actions: usize, actions: &[usize]) -> Result<Self> {
        let mut probs = vec![0.0; actions.len() * n_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= n_actions {
                return Err(Error::InvalidArgument(format!(
                    "action {a} out of range for {n_actions} actions"
                )));
            }
            probs[s * n_actions + a] = 1.0;
        }
        Ok(Self::from_raw(actions.len(), n_actions, probs))
    }

    /// Random policy with rows drawn uniformly from the simplex.
    pub fn random<R: Rng + ?Sized>(n_states: usize, n_actions: usize, rng: &mut R) -> Self {
        let probs = (0..n_states)
            .flat_map(|_| random_simplex(n_actions, rng))
            .collect();
        Self::from_raw(n_states, n_actions, probs)
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.n_actions + a]
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn max_abs_diff(&self, other: &Policy) -> f64 {
        math::sup_diff(&self.probs, &other.probs)
    }

    pub(crate) fn sample_action(&self, s: usize, u: f64) -> usize {
        math::categorical(self.row(s), u)
    }
}

/// State-action values indexed by `(s, a)`.
#[derive(Clone, Debug, PartialEq)]
pub struct QTable {
    n_states: usize,
    n_actions: usize,
    values: Vec<f64>,
}

impl QTable {
    pub fn new(n_states: usize, n_actions: usize, values: Vec<f64>) -> Result<Self> {
        check_dim("Q table", n_states * n_actions, values.len())?;
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument(format!("Q value {v} is not finite")));
        }
        Ok(Self {
            n_states,
            n_actions,
            values,
        })
    }

    pub(crate) fn from_raw(n_states: usize, n_actions: usize, values: Vec<f64>) -> Self {
        Self {
            n_states,
            n_actions,
            values,
        }
    }

    pub fn zeros(n_states: usize, n_actions: usize) -> Self {
        Self::from_raw(n_states, n_actions, vec![0.0; n_states * n_actions])
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_actions(&self) -> usize {
        self.n_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.n_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.values[s * self.n_actions..(s + 1) * self.n_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// `V(s) = sum_a policy(a|s) Q(s, a)`.
    pub fn state_values(&self, policy: &Policy) -> VTable {
        VTable {
            values: policy_values(policy, &self.values),
        }
    }

    /// Elementwise `self - other`.
    pub fn sub(&self, other: &QTable) -> QTable {
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a - b)
            .collect();
        Self::from_raw(self.n_states, self.n_actions, values)
    }

    pub fn max_abs_diff(&self, other: &QTable) -> f64 {
        math::sup_diff(&self.values, &other.values)
    }

    pub(crate) fn check_shape(&self, n_states: usize, n_actions: usize) -> Result<()> {
        check_dim("Q table states", n_states, self.n_states)?;
        check_dim("Q table actions", n_actions, self.n_actions)
    }
}

/// State values.
#[derive(Clone, Debug, PartialEq)]
pub struct VTable {
    pub values: Vec<f64>,
}

pub(crate) fn policy_values(policy: &Policy, q: &[f64]) -> Vec<f64> {
    q.chunks(policy.n_actions())
        .zip(policy.probs().chunks(policy.n_actions()))
        .map(|(qs, ps)| qs.iter().zip(ps).map(|(q, p)| q * p).sum())
        .collect()
}

/// One synchronous policy-evaluation backup `out = r + gamma * P * Pi * q`.
pub(crate) fn policy_backup(
    transitions: &Transitions,
    reward: &[f64],
    discount: f64,
    policy: &Policy,
    q: &[f64],
    out: &mut [f64],
) {
    let mut v = vec![0.0; transitions.n_states()];
    backup_with_scratch(transitions, reward, discount, policy, q, out, &mut v);
}

fn backup_with_scratch(
    transitions: &Transitions,
    reward: &[f64],
    discount: f64,
    policy: &Policy,
    q: &[f64],
    out: &mut [f64],
    v: &mut [f64],
) {
    let n_actions = transitions.n_actions();
    for ((vs, qs), ps) in v
        .iter_mut()
        .zip(q.chunks(n_actions))
        .zip(policy.probs().chunks(n_actions))
    {
        *vs = qs.iter().zip(ps).map(|(q, p)| q * p).sum();
    }
    for s in 0..transitions.n_states() {
        for a in 0..n_actions {
            let i = s * n_actions + a;
            out[i] = reward[i] + discount * transitions.expect(s, a, v);
        }
    }
}

/// Stopping rule for repeated Bellman backups.
#[derive(Clone, Copy, Debug)]
pub(crate) enum Stop {
    /// Exactly this many backups.
    Sweeps(usize),
    /// Until the sup-norm change of one backup is at most `tol`.
    Tolerance(f64),
}

pub(crate) fn iterate_policy_backup(
    transitions: &Transitions,
    reward: &[f64],
    discount: f64,
    policy: &Policy,
    init: Vec<f64>,
    stop: Stop,
) -> Vec<f64> {
    let mut q = init;
    let mut next = vec![0.0; q.len()];
    let mut v = vec![0.0; transitions.n_states()];
    match stop {
        Stop::Sweeps(n) => {
            for _ in 0..n {
                backup_with_scratch(transitions, reward, discount, policy, &q, &mut next, &mut v);
                core::mem::swap(&mut q, &mut next);
            }
        }
        Stop::Tolerance(tol) => {
            let mut cap = usize::MAX;
            let mut sweeps = 0usize;
            loop {
                backup_with_scratch(transitions, reward, discount, policy, &q, &mut next, &mut v);
                let delta = math::sup_diff(&q, &next);
                core::mem::swap(&mut q, &mut next);
                sweeps += 1;
                if sweeps == 1 {
                    cap = math::sweep_cap(discount, tol, delta);
                }
                // The returned table's own residual is at most gamma * delta.
                if delta <= tol || sweeps >= cap {
                    break;
                }
            }
        }
    }
    q
}

/// Fixed point of `Q = r + gamma P Pi Q` for an arbitrary reward table.
pub(crate) fn evaluate_reward(
    mdp: &TabularMdp,
    reward: &[f64],
    policy: &Policy,
    tol: f64,
) -> Vec<f64> {
    iterate_policy_backup(
        mdp.transitions(),
        reward,
        mdp.discount(),
        policy,
        reward.to_vec(),
        Stop::Tolerance(tol),
    )
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!("tolerance {tol} must be positive")))
    }
}

/// True action values `Q^pi` with Bellman residual at most `tol`.
///
/// Only the reward means enter; reward noise has zero effect on expectations.
pub fn exact_q(mdp: &TabularMdp, policy: &Policy, tol: f64) -> Result<QTable> {
    mdp.check_policy(policy)?;
    check_tol(tol)?;
    let q = evaluate_reward(mdp, mdp.reward_mean(), policy, tol);
    Ok(QTable::from_raw(mdp.n_states(), mdp.n_actions(), q))
}

/// Expected discounted return `J(pi) = E_{s~rho, a~pi}[Q^pi(s, a)]`.
pub fn j_value(mdp: &TabularMdp, policy: &Policy) -> Result<f64> {
    let q = exact_q(mdp, policy, EXACT_TOL)?;
    Ok(j_from_q(mdp, policy, &q))
}

pub(crate) fn j_from_q(mdp: &TabularMdp, policy: &Policy, q: &QTable) -> f64 {
    q.state_values(policy)
        .values
        .iter()
        .zip(mdp.initial_dist())
        .map(|(v, rho)| v * rho)
        .sum()
}

/// Discounted state visitation `d^pi(s) = (1 - gamma) sum_t gamma^t P(s_t = s)`.
///
/// The series is truncated once the remaining geometric mass is below `tol`
/// and the result renormalized.
pub fn discounted_visitation(mdp: &TabularMdp, policy: &Policy, tol: f64) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    check_tol(tol)?;
    let gamma = mdp.discount();
    let mut current = mdp.initial_dist().to_vec();
    let mut next = vec![0.0; current.len()];
    let mut weight = 1.0 - gamma;
    let mut occupancy: Vec<f64> = current.iter().map(|p| weight * p).collect();
    let mut remaining = gamma;
    while remaining > tol {
        mdp.transitions().push_forward(policy, &current, &mut next);
        core::mem::swap(&mut current, &mut next);
        weight *= gamma;
        for (d, p) in occupancy.iter_mut().zip(&current) {
            *d += weight * p;
        }
        remaining *= gamma;
    }
    let total: f64 = occupancy.iter().sum();
    occupancy.iter_mut().for_each(|d| *d /= total);
    Ok(occupancy)
}

/// How greedy extraction resolves actions with equal optimal value.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum TieBreak {
    /// Point mass on the lowest-index maximizer.
    #[default]
    LowestIndex,
    /// Uniform over all maximizers; still an optimal policy.
    Uniform,
}

/// Optimal Q-values by value iteration, residual at most `tol`.
pub fn optimal_q(mdp: &TabularMdp, tol: f64) -> Result<QTable> {
    check_tol(tol)?;
    let n_actions = mdp.n_actions();
    let gamma = mdp.discount();
    let reward = mdp.reward_mean();
    let mut q = reward.to_vec();
    let mut next = vec![0.0; q.len()];
    let mut cap = usize::MAX;
    let mut sweeps = 0usize;
    loop {
        let v: Vec<f64> = q
            .chunks(n_actions)
            .map(|row| row.iter().copied().fold(f64::NEG_INFINITY, f64::max))
            .collect();
        for s in 0..mdp.n_states() {
            for a in 0..n_actions {
                let i = s * n_actions + a;
                next[i] = reward[i] + gamma * mdp.transitions().expect(s, a, &v);
            }
        }
        let delta = math::sup_diff(&q, &next);
        core::mem::swap(&mut q, &mut next);
        sweeps += 1;
        if sweeps == 1 {
            cap = math::sweep_cap(gamma, tol, delta);
        }
        if delta <= tol || sweeps >= cap {
            break;
        }
    }
    Ok(QTable::from_raw(mdp.n_states(), n_actions, q))
}

/// Deterministic greedy optimal policy, ties broken by lowest action index.
pub fn optimal_policy(mdp: &TabularMdp, tol: f64) -> Result<Policy> {
    optimal_policy_with(mdp, tol, TieBreak::LowestIndex)
}

pub fn optimal_policy_with(mdp: &TabularMdp, tol: f64, ties: TieBreak) -> Result<Policy> {
    let q = optimal_q(mdp, tol)?;
    let n_actions = mdp.n_actions();
    let gamma = mdp.discount();
    let scale = q.values().iter().fold(0.0f64, |m, v| m.max(v.abs()));
    // Two exactly tied actions can differ by at most twice the value-iteration error.
    let tie_eps = 2.0 * tol / (1.0 - gamma) + 16.0 * f64::EPSILON * scale;
    let mut probs = vec![0.0; mdp.n_states() * n_actions];
    for s in 0..mdp.n_states() {
        let row = q.row(s);
        let best = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let tied = |a: &usize| row[*a] >= best - tie_eps;
        let out = &mut probs[s * n_actions..(s + 1) * n_actions];
        match ties {
            TieBreak::LowestIndex => {
                let a = (0..n_actions).find(tied).unwrap_or(0);
                out[a] = 1.0;
            }
            TieBreak::Uniform => {
                let count = (0..n_actions).filter(tied).count();
                for a in (0..n_actions).filter(tied) {
                    out[a] = 1.0 / count as f64;
                }
            }
        }
    }
    Ok(Policy::from_raw(mdp.n_states(), n_actions, probs))
}

/// Rowwise `w * a + (1 - w) * b`.
pub fn mix_policies(a: &Policy, b: &Policy, w: f64) -> Result<Policy> {
    if !(0.0..=1.0).contains(&w) {
        return Err(Error::InvalidArgument(format!(
            "mixture weight {w} must lie in [0, 1]"
        )));
    }
    check_dim("policy states", a.n_states(), b.n_states())?;
    check_dim("policy actions", a.n_actions(), b.n_actions())?;
    let probs = a
        .probs()
        .iter()
        .zip(b.probs())
        .map(|(pa, pb)| w * pa + (1.0 - w) * pb)
        .collect();
    Ok(Policy::from_raw(a.n_states(), a.n_actions(), probs))
}

// ---------------------------------------------------------------------------
// Gridworld
// ---------------------------------------------------------------------------

/// Grid cell; `x` counts columns from the left, `y` rows from the bottom.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Cell {
    pub x: usize,
    pub y: usize,
}

impl Cell {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(usize)]
pub enum GridAction {
    Up = 0,
    Down = 1,
    Left = 2,
    Right = 3,
}

impl GridAction {
    pub const ALL: [GridAction; 4] = [Self::Up, Self::Down, Self::Left, Self::Right];

    pub const fn index(self) -> usize {
        self as usize
    }

    fn apply(self, cell: Cell, width: usize, height: usize) -> Cell {
        match self {
            Self::Up => Cell::new(cell.x, (cell.y + 1).min(height - 1)),
            Self::Down => Cell::new(cell.x, cell.y.saturating_sub(1)),
            Self::Left => Cell::new(cell.x.saturating_sub(1), cell.y),
            Self::Right => Cell::new((cell.x + 1).min(width - 1), cell.y),
        }
    }
}

/// Layout of a reward gridworld with deterministic moves and clamping walls.
#[derive(Clone, Debug, PartialEq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    /// Every action taken here pays `good_reward` deterministically.
    pub good_state: Cell,
    pub good_reward: f64,
    /// Every action taken here pays `Normal(noisy_mean, noisy_std^2)`.
    pub noisy_cells: Vec<Cell>,
    pub noisy_mean: f64,
    pub noisy_std: f64,
}

impl GridSpec {
    /// Reward 1 in the top-right corner and `N(-0.5, 1)` on the left and
    /// bottom walls (corner excluded).
    pub fn corner(width: usize, height: usize) -> Self {
        let good_state = Cell::new(width.saturating_sub(1), height.saturating_sub(1));
        let mut noisy_cells = Vec::new();
        for y in 0..height {
            for x in 0..width {
                let cell = Cell::new(x, y);
                if (x == 0 || y == 0) && cell != good_state {
                    noisy_cells.push(cell);
                }
            }
        }
        Self {
            width,
            height,
            good_state,
            good_reward: 1.0,
            noisy_cells,
            noisy_mean: -0.5,
            noisy_std: 1.0,
        }
    }

    pub fn n_states(&self) -> usize {
        self.width * self.height
    }

    pub fn state(&self, cell: Cell) -> usize {
        cell.y * self.width + cell.x
    }

    pub fn cell(&self, state: usize) -> Cell {
        Cell::new(state % self.width, state / self.width)
    }

    fn inside(&self, cell: Cell) -> bool {
        cell.x < self.width && cell.y < self.height
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::InvalidModel(format!(
                "grid dimensions {}x{} must be positive",
                self.width, self.height
            )));
        }
        if !self.inside(self.good_state) {
            return Err(Error::InvalidModel(format!(
                "good state {:?} lies outside the grid",
                self.good_state
            )));
        }
        for &cell in &self.noisy_cells {
            if !self.inside(cell) {
                return Err(Error::InvalidModel(format!(
                    "noisy cell {cell:?} lies outside the grid"
                )));
            }
            if cell == self.good_state {
                return Err(Error::InvalidModel("noisy cells include the good state".into()));
            }
        }
        if !(self.noisy_std >= 0.0) || !self.noisy_std.is_finite() {
            return Err(Error::InvalidModel(format!(
                "noise std {} is invalid",
                self.noisy_std
            )));
        }
        Ok(())
    }
}

/// Builds the gridworld MDP with a uniform initial distribution.
pub fn build_gridworld(spec: &GridSpec, discount: f64) -> Result<TabularMdp> {
    spec.validate()?;
    let n_states = spec.n_states();
    let n_actions = GridAction::ALL.len();
    let mut targets = Vec::with_capacity(n_states * n_actions);
    let mut reward = vec![0.0; n_states * n_actions];
    let mut noise = vec![RewardNoise::None; n_states * n_actions];
    for s in 0..n_states {
        let cell = spec.cell(s);
        for action in GridAction::ALL {
            targets.push(spec.state(action.apply(cell, spec.width, spec.height)));
        }
    }
    for &cell in &spec.noisy_cells {
        let s = spec.state(cell);
        for a in 0..n_actions {
            reward[s * n_actions + a] = spec.noisy_mean;
            noise[s * n_actions + a] = RewardNoise::Gaussian {
                std: spec.noisy_std,
            };
        }
    }
    let g = spec.state(spec.good_state);
    for a in 0..n_actions {
        reward[g * n_actions + a] = spec.good_reward;
    }
    let transitions = Transitions::deterministic(n_states, n_actions, &targets)?;
    TabularMdp::new(
        transitions,
        reward,
        noise,
        vec![1.0 / n_states as f64; n_states],
        discount,
    )
}

/// Which "maximally suboptimal" gridworld policy to build.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SuboptimalPolicy {
    #[default]
    HalfDownHalfLeft,
    AllDown,
    AllLeft,
}

/// Policy heading away from the top-right corner.
pub fn suboptimal_policy(spec: &GridSpec, kind: SuboptimalPolicy) -> Result<Policy> {
    spec.validate()?;
    let row: [f64; 4] = match kind {
        SuboptimalPolicy::HalfDownHalfLeft => [0.0, 0.5, 0.5, 0.0],
        SuboptimalPolicy::AllDown => [0.0, 1.0, 0.0, 0.0],
        SuboptimalPolicy::AllLeft => [0.0, 0.0, 1.0, 0.0],
    };
    let probs = (0..spec.n_states()).flat_map(|_| row).collect();
    Ok(Policy::from_raw(spec.n_states(), 4, probs))
}

/// The down-and-left policy: probability 1/2 on each of down and left.
pub fn down_left_policy(spec: &GridSpec) -> Result<Policy> {
    suboptimal_policy(spec, SuboptimalPolicy::HalfDownHalfLeft)
}
