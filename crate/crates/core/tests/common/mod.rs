//! Independent reference computations for the integration suites.
//!
//! Values here come from dense linear algebra or plain simulation, never
//! from the iterative routines under test.
#![allow(dead_code)]

use oampi_core::{Policy, TabularMdp};
use rand::Rng;

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            if f != 0.0 {
                for k in col..n {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let tail: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - tail) / a[row][row];
    }
    x
}

/// Dense state-to-state matrix `P_pi[s][s']`.
pub fn state_transition_matrix(mdp: &TabularMdp, policy: &Policy) -> Vec<Vec<f64>> {
    let n = mdp.n_states();
    let mut p = vec![vec![0.0; n]; n];
    for (s, row) in p.iter_mut().enumerate() {
        for a in 0..mdp.n_actions() {
            let pa = policy.prob(s, a);
            for (s2, pr) in mdp.transitions().row(s, a) {
                row[s2] += pa * pr;
            }
        }
    }
    p
}

/// `V^pi` from `(I - gamma P_pi) V = r_pi` with an arbitrary reward table.
pub fn solve_v(mdp: &TabularMdp, policy: &Policy, reward: &[f64]) -> Vec<f64> {
    let n = mdp.n_states();
    let na = mdp.n_actions();
    let gamma = mdp.discount();
    let p = state_transition_matrix(mdp, policy);
    let a = (0..n)
        .map(|s| {
            (0..n)
                .map(|t| if s == t { 1.0 } else { 0.0 } - gamma * p[s][t])
                .collect()
        })
        .collect();
    let r_pi = (0..n)
        .map(|s| (0..na).map(|a| policy.prob(s, a) * reward[s * na + a]).sum())
        .collect();
    solve(a, r_pi)
}

/// `Q^pi(s, a) = r(s, a) + gamma E[V^pi(s')]` from the dense solve.
pub fn solve_q_with(mdp: &TabularMdp, policy: &Policy, reward: &[f64]) -> Vec<f64> {
    let v = solve_v(mdp, policy, reward);
    let na = mdp.n_actions();
    (0..mdp.n_states() * na)
        .map(|i| {
            let (s, a) = (i / na, i % na);
            let next: f64 = mdp.transitions().row(s, a).map(|(s2, p)| p * v[s2]).sum();
            reward[i] + mdp.discount() * next
        })
        .collect()
}

pub fn solve_q(mdp: &TabularMdp, policy: &Policy) -> Vec<f64> {
    solve_q_with(mdp, policy, mdp.reward_mean())
}

pub fn solve_j(mdp: &TabularMdp, policy: &Policy) -> f64 {
    let v = solve_v(mdp, policy, mdp.reward_mean());
    v.iter().zip(mdp.initial_dist()).map(|(v, r)| v * r).sum()
}

/// `d^pi = (1 - gamma) rho^T (I - gamma P_pi)^{-1}` via the transposed system.
pub fn solve_visitation(mdp: &TabularMdp, policy: &Policy) -> Vec<f64> {
    let n = mdp.n_states();
    let gamma = mdp.discount();
    let p = state_transition_matrix(mdp, policy);
    let a = (0..n)
        .map(|t| {
            (0..n)
                .map(|s| if s == t { 1.0 } else { 0.0 } - gamma * p[s][t])
                .collect()
        })
        .collect();
    let b = mdp.initial_dist().iter().map(|r| (1.0 - gamma) * r).collect();
    solve(a, b)
}

/// Index drawn from `probs` by linear scan.
pub fn draw<R: Rng>(probs: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.iter().rposition(|&p| p > 0.0).unwrap()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A random MDP with `2..=max_states` states and `2..=max_actions` actions.
pub fn random_mdp(seed: u64, max_states: usize, max_actions: usize) -> TabularMdp {
    let mut rng = oampi_core::rng::child_rng(seed, 99);
    let n_s = rng.random_range(2..=max_states);
    let n_a = rng.random_range(2..=max_actions);
    let gamma = rng.random_range(0.5..0.95);
    TabularMdp::random(n_s, n_a, gamma, &mut rng).unwrap()
}
