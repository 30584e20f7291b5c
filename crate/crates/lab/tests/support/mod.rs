//! Reference computations for the lab's integration suites: dense linear
//! algebra and plain counting, never the iterative routines under test.
#![allow(dead_code)]

use oampi_core::{Dataset, Policy, TabularMdp};
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
        let (head, tail) = a.split_at_mut(col + 1);
        let pivot_row = &head[col];
        for (offset, row) in tail.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for k in col..n {
                    row[k] -= f * pivot_row[k];
                }
                b[col + 1 + offset] -= f * b[col];
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

fn p_pi(mdp: &TabularMdp, policy: &Policy) -> Vec<Vec<f64>> {
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

/// `V^pi` for an arbitrary reward table from `(I - gamma P_pi) V = r_pi`.
pub fn solve_v(mdp: &TabularMdp, policy: &Policy, reward: &[f64]) -> Vec<f64> {
    let (n, na, gamma) = (mdp.n_states(), mdp.n_actions(), mdp.discount());
    let p = p_pi(mdp, policy);
    let a = (0..n)
        .map(|s| (0..n).map(|t| f64::from(u8::from(s == t)) - gamma * p[s][t]).collect())
        .collect();
    let r = (0..n)
        .map(|s| (0..na).map(|a| policy.prob(s, a) * reward[s * na + a]).sum())
        .collect();
    solve(a, r)
}

/// `Q^pi` for an arbitrary reward table.
pub fn solve_q_with(mdp: &TabularMdp, policy: &Policy, reward: &[f64]) -> Vec<f64> {
    let v = solve_v(mdp, policy, reward);
    let na = mdp.n_actions();
    (0..mdp.n_states() * na)
        .map(|i| {
            let next: f64 = mdp.transitions().row(i / na, i % na).map(|(s2, p)| p * v[s2]).sum();
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

/// Normalized discounted state visitation from the transposed system.
pub fn solve_visitation(mdp: &TabularMdp, policy: &Policy) -> Vec<f64> {
    let (n, gamma) = (mdp.n_states(), mdp.discount());
    let p = p_pi(mdp, policy);
    let a = (0..n)
        .map(|t| (0..n).map(|s| f64::from(u8::from(s == t)) - gamma * p[s][t]).collect())
        .collect();
    let b = mdp.initial_dist().iter().map(|r| (1.0 - gamma) * r).collect();
    solve(a, b)
}

/// Mean observed reward per pair (0 when unseen) and action frequencies per
/// state (uniform when unseen), by direct counting.
pub fn count_model(data: &Dataset, n_states: usize, n_actions: usize) -> (Vec<f64>, Vec<f64>) {
    let mut sum = vec![0.0; n_states * n_actions];
    let mut n = vec![0u64; n_states * n_actions];
    for step in data.steps() {
        let i = step.state * n_actions + step.action;
        sum[i] += step.reward;
        n[i] += 1;
    }
    let reward = sum.iter().zip(&n).map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 }).collect();
    let mut behavior = vec![0.0; n_states * n_actions];
    for s in 0..n_states {
        let row = &n[s * n_actions..(s + 1) * n_actions];
        let total: u64 = row.iter().sum();
        for a in 0..n_actions {
            behavior[s * n_actions + a] = if total > 0 {
                row[a] as f64 / total as f64
            } else {
                1.0 / n_actions as f64
            };
        }
    }
    (reward, behavior)
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample standard deviation.
pub fn std_dev(xs: &[f64]) -> f64 {
    let m = mean(xs);
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64).sqrt()
}

/// A random MDP with `2..=max_states` states and `2..=max_actions` actions.
pub fn random_mdp(seed: u64, max_states: usize, max_actions: usize) -> TabularMdp {
    let mut rng = oampi_core::rng::child_rng(seed, 77);
    let n_s = rng.random_range(2..=max_states);
    let n_a = rng.random_range(2..=max_actions);
    let gamma = rng.random_range(0.5..0.95);
    TabularMdp::random(n_s, n_a, gamma, &mut rng).unwrap()
}
