mod common;

use common::draw;
use oampi_core::improve::{
    easy_bcq, easy_bcq_row, exp_weighted, kl_row, regularized_objective, reverse_kl,
};
use oampi_core::oampi::grids::REVERSE_KL_ALPHA;
use oampi_core::rng::child_rng;
use oampi_core::{Dataset, Policy, QTable, Step};
use proptest::prelude::*;
use rand::Rng;

fn row_sums_to_one(p: &Policy) -> bool {
    (0..p.n_states()).all(|s| (p.row(s).iter().sum::<f64>() - 1.0).abs() < 1e-12)
}

/// A behavior policy with some zero entries (at least one positive per state).
fn sparse_policy(n_s: usize, n_a: usize, seed: u64) -> Policy {
    let mut rng = child_rng(seed, 31);
    let mut probs = Vec::with_capacity(n_s * n_a);
    for _ in 0..n_s {
        let keep = rng.random_range(0..n_a);
        let row: Vec<f64> = (0..n_a)
            .map(|a| if a == keep || rng.random_bool(0.6) { rng.random_range(0.05..1.0) } else { 0.0 })
            .collect();
        let total: f64 = row.iter().sum();
        probs.extend(row.iter().map(|p| p / total));
    }
    Policy::new(n_s, n_a, probs).unwrap()
}

fn random_q(n_s: usize, n_a: usize, seed: u64, scale: f64) -> QTable {
    let mut rng = child_rng(seed, 32);
    QTable::new(n_s, n_a, (0..n_s * n_a).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

fn argmax_on_support(q: &[f64], beta: &[f64]) -> usize {
    (0..q.len())
        .filter(|&a| beta[a] > 0.0)
        .max_by(|&a, &b| q[a].total_cmp(&q[b]).then(b.cmp(&a)))
        .unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn easy_bcq_is_a_distribution_on_the_anchor_support(seed in any::<u64>(), m in 1usize..40) {
        let beta = sparse_policy(6, 5, seed);
        let q = random_q(6, 5, seed, 3.0);
        let pi = easy_bcq(&q, &beta, m).unwrap();
        prop_assert!(row_sums_to_one(&pi));
        for (p, b) in pi.probs().iter().zip(beta.probs()) {
            prop_assert!(*b > 0.0 || *p == 0.0);
        }
    }

    #[test]
    fn easy_bcq_expected_value_grows_with_m(seed in any::<u64>(), m in 1usize..30) {
        let beta = sparse_policy(4, 4, seed);
        let q = random_q(4, 4, seed, 3.0);
        let lo = easy_bcq(&q, &beta, m).unwrap();
        let hi = easy_bcq(&q, &beta, m + 1).unwrap();
        for s in 0..4 {
            let v = |p: &Policy| q.row(s).iter().zip(p.row(s)).map(|(a, b)| a * b).sum::<f64>();
            prop_assert!(v(&hi) >= v(&lo) - 1e-12);
        }
    }

    #[test]
    fn reverse_kl_is_a_distribution_on_the_behavior_support(seed in any::<u64>(), alpha in 1e-3f64..1e3) {
        let beta = sparse_policy(6, 4, seed);
        let q = random_q(6, 4, seed, 5.0);
        let pi = reverse_kl(&q, &beta, alpha).unwrap();
        prop_assert!(row_sums_to_one(&pi));
        for (p, b) in pi.probs().iter().zip(beta.probs()) {
            prop_assert!(*b > 0.0 || *p == 0.0);
        }
    }

    #[test]
    fn reverse_kl_beats_random_perturbations(seed in any::<u64>(), alpha in 0.01f64..10.0) {
        let beta = sparse_policy(3, 4, seed);
        let q = random_q(3, 4, seed, 2.0);
        let pi = reverse_kl(&q, &beta, alpha).unwrap();
        let mut rng = child_rng(seed, 33);
        for s in 0..3 {
            let best = regularized_objective(q.row(s), pi.row(s), beta.row(s), alpha);
            for _ in 0..100 {
                let other = Policy::random(1, 4, &mut rng);
                let eps: f64 = rng.random_range(0.0..1.0);
                let perturbed: Vec<f64> = pi.row(s).iter().zip(other.row(0))
                    .map(|(p, o)| (1.0 - eps) * p + eps * o).collect();
                let value = regularized_objective(q.row(s), &perturbed, beta.row(s), alpha);
                prop_assert!(best >= value - 1e-12);
            }
        }
    }

    #[test]
    fn reverse_kl_scale_covariance(seed in any::<u64>(), power in -4i32..5, c in 0.1f64..20.0) {
        let beta = sparse_policy(5, 4, seed);
        let q = random_q(5, 4, seed, 5.0);
        let alpha = 0.7;
        let base = reverse_kl(&q, &beta, alpha).unwrap();
        let scale = |k: f64| QTable::new(5, 4, q.values().iter().map(|v| v * k).collect()).unwrap();
        let exact = 2f64.powi(power);
        prop_assert_eq!(&reverse_kl(&scale(exact), &beta, exact * alpha).unwrap(), &base);
        let scaled = reverse_kl(&scale(c), &beta, c * alpha).unwrap();
        prop_assert!(scaled.max_abs_diff(&base) < 1e-12);
    }

    #[test]
    fn reverse_kl_deviation_shrinks_with_alpha(seed in any::<u64>()) {
        let beta = sparse_policy(5, 4, seed);
        let q = random_q(5, 4, seed, 5.0);
        let kls: Vec<f64> = REVERSE_KL_ALPHA.iter().map(|&alpha| {
            let pi = reverse_kl(&q, &beta, alpha).unwrap();
            (0..5).map(|s| kl_row(pi.row(s), beta.row(s))).sum::<f64>()
        }).collect();
        for pair in kls.windows(2) {
            prop_assert!(pair[1] <= pair[0] + 1e-12);
        }
    }

    #[test]
    fn reverse_kl_limits(seed in any::<u64>()) {
        let beta = sparse_policy(6, 4, seed);
        let q = random_q(6, 4, seed, 5.0);
        let flat = reverse_kl(&q, &beta, 1e9).unwrap();
        prop_assert!(flat.max_abs_diff(&beta) < 1e-6);
        let greedy = reverse_kl(&q, &beta, 1e-9).unwrap();
        for s in 0..6 {
            let a = argmax_on_support(q.row(s), beta.row(s));
            let b = argmax_on_support(greedy.row(s), beta.row(s));
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn exp_weighted_supports_only_observed_actions(seed in any::<u64>(), tau in 0.01f64..30.0) {
        let mut rng = child_rng(seed, 34);
        let (n_s, n_a) = (5, 3);
        let steps: Vec<Step> = (0..20).map(|_| Step {
            state: rng.random_range(0..n_s - 1),
            action: rng.random_range(0..n_a),
            reward: 0.0,
            next_state: 0,
        }).collect();
        let data = Dataset::new(vec![steps.clone()], "synthetic");
        let q = random_q(n_s, n_a, seed, 3.0);
        let pi = exp_weighted(&q, &data, &Policy::uniform(n_s, n_a), tau, 100.0).unwrap();
        prop_assert!(row_sums_to_one(&pi));
        for s in 0..n_s {
            for a in 0..n_a {
                let seen = steps.iter().any(|st| st.state == s && st.action == a);
                let visited = steps.iter().any(|st| st.state == s);
                if visited && !seen {
                    prop_assert_eq!(pi.prob(s, a), 0.0);
                }
                if !visited {
                    prop_assert_eq!(pi.prob(s, a), 1.0 / n_a as f64);
                }
            }
        }
    }
}

/// The best-of-`m` rule simulated draw by draw.
fn simulate_bcq(q: &[f64], beta: &[f64], m: usize, draws: usize, seed: u64) -> Vec<f64> {
    let mut rng = child_rng(seed, 35);
    let mut counts = vec![0usize; q.len()];
    for _ in 0..draws {
        let mut best = draw(beta, &mut rng);
        for _ in 1..m {
            let a = draw(beta, &mut rng);
            if q[a] > q[best] || (q[a] == q[best] && a < best) {
                best = a;
            }
        }
        counts[best] += 1;
    }
    counts.iter().map(|&c| c as f64 / draws as f64).collect()
}

#[test]
fn easy_bcq_matches_simulation() {
    let draws = 100_000;
    for instance in 0..10u64 {
        let beta = sparse_policy(1, 5, instance);
        let q = random_q(1, 5, instance, 2.0);
        for m in [2, 5, 10] {
            let mut exact = vec![0.0; 5];
            easy_bcq_row(q.row(0), beta.row(0), m, &mut exact);
            let mc = simulate_bcq(q.row(0), beta.row(0), m, draws, instance * 31 + m as u64);
            for a in 0..5 {
                let sigma = (exact[a] * (1.0 - exact[a]) / draws as f64).sqrt();
                assert!(
                    (mc[a] - exact[a]).abs() <= 4.0 * sigma + 1e-12,
                    "instance {instance} m {m} action {a}: {} vs {}",
                    mc[a],
                    exact[a]
                );
            }
        }
    }
}

#[test]
fn easy_bcq_with_ties_matches_simulation() {
    let q = [1.0, 2.0, 2.0, 0.0];
    let beta = [0.4, 0.1, 0.2, 0.3];
    let mut exact = [0.0; 4];
    easy_bcq_row(&q, &beta, 3, &mut exact);
    let mc = simulate_bcq(&q, &beta, 3, 100_000, 7);
    for a in 0..4 {
        let sigma = (exact[a] * (1.0 - exact[a]) / 100_000.0).sqrt();
        assert!((mc[a] - exact[a]).abs() <= 4.0 * sigma + 1e-12);
    }
    // Hand computation: rank order 1, 2, 0, 3 with tails 1.0, 0.9, 0.7, 0.3.
    let expected = [0.7f64.powi(3) - 0.3f64.powi(3), 1.0 - 0.9f64.powi(3), 0.9f64.powi(3) - 0.7f64.powi(3), 0.3f64.powi(3)];
    for a in 0..4 {
        assert!((exact[a] - expected[a]).abs() < 1e-15);
    }
}
