mod common;

use common::*;
use oampi_core::diag::{conservative_bound, performance_difference, total_variation};
use oampi_core::improve::reverse_kl;
use oampi_core::mdp::{exact_q, mix_policies, optimal_policy_with, EXACT_TOL};
use oampi_core::rng::child_rng;
use oampi_core::{build_gridworld, GridSpec, Policy, TieBreak};
use proptest::prelude::*;

/// `Q^beta(s, pi) - Q^beta(s, beta)` from the dense solve.
fn advantage(mdp: &oampi_core::TabularMdp, pi: &Policy, beta: &Policy) -> Vec<f64> {
    let q = solve_q(mdp, beta);
    let na = mdp.n_actions();
    (0..mdp.n_states())
        .map(|s| (0..na).map(|a| (pi.prob(s, a) - beta.prob(s, a)) * q[s * na + a]).sum())
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn performance_difference_identity(seed in any::<u64>()) {
        let mdp = random_mdp(seed, 10, 4);
        let mut rng = child_rng(seed, 21);
        let pi = Policy::random(mdp.n_states(), mdp.n_actions(), &mut rng);
        let beta = Policy::random(mdp.n_states(), mdp.n_actions(), &mut rng);
        let (lhs, rhs) = performance_difference(&mdp, &pi, &beta).unwrap();
        prop_assert!((lhs - rhs).abs() < 1e-6);

        let d = solve_visitation(&mdp, &pi);
        let adv = advantage(&mdp, &pi, &beta);
        let oracle_rhs: f64 = d.iter().zip(&adv).map(|(d, a)| d * a).sum::<f64>() / (1.0 - mdp.discount());
        let oracle_lhs = solve_j(&mdp, &pi) - solve_j(&mdp, &beta);
        prop_assert!((lhs - oracle_lhs).abs() < 1e-8);
        prop_assert!((rhs - oracle_rhs).abs() < 1e-8);
    }

    #[test]
    fn conservative_bound_holds(seed in any::<u64>(), w in 0.0f64..1.0) {
        let mdp = random_mdp(seed, 10, 4);
        let mut rng = child_rng(seed, 22);
        let beta = Policy::random(mdp.n_states(), mdp.n_actions(), &mut rng);
        let other = Policy::random(mdp.n_states(), mdp.n_actions(), &mut rng);
        // Policies near beta make the bound tight enough to be informative.
        let pi = mix_policies(&other, &beta, w).unwrap();
        let (improvement, lower) = conservative_bound(&mdp, &pi, &beta).unwrap();
        prop_assert!(improvement >= lower - 1e-9);

        let gamma = mdp.discount();
        let adv = advantage(&mdp, &pi, &beta);
        let sup = adv.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        let d = solve_visitation(&mdp, &beta);
        let oracle: f64 = (0..mdp.n_states())
            .map(|s| {
                let tv: f64 = 0.5 * (0..mdp.n_actions()).map(|a| (pi.prob(s, a) - beta.prob(s, a)).abs()).sum::<f64>();
                d[s] * (adv[s] - 2.0 * gamma * sup / (1.0 - gamma) * tv)
            })
            .sum::<f64>() / (1.0 - gamma);
        prop_assert!((lower - oracle).abs() < 1e-8);
    }
}

#[test]
fn total_variation_is_half_l1() {
    assert_eq!(total_variation(&[1.0, 0.0], &[0.0, 1.0]), 1.0);
    assert_eq!(total_variation(&[0.5, 0.5], &[0.5, 0.5]), 0.0);
    assert!((total_variation(&[0.7, 0.2, 0.1], &[0.2, 0.2, 0.6]) - 0.5).abs() < 1e-15);
}

#[test]
fn gridworld_one_step_outputs_satisfy_both_lemmas() {
    let mdp = build_gridworld(&GridSpec::corner(15, 15), 0.9).unwrap();
    let star = optimal_policy_with(&mdp, EXACT_TOL, TieBreak::Uniform).unwrap();
    let beta = mix_policies(&star, &Policy::uniform(225, 4), 0.2).unwrap();
    let q_beta = exact_q(&mdp, &beta, EXACT_TOL).unwrap();
    for alpha in oampi_core::oampi::grids::REVERSE_KL_ALPHA {
        let pi = reverse_kl(&q_beta, &beta, alpha).unwrap();
        let (lhs, rhs) = performance_difference(&mdp, &pi, &beta).unwrap();
        assert!((lhs - rhs).abs() < 1e-6, "alpha {alpha}: {lhs} vs {rhs}");
        let (improvement, lower) = conservative_bound(&mdp, &pi, &beta).unwrap();
        assert!(improvement >= lower - 1e-9, "alpha {alpha}: {improvement} < {lower}");
        // Exact one-step improvement over the behavior never hurts.
        assert!(improvement > 0.0);
    }
}
