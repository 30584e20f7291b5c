use oampi_core::diag::{annotate_run, DiagOptions};
use oampi_core::mdp::{j_value, mix_policies, optimal_policy_with, EXACT_TOL};
use oampi_core::oampi::{self, run, run_sweep_cell, sweep_cells};
use oampi_core::rng::{child_rng, streams};
use oampi_core::{
    build_gridworld, collect, BehaviorSource, Dataset, GridSpec, ImprovementSpec, OampiConfig,
    Policy, TabularMdp, TieBreak, Variant,
};
use proptest::prelude::*;

fn setup(width: usize, n_traj: usize, seed: u64) -> (TabularMdp, Policy, Dataset) {
    let mdp = build_gridworld(&GridSpec::corner(width, width), 0.9).unwrap();
    let star = optimal_policy_with(&mdp, EXACT_TOL, TieBreak::Uniform).unwrap();
    let n = width * width;
    let beta = mix_policies(&star, &Policy::uniform(n, 4), 0.2).unwrap();
    let data = collect(&mdp, &beta, n_traj, 50, &mut child_rng(seed, streams::DATA)).unwrap();
    (mdp, beta, data)
}

#[test]
fn heavy_regularization_returns_the_behavior_estimate() {
    let (mdp, _, data) = setup(15, 100, 0);
    let mut js = Vec::new();
    for variant in Variant::ALL {
        let mut config = OampiConfig::for_variant(variant, ImprovementSpec::reverse_kl(1e9));
        config.behavior_source = BehaviorSource::Empirical;
        let result = run(&mdp, &data, None, &config).unwrap();
        assert_eq!(result.iterations.len(), config.iterations());
        assert!(result.final_policy().max_abs_diff(&result.model.behavior_hat) < 1e-6);
        js.push(result.final_j());
    }
    let j_hat = j_value(&mdp, &oampi_core::fit_empirical(&data, 225, 4).unwrap().behavior_hat).unwrap();
    for j in js {
        assert!((j - j_hat).abs() < 1e-6);
    }
}

#[test]
fn sweep_cells_do_not_depend_on_execution_order() {
    let (mdp, beta, data) = setup(6, 30, 1);
    let base = OampiConfig::multi_step(ImprovementSpec::reverse_kl(1.0), 3);
    let cells = sweep_cells(&[0.1, 1.0, 10.0], 3);
    let forward: Vec<f64> = cells
        .iter()
        .map(|c| run_sweep_cell(&mdp, &data, Some(&beta), &base, c).unwrap())
        .collect();
    let mut backward: Vec<f64> = cells
        .iter()
        .rev()
        .map(|c| run_sweep_cell(&mdp, &data, Some(&beta), &base, c).unwrap())
        .collect();
    backward.reverse();
    assert_eq!(forward, backward);
    let report = oampi::sweep(&mdp, &data, Some(&beta), &base, &[0.1, 1.0, 10.0], 3).unwrap();
    let flat: Vec<f64> = report.entries.iter().flat_map(|e| e.returns.clone()).collect();
    assert_eq!(flat, forward);
}

#[test]
fn annotated_runs_carry_consistent_diagnostics() {
    let (mdp, beta, data) = setup(8, 40, 2);
    let config = OampiConfig::multi_step(ImprovementSpec::reverse_kl(0.1), 4);
    let mut result = run(&mdp, &data, Some(&beta), &config).unwrap();
    annotate_run(&mut result, &mdp, &data, &DiagOptions::default()).unwrap();
    assert_eq!(result.diagnostics.len(), 5);
    let curve = result.j_curve();
    for (k, d) in result.diagnostics.iter().enumerate() {
        assert_eq!(d.k, k);
        assert_eq!(d.j, curve[k]);
        assert_eq!(d.report.overestimation.histogram.total(), data.n_steps() as u64);
        assert!(d.report.kl_to_behavior >= 0.0);
        let (lhs, rhs) = d.report.lemma_checks[0];
        assert!((lhs - rhs).abs() < 1e-6);
        let (improvement, lower) = d.report.lemma_checks[1];
        assert!(improvement >= lower - 1e-9);
    }
    assert_eq!(result.diagnostics[0].report.kl_to_behavior, 0.0);

    let sparse = DiagOptions { every: 3, lemma_checks: false, ..DiagOptions::default() };
    annotate_run(&mut result, &mdp, &data, &sparse).unwrap();
    let ks: Vec<usize> = result.diagnostics.iter().map(|d| d.k).collect();
    assert_eq!(ks, vec![0, 3, 4]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn runs_are_reproducible(seed in 0u64..1000, variant_index in 0usize..3, alpha in 0.05f64..5.0) {
        let (mdp, beta, data) = setup(5, 10, seed);
        let mut config = OampiConfig::for_variant(Variant::ALL[variant_index], ImprovementSpec::reverse_kl(alpha));
        config.k_iterations = config.k_iterations.min(25);
        config.seed = seed;
        let a = run(&mdp, &data, Some(&beta), &config).unwrap();
        let b = run(&mdp, &data, Some(&beta), &config).unwrap();
        prop_assert_eq!(&a, &b);
        for pair in a.iterations.windows(2) {
            prop_assert!(pair[0].k + 1 == pair[1].k);
        }
    }

    #[test]
    fn behavior_cloning_keeps_the_curve_flat(seed in 0u64..1000, variant_index in 0usize..3) {
        let (mdp, beta, data) = setup(5, 10, seed);
        let mut config = OampiConfig::for_variant(Variant::ALL[variant_index], ImprovementSpec::BehaviorClone);
        config.k_iterations = config.k_iterations.min(10);
        let result = run(&mdp, &data, Some(&beta), &config).unwrap();
        for j in result.j_curve() {
            prop_assert_eq!(j, result.j_behavior);
        }
    }
}
