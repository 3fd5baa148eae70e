//! Property suites over random instances for the three bound checkers, the
//! penalized-backup contraction, and occupancy normalization.

use midl_core::tabular::*;
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[test]
fn lower_bound_holds_on_constructed_instances() {
    let mut failures = Vec::new();
    for seed in 0..60u64 {
        // two families: reward-only error and small dynamics perturbations
        let tv = if seed % 3 == 2 { 0.01 } else { 0.0 };
        let inst = theorem1_instance(seed, tv).unwrap();
        let report = check_theorem1(
            &inst.m,
            &inst.m_bar,
            &inst.m_hat,
            &inst.pi,
            &inst.pi_b,
            &inst.omega,
            Some(inst.d.clone()),
            inst.f,
            inst.lambda,
            &inst.constants,
        )
        .unwrap();
        assert!(report.premise_all, "premise must hold by construction ({seed})");
        assert!(report.lambda_ge_delta, "lambda >= delta_l by construction ({seed})");
        assert!(report.max_contraction_ratio <= SUITE_GAMMA + 1e-6);
        if !report.lower_bound_all {
            failures.push(seed);
        }
    }
    assert!(failures.is_empty(), "lower bound failed on seeds {failures:?}");
}

#[test]
fn lower_bound_checker_reports_premise_false_without_failing() {
    // omega = d violates the premise everywhere (xi > 1); the checker must
    // report that rather than claim a broken implication
    let mut rng = ChaCha12Rng::seed_from_u64(5);
    let m = TabularMdp::random(5, 3, 0.9, &mut rng);
    let pi = Policy::random(5, 3, 0.3, &mut rng);
    let pi_b = Policy::random(5, 3, 0.3, &mut rng);
    let tables = build_tables(&m, &pi_b, &m, &pi, 0.5, None).unwrap();
    let omega = tables.d.clone();
    let constants = ErrorConstants::exact(&m, &m, 0.0, 0.0, Array2::from_elem((5, 3), 50.0));
    let report =
        check_theorem1(&m, &m, &m, &pi, &pi_b, &omega, None, 0.5, 1.0, &constants).unwrap();
    assert!(!report.premise_all);
    assert!(report.implication_holds, "implication is vacuous here");
}

#[test]
fn conservatism_comparison_is_strict_when_the_condition_holds() {
    for seed in 0..40u64 {
        let inst = theorem2_instance(seed, Theorem2Kind::ConditionHolds).unwrap();
        let report = check_theorem2(
            &inst.m_bar,
            &inst.m_hat,
            &inst.pi,
            &inst.omega,
            &inst.rho,
            &inst.d,
            inst.f,
            inst.lambda,
            &inst.eval_states,
        )
        .unwrap();
        assert!(report.condition, "instance built to satisfy the condition ({seed})");
        assert!(
            report.kappa1 > report.kappa2,
            "kappa1 {} <= kappa2 {} (seed {seed})",
            report.kappa1,
            report.kappa2
        );
    }
}

#[test]
fn identical_distributions_give_identical_values() {
    for seed in 0..10u64 {
        let inst = theorem2_instance(seed, Theorem2Kind::Identical).unwrap();
        let report = check_theorem2(
            &inst.m_bar,
            &inst.m_hat,
            &inst.pi,
            &inst.omega,
            &inst.rho,
            &inst.d,
            inst.f,
            inst.lambda,
            &inst.eval_states,
        )
        .unwrap();
        assert!(
            (report.kappa1 - report.kappa2).abs() <= 1e-10,
            "kappa gap {} (seed {seed})",
            report.kappa1 - report.kappa2
        );
    }
}

#[test]
fn failed_condition_is_recorded_not_asserted() {
    let inst = theorem2_instance(3, Theorem2Kind::ConditionFails).unwrap();
    let report = check_theorem2(
        &inst.m_bar,
        &inst.m_hat,
        &inst.pi,
        &inst.omega,
        &inst.rho,
        &inst.d,
        inst.f,
        inst.lambda,
        &inst.eval_states,
    )
    .unwrap();
    assert!(!report.condition);
    assert!(report.holds, "no assertion is made when the condition fails");
}

#[test]
fn safe_improvement_margin_holds_on_random_instances() {
    for seed in 0..25u64 {
        let inst = theorem3_instance(seed).unwrap();
        let report = safety_diagnostic(
            &inst.m,
            &inst.m_bar,
            &inst.m_hat,
            &inst.pi_star,
            &inst.pi_b,
            &inst.omega,
            &inst.d,
            inst.f,
            inst.lambda,
            &inst.constants,
        )
        .unwrap();
        assert!(
            report.holds,
            "J diff {} < zeta {} (seed {seed})",
            report.j_diff, report.zeta
        );
    }
}

#[test]
fn no_penalty_fixed_point_matches_unpenalized_evaluation() {
    // omega = d across 50 random instances: criterion-level sanity
    for seed in 0..50u64 {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let m_bar = TabularMdp::random(5, 3, 0.9, &mut rng);
        let m_hat = TabularMdp::random(5, 3, 0.9, &mut rng);
        let pi = Policy::random(5, 3, 0.2, &mut rng);
        let pi_b = Policy::random(5, 3, 0.2, &mut rng);
        let f = 0.5;
        let tables = build_tables(&m_bar, &pi_b, &m_hat, &pi, f, None).unwrap();
        let omega = tables.d.clone();
        let lambda = rng.random_range(0.0..8.0);
        let fp = domain_backup_fixed_point(
            &m_bar,
            &m_hat,
            &pi,
            &omega,
            &tables.d,
            &tables.d_beta,
            f,
            lambda,
        )
        .unwrap();
        let q = exact_policy_eval(&m_bar.mix(&m_hat, f), &pi).unwrap();
        for (a, b) in fp.q.iter().zip(q.iter()) {
            assert!((a - b).abs() < 1e-8, "seed {seed}: {a} vs {b}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn occupancies_sum_to_one(seed in 0u64..10_000) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let m = TabularMdp::random(4, 3, 0.9, &mut rng);
        let pi = Policy::random(4, 3, 0.1, &mut rng);
        let occ = occupancy(&m, &pi).unwrap();
        let s: f64 = occ.states.iter().sum();
        let sa: f64 = occ.state_actions.iter().sum();
        prop_assert!((s - 1.0).abs() < 1e-10);
        prop_assert!((sa - 1.0).abs() < 1e-10);
        prop_assert!(occ.states.iter().all(|&v| v >= -1e-15));
    }

    #[test]
    fn penalized_backup_contracts(seed in 0u64..10_000) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let m_bar = TabularMdp::random(4, 2, 0.9, &mut rng);
        let m_hat = TabularMdp::random(4, 2, 0.9, &mut rng);
        let pi = Policy::random(4, 2, 0.2, &mut rng);
        let eta = Array2::from_shape_fn((4, 2), |_| rng.random_range(-0.5..0.5));
        let fp = penalized_fixed_point(&m_bar, &m_hat, &pi, &eta, 0.5, 2.0).unwrap();
        prop_assert!(fp.max_contraction_ratio <= 0.9 + 1e-6,
            "ratio {}", fp.max_contraction_ratio);
        prop_assert!(fp.sweeps < 400);
    }
}
