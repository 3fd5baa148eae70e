//! Discriminator training oracles: indistinguishable classes, separable
//! classes, analytic Gaussian density-ratio recovery, and the sampling
//! weight invariants.

use midl_core::dataset::Transition;
use midl_core::nn::normal_logpdf;
use midl_core::ratio::{
    sampling_weights, spearman, ErrorMode, RatioConfig, RatioEstimator, SamplingWeights,
    CLASS_MODEL, CLASS_OFFLINE, KL_CLIP, RATIO_CLIP,
};
use ndarray::{Array1, Array2};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};

fn transitions_1d(points: &[(f64, f64, f64)]) -> Vec<Transition> {
    points
        .iter()
        .map(|&(s, a, s2)| Transition {
            state: vec![s],
            action: vec![a],
            reward: 0.0,
            next_state: vec![s2],
            terminal: false,
        })
        .collect()
}

#[test]
fn identical_classes_converge_to_coin_flip() {
    let mut rng = ChaCha12Rng::seed_from_u64(0);
    let points: Vec<(f64, f64, f64)> = (0..512)
        .map(|_| {
            (
                rng.random_range(0.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(0.0..1.5),
            )
        })
        .collect();
    let data = transitions_1d(&points);
    let mut est = RatioEstimator::new(1, 1, &RatioConfig::default(), &mut rng);
    let (loss_sas, loss_sa) = est.train(&data, &data, 300, &mut rng).unwrap();
    assert!((loss_sas - 2.0 * (2.0_f64).ln()).abs() < 0.05, "sas loss {loss_sas}");
    assert!((loss_sa - 2.0 * (2.0_f64).ln()).abs() < 0.05, "sa loss {loss_sa}");
    let p = est.pair.d_sas.prob_one(Array1::from(vec![0.5, 0.0, 0.7]).view());
    assert!((p[CLASS_OFFLINE] - 0.5).abs() < 0.1, "p {p:?}");
}

#[test]
fn disjoint_supports_are_classified() {
    let mut rng = ChaCha12Rng::seed_from_u64(1);
    let offline: Vec<(f64, f64, f64)> = (0..512)
        .map(|_| (rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(0.0..1.0)))
        .collect();
    let model: Vec<(f64, f64, f64)> = (0..512)
        .map(|_| (rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(2.0..3.0)))
        .collect();
    let offline = transitions_1d(&offline);
    let model = transitions_1d(&model);
    let mut est = RatioEstimator::new(1, 1, &RatioConfig::default(), &mut rng);
    est.train(&offline, &model, 400, &mut rng).unwrap();

    let mut correct = 0;
    let mut total = 0;
    for t in offline.iter().take(200) {
        let p = est.pair.d_sas.prob_one(
            Array1::from(vec![t.state[0], t.action[0], t.next_state[0]]).view(),
        );
        if p[CLASS_OFFLINE] > 0.5 {
            correct += 1;
        }
        total += 1;
    }
    for t in model.iter().take(200) {
        let p = est.pair.d_sas.prob_one(
            Array1::from(vec![t.state[0], t.action[0], t.next_state[0]]).view(),
        );
        if p[CLASS_MODEL] > 0.5 {
            correct += 1;
        }
        total += 1;
    }
    let acc = correct as f64 / total as f64;
    assert!(acc >= 0.95, "accuracy {acc}");
}

#[test]
fn zero_learning_rate_changes_nothing() {
    let mut rng = ChaCha12Rng::seed_from_u64(2);
    let data = transitions_1d(&[(0.1, 0.0, 0.5), (0.7, 0.2, 0.9)]);
    let config = RatioConfig {
        learning_rate: 0.0,
        batch_size: 2,
        ..RatioConfig::default()
    };
    let mut est = RatioEstimator::new(1, 1, &config, &mut rng);
    let before: Vec<f64> = (0..est.pair.d_sas.net().num_params())
        .map(|i| est.pair.d_sas.net().param(i))
        .collect();
    est.train(&data, &data, 1, &mut rng).unwrap();
    let after: Vec<f64> = (0..est.pair.d_sas.net().num_params())
        .map(|i| est.pair.d_sas.net().param(i))
        .collect();
    assert_eq!(before, after);
}

/// Two 1-D Gaussians as the classes; the implied density ratio from the
/// trained classifier must land within x2 of the analytic ratio over the
/// offline class's central 90% mass.
#[test]
fn gaussian_density_ratio_recovery() {
    let mut rng = ChaCha12Rng::seed_from_u64(3);
    let (mu0, mu1, sd) = (-0.5, 0.5, 1.0);
    let draw = |mu: f64, rng: &mut ChaCha12Rng| -> Vec<Transition> {
        (0..4000)
            .map(|_| {
                let eps: f64 = StandardNormal.sample(rng);
                Transition {
                    state: vec![0.0],
                    action: vec![0.0],
                    next_state: vec![mu + sd * eps],
                    reward: 0.0,
                    terminal: false,
                }
            })
            .collect()
    };
    let offline = draw(mu0, &mut rng);
    let model = draw(mu1, &mut rng);
    let mut est = RatioEstimator::new(1, 1, &RatioConfig::default(), &mut rng);
    est.train(&offline, &model, 2000, &mut rng).unwrap();

    // central 90% of the offline class: mu0 +/- 1.645 sd
    let mut worst = 0.0_f64;
    for k in 0..41 {
        let x = mu0 - 1.645 + 2.0 * 1.645 * k as f64 / 40.0;
        let p = est
            .pair
            .d_sas
            .prob_one(Array1::from(vec![0.0, 0.0, x]).view());
        let est_ratio = p[CLASS_MODEL] / p[CLASS_OFFLINE];
        let true_ratio = (normal_logpdf(x, mu1, sd) - normal_logpdf(x, mu0, sd)).exp();
        let factor = est_ratio / true_ratio;
        worst = worst.max(factor.max(1.0 / factor));
    }
    assert!(worst <= 2.0, "worst ratio factor {worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn weights_normalize_and_stay_monotone(g in proptest::collection::vec(1e-45f64..10.0, 2..64)) {
        let w = SamplingWeights::from_g(g.clone());
        let sum: f64 = w.omega.iter().sum();
        prop_assert!((sum - 1.0).abs() < 1e-6);
        for (i, &gi) in g.iter().enumerate() {
            prop_assert!(gi >= KL_CLIP.0 && gi <= KL_CLIP.1);
            for (j, &gj) in g.iter().enumerate() {
                if gi < gj {
                    prop_assert!(w.omega[i] <= w.omega[j] + 1e-12);
                }
            }
        }
    }
}

/// End-to-end clip conformance on real (untrained and trained) networks.
#[test]
fn g_and_ratio_respect_clip_ranges() {
    let mut rng = ChaCha12Rng::seed_from_u64(4);
    let ds = midl_core::toy::generate_toy_dataset(&midl_core::toy::ToyMdpSpec::default(), 6);
    let config = midl_core::ensemble::ModelConfig {
        members: 2,
        elites: 2,
        hidden_layers: 1,
        hidden_units: 16,
        epochs: 20,
        ..Default::default()
    };
    let ens = midl_core::ensemble::train_ensemble(&ds, &config, 1).unwrap();
    let est = RatioEstimator::new(1, 1, &RatioConfig::default(), &mut rng);
    let states = Array2::from_shape_fn((32, 1), |_| rng.random_range(0.0..1.0));
    let actions = Array2::from_shape_fn((32, 1), |_| rng.random_range(-1.0..1.0));
    let w = sampling_weights(
        &est.pair,
        &ens,
        states.view(),
        actions.view(),
        10,
        ErrorMode::Kl,
        &mut rng,
    )
    .unwrap();
    for &g in &w.g {
        assert!((KL_CLIP.0..=KL_CLIP.1).contains(&g));
    }
    let r = midl_core::ratio::dynamics_ratio(
        &est.pair,
        ndarray::array![0.5].view(),
        ndarray::array![0.0].view(),
        ndarray::array![1.0].view(),
    );
    assert!((RATIO_CLIP.0..=RATIO_CLIP.1).contains(&r));
}

#[test]
fn spearman_handles_ties_with_average_ranks() {
    let xs = [1.0, 2.0, 2.0, 3.0];
    let ys = [1.0, 2.5, 2.5, 4.0];
    assert!((spearman(&xs, &ys) - 1.0).abs() < 1e-12);
}
