//! Finite-difference verification of every gradient path in the crate:
//! Gaussian-NLL model heads, cross-entropy discriminators, the penalized
//! critic loss, and the reparameterized actor loss.

use midl_core::agent::{
    actor_loss, critic_loss, draw_penalty_actions, Actor, CriticBatchData, CriticPair,
};
use midl_core::grad_check::{central_difference, grad_rel_err, kink_free_net_and_batch, FD_STEP};
use midl_core::nn::GaussianHead;
use midl_core::ratio::Discriminator;
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

const PROBES: usize = 100;

fn probe_indices(n_params: usize, count: usize) -> impl Iterator<Item = usize> {
    (0..count).map(move |k| (k * 2654435761 + 1) % n_params)
}

#[test]
fn model_head_gradients_match_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(101);
    let head = GaussianHead::new(2);
    let (mut net, x) = kink_free_net_and_batch(&[3, 16, 16, head.raw_dim()], 4, 1e-3, &mut rng);
    let targets = Array2::from_shape_fn((4, 2), |_| rng.random_range(-0.5..0.5));

    let loss = |net: &midl_core::nn::Mlp| {
        let raw = net.output_batch(x.view());
        head.nll_batch_grad(raw.view(), targets.view()).0
    };
    let (raw, cache) = net.forward_batch(x.view());
    let (_, grad_raw) = head.nll_batch_grad(raw.view(), targets.view());
    let (grads, _) = net.backward_batch(&cache, grad_raw.view());

    let mut worst = 0.0_f64;
    for idx in probe_indices(net.num_params(), PROBES) {
        let fd = central_difference(&mut net, idx, FD_STEP, loss);
        worst = worst.max(grad_rel_err(grads.flat(idx), fd));
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn discriminator_gradients_match_finite_differences() {
    let mut rng = ChaCha12Rng::seed_from_u64(202);
    let offline = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
    let model = Array2::from_shape_fn((5, 3), |_| rng.random_range(-1.0..1.0));
    // rebuild until all rows clear the ReLU kinks
    let disc = loop {
        let d = Discriminator::new(3, 16, 1, &mut rng);
        let clear = offline
            .rows()
            .into_iter()
            .chain(model.rows())
            .all(|r| d.net().min_abs_preactivation(r) > 1e-3);
        if clear {
            break d;
        }
    };
    let (_, grads) = disc.cross_entropy(offline.view(), model.view()).unwrap();
    let mut disc = disc;
    let mut worst = 0.0_f64;
    let n = disc.net().num_params();
    for idx in probe_indices(n, PROBES) {
        let orig = disc.net().param(idx);
        disc.net_mut().set_param(idx, orig + FD_STEP);
        let plus = disc.cross_entropy(offline.view(), model.view()).unwrap().0;
        disc.net_mut().set_param(idx, orig - FD_STEP);
        let minus = disc.cross_entropy(offline.view(), model.view()).unwrap().0;
        disc.net_mut().set_param(idx, orig);
        let fd = (plus - minus) / (2.0 * FD_STEP);
        worst = worst.max(grad_rel_err(grads.flat(idx), fd));
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

fn tiny_critic_setup(
    seed: u64,
) -> (
    CriticPair,
    Actor,
    CriticBatchData,
    midl_core::agent::PenaltyActions,
    Vec<f64>,
) {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let critics = CriticPair::new(1, 1, 8, 2, 5e-3, &mut rng);
    let actor = Actor::new(1, vec![-1.0], vec![1.0], 8, 2, &mut rng);
    let n_off = 3;
    let n_model = 3;
    let off_sa = Array2::from_shape_fn((n_off, 2), |_| rng.random_range(-0.8..0.8));
    let model_sa = Array2::from_shape_fn((n_model, 2), |_| rng.random_range(-0.8..0.8));
    let model_states = model_sa
        .slice(ndarray::s![.., ..1])
        .to_owned();
    let off_targets = Array1::from_shape_fn(n_off, |_| rng.random_range(-1.0..1.0));
    let model_targets = Array1::from_shape_fn(n_model, |_| rng.random_range(-1.0..1.0));
    let pen = draw_penalty_actions(
        &actor,
        model_states.view(),
        2,
        &[-1.0],
        &[1.0],
        &mut rng,
    )
    .unwrap();
    let omega = vec![0.5, 0.3, 0.2];
    let data = CriticBatchData {
        off_sa,
        off_targets,
        model_sa,
        model_targets,
        model_states,
    };
    (critics, actor, data, pen, omega)
}

#[test]
fn critic_gradients_match_finite_differences() {
    let mut worst = 0.0_f64;
    let mut seed = 303;
    let mut probes_done = 0;
    while probes_done < PROBES {
        let (critics, _, data, pen, omega) = tiny_critic_setup(seed);
        seed += 1;
        let mut net = critics.q1;
        // keep clear of ReLU kinks at every evaluated row
        let rows_clear = data
            .off_sa
            .rows()
            .into_iter()
            .chain(data.model_sa.rows())
            .all(|r| net.min_abs_preactivation(r) > 1e-3);
        if !rows_clear {
            continue;
        }
        let (_, grads, _) = critic_loss(&net, &data, &pen, &omega, 5.0, 0.5, true).unwrap();
        let grads = grads.unwrap();
        let loss =
            |net: &midl_core::nn::Mlp| critic_loss(net, &data, &pen, &omega, 5.0, 0.5, false)
                .unwrap()
                .0;
        for idx in probe_indices(net.num_params(), 10) {
            let fd = central_difference(&mut net, idx, FD_STEP, loss);
            worst = worst.max(grad_rel_err(grads.flat(idx), fd));
            probes_done += 1;
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn actor_gradients_match_finite_differences() {
    let mut worst = 0.0_f64;
    let mut seed = 404;
    let mut probes_done = 0;
    while probes_done < PROBES {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        seed += 1;
        let critics = CriticPair::new(1, 1, 8, 2, 5e-3, &mut rng);
        let mut actor = Actor::new(1, vec![-1.0], vec![1.0], 8, 2, &mut rng);
        let states = Array2::from_shape_fn((4, 1), |_| rng.random_range(-0.8..0.8));
        let noise = Array2::from_shape_fn((4, 1), |_| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng)
        });
        // actor kinks at the probed states
        if !(0..4).all(|i| actor.net().min_abs_preactivation(states.row(i)) > 1e-3) {
            continue;
        }
        // critic kinks at the sampled (s, a) and min-tie gaps
        let sample = actor.sample_batch_with_noise(states.view(), noise.clone());
        let sa = midl_core::agent::concat_sa(states.view(), sample.actions.view());
        let q1 = CriticPair::q_values(&critics.q1, sa.view());
        let q2 = CriticPair::q_values(&critics.q2, sa.view());
        let clear = (0..4).all(|i| {
            critics.q1.min_abs_preactivation(sa.row(i)) > 1e-3
                && critics.q2.min_abs_preactivation(sa.row(i)) > 1e-3
                && (q1[i] - q2[i]).abs() > 1e-3
        });
        if !clear {
            continue;
        }
        let alpha = 0.2;
        let out = actor_loss(&actor, &critics, alpha, states.view(), noise.clone(), true).unwrap();
        let grads = out.grads.unwrap();
        for idx in probe_indices(actor.net().num_params(), 10) {
            let orig = actor.net().param(idx);
            actor.net_mut().set_param(idx, orig + FD_STEP);
            let plus = actor_loss(&actor, &critics, alpha, states.view(), noise.clone(), false)
                .unwrap()
                .loss;
            actor.net_mut().set_param(idx, orig - FD_STEP);
            let minus = actor_loss(&actor, &critics, alpha, states.view(), noise.clone(), false)
                .unwrap()
                .loss;
            actor.net_mut().set_param(idx, orig);
            let fd = (plus - minus) / (2.0 * FD_STEP);
            worst = worst.max(grad_rel_err(grads.flat(idx), fd));
            probes_done += 1;
        }
    }
    assert!(worst <= 1e-4, "worst relative error {worst}");
}

#[test]
fn penalty_contribution_scales_linearly_in_lambda() {
    let (critics, _, data, pen, omega) = tiny_critic_setup(909);
    let net = critics.q1;
    let (l1, g1, p1) = critic_loss(&net, &data, &pen, &omega, 1.0, 0.5, true).unwrap();
    let (l2, g2, p2) = critic_loss(&net, &data, &pen, &omega, 2.0, 0.5, true).unwrap();
    let (l0, g0, _) = critic_loss(&net, &data, &pen, &omega, 0.0, 0.5, true).unwrap();
    assert!((p1.penalty - p2.penalty).abs() < 1e-12, "penalty value is lambda-free");
    // loss and gradient penalty contributions double exactly
    assert!(((l2 - l0) - 2.0 * (l1 - l0)).abs() < 1e-10);
    let (g0, g1, g2) = (g0.unwrap(), g1.unwrap(), g2.unwrap());
    for idx in probe_indices(net.num_params(), 40) {
        let d1 = g1.flat(idx) - g0.flat(idx);
        let d2 = g2.flat(idx) - g0.flat(idx);
        assert!((d2 - 2.0 * d1).abs() <= 1e-10 * d1.abs().max(1.0));
    }
}
