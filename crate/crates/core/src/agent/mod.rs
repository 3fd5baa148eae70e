//! Actor-critic agent with mildly conservative policy evaluation: SAC twin
//! critics trained on a mixed offline/model Bellman error plus the
//! omega-weighted log-sum-exp penalty, and the Algorithm-style outer
//! training iteration tying rollouts, discriminators, and updates together.

mod actor;
mod critic;
mod penalty;

pub use actor::{Actor, ActorSample, EntropyCoef};
pub use critic::{
    bellman_targets, concat_sa, soft_update_net, CriticError, CriticOptimizers, CriticPair,
};
pub use penalty::{draw_penalty_actions, penalty_terms, PenaltyActions, PenaltyError, PenaltyResult};

use std::path::Path;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{OfflineDataset, Transition};
use crate::ensemble::{rollout, GaussianEnsemble, ModelBuffer, ModelError};
use crate::nn::{AdamState, Gradients, Mlp};
use crate::ratio::{sampling_weights, ErrorMode, RatioConfig, RatioError, RatioEstimator};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Critic(#[from] CriticError),
    #[error(transparent)]
    Penalty(#[from] PenaltyError),
    #[error(transparent)]
    Ratio(#[from] RatioError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("model buffer is empty; run a rollout first")]
    EmptyModelBuffer,
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Hyperparameters of the agent update loop.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AgentConfig {
    pub gamma: f64,
    pub tau: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub alpha_lr: f64,
    pub batch_size: usize,
    /// Fraction f of each batch drawn from model data.
    pub model_ratio: f64,
    /// Penalty weight lambda.
    pub lambda: f64,
    /// Rollout horizon H.
    pub horizon: usize,
    /// Actions per proposal source (uniform / policy) in the penalty.
    pub penalty_actions_per_source: usize,
    /// Next-state samples m per g(s,a) estimate.
    pub g_samples: usize,
    pub error_mode: ErrorMode,
    /// States entering the penalty term per critic step, sampled from the
    /// model batch proportionally to omega.
    pub penalty_state_samples: usize,
    pub rollout_period: usize,
    pub rollout_count: usize,
    pub buffer_capacity: usize,
    pub discriminator_steps: usize,
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub soft_update_period: usize,
}

impl Default for AgentConfig {
    fn default() -> Self {
        AgentConfig {
            gamma: 0.99,
            tau: 5e-3,
            actor_lr: 1e-4,
            critic_lr: 3e-4,
            alpha_lr: 1e-4,
            batch_size: 256,
            model_ratio: 0.5,
            lambda: 5.0,
            horizon: 5,
            penalty_actions_per_source: 10,
            g_samples: 10,
            error_mode: ErrorMode::Kl,
            penalty_state_samples: 48,
            rollout_period: 250,
            rollout_count: 1000,
            buffer_capacity: 50_000,
            discriminator_steps: 400,
            hidden_units: 256,
            hidden_layers: 2,
            soft_update_period: 1,
        }
    }
}

/// Everything the training loop mutates.
pub struct AgentBundle {
    pub actor: Actor,
    pub actor_adam: AdamState,
    pub critics: CriticPair,
    pub critic_opt: CriticOptimizers,
    pub entropy: EntropyCoef,
    pub ratio: RatioEstimator,
    ratio_config: RatioConfig,
    pub buffer: ModelBuffer,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
    pub iter: u64,
}

impl AgentBundle {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        config: &AgentConfig,
        ratio_config: &RatioConfig,
        rng: &mut R,
    ) -> Self {
        let action_dim = action_low.len();
        let actor = Actor::new(
            state_dim,
            action_low.clone(),
            action_high.clone(),
            config.hidden_units,
            config.hidden_layers,
            rng,
        );
        let actor_adam = AdamState::new(actor.net(), config.actor_lr);
        let critics = CriticPair::new(
            state_dim,
            action_dim,
            config.hidden_units,
            config.hidden_layers,
            config.tau,
            rng,
        );
        let critic_opt = CriticOptimizers::new(&critics, config.critic_lr);
        let entropy = EntropyCoef::new(action_dim, config.alpha_lr);
        let ratio = RatioEstimator::new(state_dim, action_dim, ratio_config, rng);
        AgentBundle {
            actor,
            actor_adam,
            critics,
            critic_opt,
            entropy,
            ratio,
            ratio_config: ratio_config.clone(),
            buffer: ModelBuffer::new(config.buffer_capacity),
            action_low,
            action_high,
            iter: 0,
        }
    }
}

/// Scalar metrics emitted once per outer iteration.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IterationMetrics {
    pub iter: u64,
    pub critic_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub mean_q_offline: f64,
    pub mean_q_model: f64,
    pub penalty: f64,
    pub omega_entropy: f64,
}

/// Inputs to one critic's loss.
#[derive(Debug, Clone)]
pub struct CriticBatchData {
    pub off_sa: Array2<f64>,
    pub off_targets: Array1<f64>,
    pub model_sa: Array2<f64>,
    pub model_targets: Array1<f64>,
    pub model_states: Array2<f64>,
}

#[derive(Debug, Clone, Copy)]
pub struct CriticLossParts {
    pub bellman: f64,
    pub penalty: f64,
    pub mean_q_offline: f64,
    pub mean_q_model: f64,
}

/// Loss of one critic network:
///   1/2 [ f * MSE(model) + (1-f) * MSE(offline) ] + lambda * penalty
/// Returns gradients when `want_grads` is set.
pub fn critic_loss(
    net: &Mlp,
    data: &CriticBatchData,
    pen: &PenaltyActions,
    omega: &[f64],
    lambda: f64,
    model_ratio: f64,
    want_grads: bool,
) -> Result<(f64, Option<Gradients>, CriticLossParts), AgentError> {
    let n_off = data.off_sa.nrows();
    let n_model = data.model_sa.nrows();
    let comb = ndarray::concatenate(Axis(0), &[data.off_sa.view(), data.model_sa.view()])
        .expect("batch widths match");
    let (q_raw, cache) = net.forward_batch(comb.view());
    let q = q_raw.index_axis(Axis(1), 0);

    let mut mse_off = 0.0;
    for i in 0..n_off {
        mse_off += (q[i] - data.off_targets[i]).powi(2);
    }
    mse_off /= n_off as f64;
    let mut mse_model = 0.0;
    for i in 0..n_model {
        mse_model += (q[n_off + i] - data.model_targets[i]).powi(2);
    }
    mse_model /= n_model as f64;
    let bellman = 0.5 * (model_ratio * mse_model + (1.0 - model_ratio) * mse_off);

    // Q at the proposal actions, batched per (state, action) pair. The
    // penalty's state set may be a subsample of the Bellman model batch.
    let n_pen = data.model_states.nrows();
    let s_dim = data.model_states.ncols();
    let a_dim = pen.actions.ncols();
    let per_state = pen.per_state;
    assert_eq!(pen.actions.nrows(), n_pen * per_state, "penalty action rows mismatch");
    let mut pen_sa = Array2::zeros((n_pen * per_state, s_dim + a_dim));
    for i in 0..n_pen {
        for j in 0..per_state {
            let row = i * per_state + j;
            for d in 0..s_dim {
                pen_sa[[row, d]] = data.model_states[[i, d]];
            }
            for d in 0..a_dim {
                pen_sa[[row, s_dim + d]] = pen.actions[[row, d]];
            }
        }
    }
    let (qp_raw, pen_cache) = net.forward_batch(pen_sa.view());
    let qp = qp_raw.index_axis(Axis(1), 0);
    let offline_q = q.slice(ndarray::s![..n_off]);
    let pen_res = penalty_terms(
        qp,
        pen.log_proposal.view(),
        per_state,
        omega,
        offline_q,
    )?;

    let loss = bellman + lambda * pen_res.value;
    if !loss.is_finite() {
        return Err(AgentError::NonFinite(format!(
            "critic loss (bellman {bellman}, penalty {})",
            pen_res.value
        )));
    }
    let parts = CriticLossParts {
        bellman,
        penalty: pen_res.value,
        mean_q_offline: offline_q.sum() / n_off as f64,
        mean_q_model: q.slice(ndarray::s![n_off..]).sum() / n_model as f64,
    };
    if !want_grads {
        return Ok((loss, None, parts));
    }

    let mut grad_q = Array2::zeros((n_off + n_model, 1));
    for i in 0..n_off {
        grad_q[[i, 0]] = (1.0 - model_ratio) * (q[i] - data.off_targets[i]) / n_off as f64
            + lambda * pen_res.grad_offline;
    }
    for i in 0..n_model {
        grad_q[[n_off + i, 0]] =
            model_ratio * (q[n_off + i] - data.model_targets[i]) / n_model as f64;
    }
    let (mut grads, _) = net.backward_batch(&cache, grad_q.view());
    let mut grad_qp = Array2::zeros((n_pen * per_state, 1));
    for (i, g) in pen_res.grad_q.iter().enumerate() {
        grad_qp[[i, 0]] = lambda * g;
    }
    let (pen_grads, _) = net.backward_batch(&pen_cache, grad_qp.view());
    grads.add_scaled(&pen_grads, 1.0);
    Ok((loss, Some(grads), parts))
}

#[derive(Debug)]
pub struct ActorLossOut {
    pub loss: f64,
    pub mean_log_prob: f64,
    pub grads: Option<Gradients>,
}

/// Actor objective: mean over states of alpha * log pi(a|s) - min_i Q_i(s,a)
/// with reparameterized actions (noise supplied for determinism).
pub fn actor_loss(
    actor: &Actor,
    critics: &CriticPair,
    alpha: f64,
    states: ArrayView2<f64>,
    noise: Array2<f64>,
    want_grads: bool,
) -> Result<ActorLossOut, AgentError> {
    let b = states.nrows();
    let sample = actor.sample_batch_with_noise(states, noise);
    let sa = concat_sa(states, sample.actions.view());
    let (q1_raw, c1) = critics.q1.forward_batch(sa.view());
    let (q2_raw, c2) = critics.q2.forward_batch(sa.view());
    let q1 = q1_raw.index_axis(Axis(1), 0);
    let q2 = q2_raw.index_axis(Axis(1), 0);

    let mut loss = 0.0;
    for i in 0..b {
        loss += alpha * sample.log_probs[i] - q1[i].min(q2[i]);
    }
    loss /= b as f64;
    if !loss.is_finite() {
        return Err(AgentError::NonFinite("actor loss".to_string()));
    }
    let mean_log_prob = sample.log_probs.sum() / b as f64;
    if !want_grads {
        return Ok(ActorLossOut {
            loss,
            mean_log_prob,
            grads: None,
        });
    }

    // dLoss/dQ1, dQ2: -1/b on the rows where that critic is the minimum
    let inv_b = 1.0 / b as f64;
    let mut g1 = Array2::zeros((b, 1));
    let mut g2 = Array2::zeros((b, 1));
    for i in 0..b {
        if q1[i] <= q2[i] {
            g1[[i, 0]] = -inv_b;
        } else {
            g2[[i, 0]] = -inv_b;
        }
    }
    let (_, in1) = critics.q1.backward_batch(&c1, g1.view());
    let (_, in2) = critics.q2.backward_batch(&c2, g2.view());
    let s_dim = states.ncols();
    let a_dim = sample.actions.ncols();
    let mut grad_actions = Array2::zeros((b, a_dim));
    for i in 0..b {
        for d in 0..a_dim {
            grad_actions[[i, d]] = in1[[i, s_dim + d]] + in2[[i, s_dim + d]];
        }
    }
    let grad_log_probs = Array1::from_elem(b, alpha * inv_b);
    let (grads, _) = actor.backprop_sample(&sample, grad_actions.view(), grad_log_probs.view());
    Ok(ActorLossOut {
        loss,
        mean_log_prob,
        grads: Some(grads),
    })
}

fn transition_matrices(
    transitions: &[&Transition],
) -> (Array2<f64>, Array2<f64>, Array1<f64>, Array2<f64>, Vec<bool>) {
    let n = transitions.len();
    let sd = transitions[0].state_dim();
    let ad = transitions[0].action_dim();
    let mut states = Array2::zeros((n, sd));
    let mut actions = Array2::zeros((n, ad));
    let mut rewards = Array1::zeros(n);
    let mut next_states = Array2::zeros((n, sd));
    let mut terminals = Vec::with_capacity(n);
    for (i, t) in transitions.iter().enumerate() {
        for d in 0..sd {
            states[[i, d]] = t.state[d];
            next_states[[i, d]] = t.next_state[d];
        }
        for d in 0..ad {
            actions[[i, d]] = t.action[d];
        }
        rewards[i] = t.reward;
        terminals.push(t.terminal);
    }
    (states, actions, rewards, next_states, terminals)
}

/// One outer training iteration:
/// periodic rollout collection and discriminator refresh, sampling-weight
/// computation, one actor step, one step per critic, periodic soft update.
pub fn train_iteration(
    bundle: &mut AgentBundle,
    dataset: &OfflineDataset,
    ensemble: &GaussianEnsemble,
    config: &AgentConfig,
    rng: &mut ChaCha12Rng,
) -> Result<IterationMetrics, AgentError> {
    // (1) refresh model data and discriminators on the block boundary
    if bundle.iter % config.rollout_period as u64 == 0 {
        let actor = &bundle.actor;
        rollout(
            ensemble,
            |states, r| actor.sample_batch(states, r).actions,
            dataset,
            config.horizon,
            config.rollout_count,
            &mut bundle.buffer,
            rng,
        )?;
        let model_view: Vec<Transition> = bundle
            .buffer
            .iter()
            .map(|t| t.transition.clone())
            .collect();
        // retrain from a fresh initialization each block; cumulative
        // training overfits the small offline set and corrupts the ratios
        bundle.ratio = RatioEstimator::new(
            bundle.actor.state_dim(),
            bundle.actor.action_dim(),
            &bundle.ratio_config,
            rng,
        );
        bundle.ratio.train(
            dataset.transitions(),
            &model_view,
            config.discriminator_steps,
            rng,
        )?;
    }
    if bundle.buffer.is_empty() {
        return Err(AgentError::EmptyModelBuffer);
    }

    // (2) sample the mixed batch
    let n_model = ((config.batch_size as f64) * config.model_ratio).round() as usize;
    let n_off = config.batch_size - n_model;
    let offline: Vec<&Transition> = (0..n_off)
        .map(|_| &dataset.transitions()[rng.random_range(0..dataset.len())])
        .collect();
    let model_idx = bundle.buffer.sample_indices(n_model, rng);
    let model: Vec<&Transition> = model_idx
        .iter()
        .map(|&i| &bundle.buffer.get(i).transition)
        .collect();
    let (off_states, off_actions, off_rewards, off_next, off_term) =
        transition_matrices(&offline);
    let (model_states, model_actions, model_rewards, model_next, model_term) =
        transition_matrices(&model);

    // (3) adaptive weights for the model batch
    let weights = sampling_weights(
        &bundle.ratio.pair,
        ensemble,
        model_states.view(),
        model_actions.view(),
        config.g_samples,
        config.error_mode,
        rng,
    )?;

    // (4) Bellman targets from the pre-update networks
    let alpha = bundle.entropy.alpha();
    let next_all = ndarray::concatenate(Axis(0), &[off_next.view(), model_next.view()]).unwrap();
    let rewards_all =
        ndarray::concatenate(Axis(0), &[off_rewards.view(), model_rewards.view()]).unwrap();
    let mut term_all = off_term.clone();
    term_all.extend(model_term);
    let targets = bellman_targets(
        &bundle.critics,
        &bundle.actor,
        alpha,
        config.gamma,
        rewards_all.view(),
        next_all.view(),
        &term_all,
        rng,
    )?;
    let off_targets = targets.slice(ndarray::s![..n_off]).to_owned();
    let model_targets = targets.slice(ndarray::s![n_off..]).to_owned();

    // (5) focus the penalty on high-uncertainty data: sample states from
    // the model batch proportionally to omega (uniform weights afterwards)
    let k = config.penalty_state_samples.min(n_model).max(1);
    let pen_states = {
        let mut out = Array2::zeros((k, model_states.ncols()));
        for row in 0..k {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = n_model - 1;
            for (i, &w) in weights.omega.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            out.row_mut(row).assign(&model_states.row(pick));
        }
        out
    };
    let pen_omega = vec![1.0 / k as f64; k];

    // (6) actor update (policy improvement precedes the critic step)
    let all_states =
        ndarray::concatenate(Axis(0), &[off_states.view(), model_states.view()]).unwrap();
    let mut noise = Array2::zeros((all_states.nrows(), bundle.actor.action_dim()));
    for v in noise.iter_mut() {
        *v = rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng);
    }
    let actor_out = actor_loss(
        &bundle.actor,
        &bundle.critics,
        alpha,
        all_states.view(),
        noise,
        true,
    )?;
    bundle
        .actor_adam
        .step(bundle.actor.net_mut(), actor_out.grads.as_ref().unwrap());
    bundle.entropy.update(actor_out.mean_log_prob);

    // (7) critic updates with shared targets and shared proposal actions
    let pen = draw_penalty_actions(
        &bundle.actor,
        pen_states.view(),
        config.penalty_actions_per_source,
        &bundle.action_low,
        &bundle.action_high,
        rng,
    )?;
    let data = CriticBatchData {
        off_sa: concat_sa(off_states.view(), off_actions.view()),
        off_targets,
        model_sa: concat_sa(model_states.view(), model_actions.view()),
        model_targets,
        model_states: pen_states,
    };
    let (loss1, grads1, parts1) = critic_loss(
        &bundle.critics.q1,
        &data,
        &pen,
        &pen_omega,
        config.lambda,
        config.model_ratio,
        true,
    )?;
    let (loss2, grads2, parts2) = critic_loss(
        &bundle.critics.q2,
        &data,
        &pen,
        &pen_omega,
        config.lambda,
        config.model_ratio,
        true,
    )?;
    bundle
        .critic_opt
        .adam1
        .step(&mut bundle.critics.q1, grads1.as_ref().unwrap());
    bundle
        .critic_opt
        .adam2
        .step(&mut bundle.critics.q2, grads2.as_ref().unwrap());

    // (8) soft target tracking
    if bundle.iter % config.soft_update_period as u64 == 0 {
        bundle.critics.soft_update();
    }

    let metrics = IterationMetrics {
        iter: bundle.iter,
        critic_loss: 0.5 * (loss1 + loss2),
        actor_loss: actor_out.loss,
        alpha: bundle.entropy.alpha(),
        mean_q_offline: 0.5 * (parts1.mean_q_offline + parts2.mean_q_offline),
        mean_q_model: 0.5 * (parts1.mean_q_model + parts2.mean_q_model),
        penalty: 0.5 * (parts1.penalty + parts2.penalty),
        omega_entropy: weights.entropy(),
    };
    bundle.iter += 1;
    Ok(metrics)
}

/// Persistable agent state (networks and temperature; the model buffer is
/// reconstructed by fresh rollouts).
#[derive(Serialize, Deserialize)]
struct AgentCheckpoint {
    version: u32,
    actor: Actor,
    critics: CriticPair,
    entropy: EntropyCoef,
    discriminators: crate::ratio::DiscriminatorPair,
    action_low: Vec<f64>,
    action_high: Vec<f64>,
}

const CHECKPOINT_VERSION: u32 = 1;

pub struct AgentSnapshot {
    pub actor: Actor,
    pub critics: CriticPair,
    pub entropy: EntropyCoef,
    pub discriminators: crate::ratio::DiscriminatorPair,
    pub action_low: Vec<f64>,
    pub action_high: Vec<f64>,
}

pub fn save_agent(bundle: &AgentBundle, path: &Path) -> Result<(), AgentError> {
    let ckpt = AgentCheckpoint {
        version: CHECKPOINT_VERSION,
        actor: bundle.actor.clone(),
        critics: bundle.critics.clone(),
        entropy: bundle.entropy.clone(),
        discriminators: bundle.ratio.pair.clone(),
        action_low: bundle.action_low.clone(),
        action_high: bundle.action_high.clone(),
    };
    let blob = serde_json::to_vec(&ckpt).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    std::fs::write(path, blob).map_err(|e| AgentError::Checkpoint(e.to_string()))
}

pub fn load_agent(path: &Path) -> Result<AgentSnapshot, AgentError> {
    let blob = std::fs::read(path).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    let ckpt: AgentCheckpoint =
        serde_json::from_slice(&blob).map_err(|e| AgentError::Checkpoint(e.to_string()))?;
    if ckpt.version != CHECKPOINT_VERSION {
        return Err(AgentError::Checkpoint(format!(
            "unsupported checkpoint version {}",
            ckpt.version
        )));
    }
    Ok(AgentSnapshot {
        actor: ckpt.actor,
        critics: ckpt.critics,
        entropy: ckpt.entropy,
        discriminators: ckpt.discriminators,
        action_low: ckpt.action_low,
        action_high: ckpt.action_high,
    })
}
