//! Twin Q networks with soft target copies and the SAC-style entropy-aware
//! Bellman target.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::{Activation, AdamState, Mlp};

use super::actor::Actor;

#[derive(Debug, Error)]
pub enum CriticError {
    #[error("non-finite Bellman target at row {row}")]
    NonFiniteTarget { row: usize },
    #[error("non-finite critic loss: {0}")]
    NonFiniteLoss(String),
}

/// Q1/Q2 plus their slowly tracking target copies.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CriticPair {
    pub q1: Mlp,
    pub q2: Mlp,
    pub target1: Mlp,
    pub target2: Mlp,
    pub tau: f64,
}

impl CriticPair {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        hidden_units: usize,
        hidden_layers: usize,
        tau: f64,
        rng: &mut R,
    ) -> Self {
        assert!(tau > 0.0 && tau < 1.0, "tau must lie in (0, 1)");
        let mut sizes = vec![state_dim + action_dim];
        sizes.extend(std::iter::repeat(hidden_units).take(hidden_layers));
        sizes.push(1);
        let q1 = Mlp::new(&sizes, Activation::Relu, rng);
        let q2 = Mlp::new(&sizes, Activation::Relu, rng);
        let target1 = q1.clone();
        let target2 = q2.clone();
        CriticPair {
            q1,
            q2,
            target1,
            target2,
            tau,
        }
    }

    /// Elementwise target <- tau * live + (1 - tau) * target.
    pub fn soft_update(&mut self) {
        soft_update_net(&mut self.target1, &self.q1, self.tau);
        soft_update_net(&mut self.target2, &self.q2, self.tau);
    }

    /// Q values of one network on concatenated (s, a) rows.
    pub fn q_values(net: &Mlp, sa: ArrayView2<f64>) -> Array1<f64> {
        net.output_batch(sa).index_axis_move(Axis(1), 0)
    }

    /// min(Q1, Q2) on (s, a) rows, using the live networks.
    pub fn min_q(&self, sa: ArrayView2<f64>) -> Array1<f64> {
        let q1 = Self::q_values(&self.q1, sa);
        let q2 = Self::q_values(&self.q2, sa);
        let mut out = q1;
        for (v, &w) in out.iter_mut().zip(q2.iter()) {
            *v = v.min(w);
        }
        out
    }
}

/// Elementwise `target <- tau * live + (1 - tau) * target` for arbitrary
/// parameter vectors.
pub fn soft_update_net(target: &mut Mlp, live: &Mlp, tau: f64) {
    let (tw, tb) = target.weights_and_biases_mut();
    let (lw, lb) = live.weights_and_biases();
    for (t, l) in tw.iter_mut().zip(lw) {
        t.zip_mut_with(l, |x, &y| *x = tau * y + (1.0 - tau) * *x);
    }
    for (t, l) in tb.iter_mut().zip(lb) {
        t.zip_mut_with(l, |x, &y| *x = tau * y + (1.0 - tau) * *x);
    }
}

pub fn concat_sa(states: ArrayView2<f64>, actions: ArrayView2<f64>) -> Array2<f64> {
    assert_eq!(states.nrows(), actions.nrows());
    let (b, sd, ad) = (states.nrows(), states.ncols(), actions.ncols());
    let mut out = Array2::zeros((b, sd + ad));
    for i in 0..b {
        for d in 0..sd {
            out[[i, d]] = states[[i, d]];
        }
        for d in 0..ad {
            out[[i, sd + d]] = actions[[i, d]];
        }
    }
    out
}

/// SAC Bellman target: r + gamma * (1 - terminal) * [min target Q(s', a') -
/// alpha log pi(a'|s')] with a' freshly sampled from the actor.
#[allow(clippy::too_many_arguments)]
pub fn bellman_targets(
    critics: &CriticPair,
    actor: &Actor,
    alpha: f64,
    gamma: f64,
    rewards: ArrayView1<f64>,
    next_states: ArrayView2<f64>,
    terminals: &[bool],
    rng: &mut ChaCha12Rng,
) -> Result<Array1<f64>, CriticError> {
    let sample = actor.sample_batch(next_states, rng);
    let sa = concat_sa(next_states, sample.actions.view());
    let t1 = CriticPair::q_values(&critics.target1, sa.view());
    let t2 = CriticPair::q_values(&critics.target2, sa.view());
    let mut out = Array1::zeros(rewards.len());
    for i in 0..rewards.len() {
        let boot = if terminals[i] {
            0.0
        } else {
            gamma * (t1[i].min(t2[i]) - alpha * sample.log_probs[i])
        };
        out[i] = rewards[i] + boot;
        if !out[i].is_finite() {
            return Err(CriticError::NonFiniteTarget { row: i });
        }
    }
    Ok(out)
}

/// Optimizer states for the two live critics.
#[derive(Debug, Clone)]
pub struct CriticOptimizers {
    pub adam1: AdamState,
    pub adam2: AdamState,
}

impl CriticOptimizers {
    pub fn new(critics: &CriticPair, lr: f64) -> Self {
        CriticOptimizers {
            adam1: AdamState::new(&critics.q1, lr),
            adam2: AdamState::new(&critics.q2, lr),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn setup() -> (CriticPair, Actor, ChaCha12Rng) {
        let mut rng = ChaCha12Rng::seed_from_u64(2);
        let critics = CriticPair::new(1, 1, 16, 2, 5e-3, &mut rng);
        let actor = Actor::new(1, vec![-1.0], vec![1.0], 16, 2, &mut rng);
        (critics, actor, rng)
    }

    fn constant_critics(c1: f64, c2: f64) -> CriticPair {
        let mut make = |c: f64| {
            let mut net = Mlp::zeros(&[2, 1], Activation::Relu);
            net.set_param(2, c); // bias of the single output
            net
        };
        let q1 = make(c1);
        let q2 = make(c2);
        CriticPair {
            target1: q1.clone(),
            target2: q2.clone(),
            q1,
            q2,
            tau: 0.5,
        }
    }

    #[test]
    fn terminal_transition_target_is_reward() {
        let (critics, actor, mut rng) = setup();
        let r = ndarray::array![0.7];
        let ns = ndarray::array![[0.1]];
        let y = bellman_targets(
            &critics, &actor, 0.3, 0.99, r.view(), ns.view(), &[true], &mut rng,
        )
        .unwrap();
        assert_eq!(y[0], 0.7);
    }

    #[test]
    fn constant_targets_with_zero_alpha() {
        let critics = constant_critics(5.0, 5.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let actor = Actor::new(1, vec![-1.0], vec![1.0], 8, 1, &mut rng);
        let r = ndarray::array![1.0];
        let ns = ndarray::array![[0.0]];
        let y = bellman_targets(
            &critics, &actor, 0.0, 0.99, r.view(), ns.view(), &[false], &mut rng,
        )
        .unwrap();
        assert!((y[0] - (1.0 + 0.99 * 5.0)).abs() < 1e-12);
    }

    #[test]
    fn target_uses_min_of_the_two_critics() {
        let critics = constant_critics(3.0, 5.0);
        let mut rng = ChaCha12Rng::seed_from_u64(0);
        let actor = Actor::new(1, vec![-1.0], vec![1.0], 8, 1, &mut rng);
        let r = ndarray::array![1.0];
        let ns = ndarray::array![[0.0]];
        let y = bellman_targets(
            &critics, &actor, 0.0, 0.99, r.view(), ns.view(), &[false], &mut rng,
        )
        .unwrap();
        assert!((y[0] - 3.97).abs() < 1e-12);
    }

    #[test]
    fn soft_update_endpoints_and_interpolation() {
        // tau = 1: targets equal live; tau -> 0: unchanged; midpoint checked
        let (mut critics, ..) = setup();
        let live = critics.q1.param(0);
        let before = critics.target1.param(0);
        assert_eq!(live, before); // initialized equal
        critics.q1.set_param(0, 1.0);
        critics.target1.set_param(0, 0.0);
        critics.tau = 0.005;
        critics.soft_update();
        assert!((critics.target1.param(0) - 0.005).abs() < 1e-15);

        let mut t = critics.q1.clone();
        soft_update_net(&mut t, &critics.q1, 1.0);
        assert_eq!(t.param(0), critics.q1.param(0));
        let snapshot = critics.target2.param(0);
        soft_update_net(&mut critics.target2, &critics.q2, 0.0);
        assert_eq!(critics.target2.param(0), snapshot);
    }
}
