//! The adaptively weighted conservative penalty: an importance-sampled
//! log-sum-exp estimate of log E_omega exp[Q] over model states, minus the
//! mean Q on offline data.
//!
//! Per model state, half the proposal actions come from a uniform policy
//! over the action box and half from the current policy. The log-sum-exp is
//! self-normalized so a constant Q yields exactly that constant.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand_chacha::ChaCha12Rng;
use rand::Rng;
use thiserror::Error;

use crate::nn::logsumexp;

use super::actor::Actor;

#[derive(Debug, Error)]
pub enum PenaltyError {
    #[error("penalty requires at least one sampled action per state")]
    ZeroSampledActions,
    #[error("omega length {omega} does not match state count {states}")]
    WeightMismatch { omega: usize, states: usize },
}

/// Proposal actions and their log-densities for a batch of model states.
/// Row layout is state-major: for state i, rows [i*per_state, (i+1)*per_state)
/// hold `n` uniform draws followed by `n` policy draws.
#[derive(Debug, Clone)]
pub struct PenaltyActions {
    pub actions: Array2<f64>,
    pub log_proposal: Array1<f64>,
    pub per_state: usize,
}

/// Draws `n_per_source` actions from Uniform(action box) and from the
/// current policy for every state row.
pub fn draw_penalty_actions(
    actor: &Actor,
    states: ArrayView2<f64>,
    n_per_source: usize,
    action_low: &[f64],
    action_high: &[f64],
    rng: &mut ChaCha12Rng,
) -> Result<PenaltyActions, PenaltyError> {
    if n_per_source == 0 {
        return Err(PenaltyError::ZeroSampledActions);
    }
    let b = states.nrows();
    let dim = action_low.len();
    let per_state = 2 * n_per_source;
    let log_uniform: f64 = -action_low
        .iter()
        .zip(action_high)
        .map(|(lo, hi)| (hi - lo).ln())
        .sum::<f64>();

    let mut uniform = Array2::zeros((b * n_per_source, dim));
    for i in 0..b {
        for j in 0..n_per_source {
            for d in 0..dim {
                uniform[[i * n_per_source + j, d]] =
                    rng.random_range(action_low[d]..action_high[d]);
            }
        }
    }
    let (policy_actions, policy_log_probs) = actor.sample_n_per_state(states, n_per_source, rng);

    let mut actions = Array2::zeros((b * per_state, dim));
    let mut log_proposal = Array1::zeros(b * per_state);
    for i in 0..b {
        for j in 0..n_per_source {
            let dst = i * per_state + j;
            let src = i * n_per_source + j;
            for d in 0..dim {
                actions[[dst, d]] = uniform[[src, d]];
            }
            log_proposal[dst] = log_uniform;
        }
        for j in 0..n_per_source {
            let dst = i * per_state + n_per_source + j;
            let src = i * n_per_source + j;
            for d in 0..dim {
                actions[[dst, d]] = policy_actions[[src, d]];
            }
            log_proposal[dst] = policy_log_probs[src];
        }
    }
    Ok(PenaltyActions {
        actions,
        log_proposal,
        per_state,
    })
}

/// Value and dValue/dQ of the penalty given Q values at the proposal
/// actions and at the offline batch.
#[derive(Debug, Clone)]
pub struct PenaltyResult {
    pub value: f64,
    /// Per-state self-normalized log-sum-exp terms.
    pub lse_terms: Array1<f64>,
    /// dValue/dQ at each proposal row.
    pub grad_q: Array1<f64>,
    /// dValue/dQ at each offline row (a constant, -1/n_offline).
    pub grad_offline: f64,
}

/// Pure penalty arithmetic:
///   value = sum_i omega_i * [LSE_j(Q_ij - logq_ij) - LSE_j(-logq_ij)] - mean(offline_q)
pub fn penalty_terms(
    q: ArrayView1<f64>,
    log_proposal: ArrayView1<f64>,
    per_state: usize,
    omega: &[f64],
    offline_q: ArrayView1<f64>,
) -> Result<PenaltyResult, PenaltyError> {
    if per_state == 0 {
        return Err(PenaltyError::ZeroSampledActions);
    }
    let b = q.len() / per_state;
    if omega.len() != b {
        return Err(PenaltyError::WeightMismatch {
            omega: omega.len(),
            states: b,
        });
    }
    let mut lse_terms = Array1::zeros(b);
    let mut grad_q = Array1::zeros(q.len());
    let mut weighted = 0.0;
    let mut num = vec![0.0; per_state];
    let mut den = vec![0.0; per_state];
    for i in 0..b {
        for j in 0..per_state {
            let row = i * per_state + j;
            num[j] = q[row] - log_proposal[row];
            den[j] = -log_proposal[row];
        }
        let lse_num = logsumexp(&num);
        let lse_den = logsumexp(&den);
        lse_terms[i] = lse_num - lse_den;
        weighted += omega[i] * lse_terms[i];
        for j in 0..per_state {
            let row = i * per_state + j;
            grad_q[row] = omega[i] * (num[j] - lse_num).exp();
        }
    }
    let n_off = offline_q.len() as f64;
    let offline_mean = offline_q.sum() / n_off;
    Ok(PenaltyResult {
        value: weighted - offline_mean,
        lse_terms,
        grad_q,
        grad_offline: -1.0 / n_off,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn constant_q_gives_zero_penalty() {
        // Q == c at both the proposal actions and the offline batch: the
        // self-normalized log-sum-exp collapses to c, offline mean is c.
        let c = 3.7;
        let q = array![c, c, c, c];
        let logq = array![1.3, -0.2, 0.8, 0.4];
        let offline = array![c, c];
        let res = penalty_terms(q.view(), logq.view(), 4, &[1.0], offline.view()).unwrap();
        assert!(res.value.abs() < 1e-12, "penalty {}", res.value);
        assert!((res.lse_terms[0] - c).abs() < 1e-12);
    }

    #[test]
    fn two_equal_weight_actions_with_zero_q() {
        let q = array![0.0, 0.0];
        let logq = array![0.0, 0.0];
        let offline = array![0.0];
        let res = penalty_terms(q.view(), logq.view(), 2, &[1.0], offline.view()).unwrap();
        assert_eq!(res.lse_terms[0], 0.0);
        assert_eq!(res.value, 0.0);
    }

    #[test]
    fn gradient_weights_are_softmax_times_omega() {
        let q = array![1.0, 2.0, 0.5, 0.5];
        let logq = array![0.0, 0.0, 0.0, 0.0];
        let offline = array![0.0];
        let omega = [0.25, 0.75];
        let res = penalty_terms(q.view(), logq.view(), 2, &omega, offline.view()).unwrap();
        // state 0: softmax over [1, 2]
        let z = (1.0_f64).exp() + (2.0_f64).exp();
        assert!((res.grad_q[0] - 0.25 * 1.0_f64.exp() / z).abs() < 1e-12);
        assert!((res.grad_q[1] - 0.25 * 2.0_f64.exp() / z).abs() < 1e-12);
        // state 1: equal Q -> equal split of omega
        assert!((res.grad_q[2] - 0.375).abs() < 1e-12);
        assert!((res.grad_q[3] - 0.375).abs() < 1e-12);
        assert_eq!(res.grad_offline, -1.0);
        // gradient of the weighted LSE part sums to sum(omega)
        let total: f64 = res.grad_q.iter().sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_actions_is_an_error() {
        let q = array![];
        let logq = array![];
        let offline = array![0.0];
        assert!(matches!(
            penalty_terms(q.view(), logq.view(), 0, &[], offline.view()),
            Err(PenaltyError::ZeroSampledActions)
        ));
    }
}
