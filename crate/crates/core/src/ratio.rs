//! Source discriminators and the adaptive sampling distribution they induce:
//! two classifiers over (s,a,s') and (s,a) estimate the dynamics ratio via
//! Bayes' rule, a clipped KL estimate g(s,a) scores per-sample model error,
//! and batch-normalized weights omega drive the conservative penalty.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Transition;
use crate::ensemble::GaussianEnsemble;
use crate::nn::{Activation, AdamState, Gradients, Mlp};

/// Dynamics-ratio clipping range.
pub const RATIO_CLIP: (f64, f64) = (1e-45, 1.0);
/// KL-divergence clipping range for g(s,a).
pub const KL_CLIP: (f64, f64) = (1e-45, 10.0);

/// Output column holding p(offline | .).
pub const CLASS_OFFLINE: usize = 0;
/// Output column holding p(model | .).
pub const CLASS_MODEL: usize = 1;

#[derive(Debug, Error)]
pub enum RatioError {
    #[error("non-finite discriminator loss: {0}")]
    NonFiniteLoss(String),
    #[error("need at least one model sample per estimate, got {0}")]
    BadSampleCount(usize),
    #[error("batch is empty")]
    EmptyBatch,
    #[error(transparent)]
    Model(#[from] crate::ensemble::ModelError),
}

/// How g(s,a) condenses the sampled dynamics ratios.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ErrorMode {
    /// mean of -log(ratio): a reverse-KL estimate, nonnegative and monotone
    /// in model mismatch. The default.
    Kl,
    /// mean of the raw (clipped) ratio.
    LiteralRatio,
}

/// Two-class classifier with the bounded output stage: two logits pass
/// through tanh scaled to [-2, 2], then softmax.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Discriminator {
    net: Mlp,
}

impl Discriminator {
    pub fn new<R: Rng + ?Sized>(
        in_dim: usize,
        hidden_units: usize,
        hidden_layers: usize,
        rng: &mut R,
    ) -> Self {
        let mut sizes = vec![in_dim];
        sizes.extend(std::iter::repeat(hidden_units).take(hidden_layers));
        sizes.push(2);
        let mut net = Mlp::new(&sizes, Activation::Relu, rng);
        // damp the output layer so initial logits sit near zero: the implied
        // class probabilities start calibrated at 1/2 instead of inheriting
        // init noise through the tanh scaling
        let n = net.num_params();
        let out_params = hidden_units * 2 + 2;
        for i in (n - out_params)..n {
            let v = net.param(i);
            net.set_param(i, 0.05 * v);
        }
        Discriminator { net }
    }

    /// Constant-output classifier (zero weights, fixed pre-tanh logits).
    pub fn constant(in_dim: usize, pre_tanh: [f64; 2]) -> Self {
        let mut net = Mlp::zeros(&[in_dim, 2], Activation::Relu);
        net.set_param(2 * in_dim, pre_tanh[0]);
        net.set_param(2 * in_dim + 1, pre_tanh[1]);
        Discriminator { net }
    }

    pub fn in_dim(&self) -> usize {
        self.net.in_dim()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    /// Class probabilities, batched: rows of [p(offline), p(model)].
    pub fn prob_batch(&self, inputs: ArrayView2<f64>) -> Array2<f64> {
        let logits = self.net.output_batch(inputs);
        softmax_of_scaled_tanh(&logits)
    }

    pub fn prob_one(&self, input: ArrayView1<f64>) -> [f64; 2] {
        let p = self.prob_batch(input.insert_axis(Axis(0)));
        [p[[0, CLASS_OFFLINE]], p[[0, CLASS_MODEL]]]
    }

    /// Summed per-class mean cross-entropy of balanced batches, with its
    /// parameter gradients. Converges to 2 ln 2 when the classes are
    /// indistinguishable.
    pub fn cross_entropy(
        &self,
        offline_inputs: ArrayView2<f64>,
        model_inputs: ArrayView2<f64>,
    ) -> Result<(f64, Gradients), RatioError> {
        if offline_inputs.nrows() == 0 || model_inputs.nrows() == 0 {
            return Err(RatioError::EmptyBatch);
        }
        let (loss_off, grads_off) = self.class_loss_grads(offline_inputs, CLASS_OFFLINE)?;
        let (loss_mod, grads_mod) = self.class_loss_grads(model_inputs, CLASS_MODEL)?;
        let mut grads = grads_off;
        grads.add_scaled(&grads_mod, 1.0);
        Ok((loss_off + loss_mod, grads))
    }

    /// One cross-entropy step on a balanced pair of class batches.
    pub fn train_step(
        &mut self,
        adam: &mut AdamState,
        offline_inputs: ArrayView2<f64>,
        model_inputs: ArrayView2<f64>,
    ) -> Result<f64, RatioError> {
        let (loss, grads) = self.cross_entropy(offline_inputs, model_inputs)?;
        adam.step(&mut self.net, &grads);
        Ok(loss)
    }

    fn class_loss_grads(
        &self,
        inputs: ArrayView2<f64>,
        class: usize,
    ) -> Result<(f64, Gradients), RatioError> {
        let n = inputs.nrows();
        let (logits, cache) = self.net.forward_batch(inputs);
        let tanh = logits.mapv(f64::tanh);
        let probs = softmax_of_scaled_tanh(&logits);
        let mut loss = 0.0;
        let mut grad_logits = Array2::zeros(logits.raw_dim());
        let inv_n = 1.0 / n as f64;
        for i in 0..n {
            let p = probs[[i, class]];
            loss -= p.ln() * inv_n;
            for c in 0..2 {
                let indicator = if c == class { 1.0 } else { 0.0 };
                // d(-log p_class)/d(scaled logit c) = p_c - 1[c == class]
                let d_scaled = (probs[[i, c]] - indicator) * inv_n;
                grad_logits[[i, c]] = d_scaled * 2.0 * (1.0 - tanh[[i, c]] * tanh[[i, c]]);
            }
        }
        if !loss.is_finite() {
            return Err(RatioError::NonFiniteLoss(format!(
                "class {class} batch of {n}"
            )));
        }
        let (grads, _) = self.net.backward_batch(&cache, grad_logits.view());
        Ok((loss, grads))
    }
}

fn softmax_of_scaled_tanh(logits: &Array2<f64>) -> Array2<f64> {
    let mut out = Array2::zeros(logits.raw_dim());
    for i in 0..logits.nrows() {
        let a = 2.0 * logits[[i, 0]].tanh();
        let b = 2.0 * logits[[i, 1]].tanh();
        let m = a.max(b);
        let (ea, eb) = ((a - m).exp(), (b - m).exp());
        let z = ea + eb;
        out[[i, 0]] = ea / z;
        out[[i, 1]] = eb / z;
    }
    out
}

/// The (s,a,s') and (s,a) discriminators trained together.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscriminatorPair {
    pub d_sas: Discriminator,
    pub d_sa: Discriminator,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioConfig {
    pub hidden_units: usize,
    pub hidden_layers: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
}

impl Default for RatioConfig {
    fn default() -> Self {
        RatioConfig {
            hidden_units: 256,
            hidden_layers: 1,
            learning_rate: 3e-4,
            batch_size: 256,
        }
    }
}

/// Discriminator pair plus its optimizer states.
#[derive(Debug, Clone)]
pub struct RatioEstimator {
    pub pair: DiscriminatorPair,
    adam_sas: AdamState,
    adam_sa: AdamState,
    batch_size: usize,
}

impl RatioEstimator {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_dim: usize,
        config: &RatioConfig,
        rng: &mut R,
    ) -> Self {
        let d_sas = Discriminator::new(
            2 * state_dim + action_dim,
            config.hidden_units,
            config.hidden_layers,
            rng,
        );
        let d_sa = Discriminator::new(
            state_dim + action_dim,
            config.hidden_units,
            config.hidden_layers,
            rng,
        );
        let adam_sas = AdamState::new(d_sas.net(), config.learning_rate);
        let adam_sa = AdamState::new(d_sa.net(), config.learning_rate);
        RatioEstimator {
            pair: DiscriminatorPair { d_sas, d_sa },
            adam_sas,
            adam_sa,
            batch_size: config.batch_size,
        }
    }

    /// From an existing pair, e.g. constant discriminators in tests.
    pub fn from_pair(pair: DiscriminatorPair, learning_rate: f64, batch_size: usize) -> Self {
        let adam_sas = AdamState::new(pair.d_sas.net(), learning_rate);
        let adam_sa = AdamState::new(pair.d_sa.net(), learning_rate);
        RatioEstimator {
            pair,
            adam_sas,
            adam_sa,
            batch_size,
        }
    }

    /// Cross-entropy training: up to `steps` balanced minibatch steps per
    /// discriminator, keeping the parameters that score best on a held-out
    /// balanced split (the classifiers overfit quickly on small offline
    /// sets, which inverts the implied ratios). Returns the final held-out
    /// (sas loss, sa loss).
    pub fn train(
        &mut self,
        offline: &[Transition],
        model: &[Transition],
        steps: usize,
        rng: &mut ChaCha12Rng,
    ) -> Result<(f64, f64), RatioError> {
        if offline.is_empty() || model.is_empty() {
            return Err(RatioError::EmptyBatch);
        }
        let n = self.batch_size;
        // disjoint holdout split per class; training batches only see the pool
        let split = |len: usize, rng: &mut ChaCha12Rng| -> (Vec<usize>, Vec<usize>) {
            let mut order: Vec<usize> = (0..len).collect();
            for i in (1..order.len()).rev() {
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let hold = (len / 5).clamp(1, 256);
            let held = order.split_off(len - hold);
            (order, held)
        };
        let (off_pool, off_hold) = split(offline.len(), rng);
        let (mod_pool, mod_hold) = split(model.len(), rng);
        let hold_off_sas = sas_matrix(offline, &off_hold);
        let hold_mod_sas = sas_matrix(model, &mod_hold);
        let hold_off_sa = sa_matrix(offline, &off_hold);
        let hold_mod_sa = sa_matrix(model, &mod_hold);

        let eval_every = 25;
        let mut best = (f64::INFINITY, f64::INFINITY);
        let mut best_pair = self.pair.clone();
        for step in 0..steps {
            let off_idx: Vec<usize> = (0..n)
                .map(|_| off_pool[rng.random_range(0..off_pool.len())])
                .collect();
            let mod_idx: Vec<usize> = (0..n)
                .map(|_| mod_pool[rng.random_range(0..mod_pool.len())])
                .collect();
            let off_sas = sas_matrix(offline, &off_idx);
            let mod_sas = sas_matrix(model, &mod_idx);
            let off_sa = sa_matrix(offline, &off_idx);
            let mod_sa = sa_matrix(model, &mod_idx);
            self.pair
                .d_sas
                .train_step(&mut self.adam_sas, off_sas.view(), mod_sas.view())?;
            self.pair
                .d_sa
                .train_step(&mut self.adam_sa, off_sa.view(), mod_sa.view())?;
            if (step + 1) % eval_every == 0 || step + 1 == steps {
                let val_sas = self
                    .pair
                    .d_sas
                    .cross_entropy(hold_off_sas.view(), hold_mod_sas.view())?
                    .0;
                let val_sa = self
                    .pair
                    .d_sa
                    .cross_entropy(hold_off_sa.view(), hold_mod_sa.view())?
                    .0;
                if val_sas < best.0 {
                    best.0 = val_sas;
                    best_pair.d_sas = self.pair.d_sas.clone();
                }
                if val_sa < best.1 {
                    best.1 = val_sa;
                    best_pair.d_sa = self.pair.d_sa.clone();
                }
            }
        }
        self.pair = best_pair;
        Ok(best)
    }
}

fn sas_matrix(ts: &[Transition], idx: &[usize]) -> Array2<f64> {
    let (sd, ad) = (ts[0].state_dim(), ts[0].action_dim());
    let mut out = Array2::zeros((idx.len(), 2 * sd + ad));
    for (r, &i) in idx.iter().enumerate() {
        let t = &ts[i];
        for d in 0..sd {
            out[[r, d]] = t.state[d];
            out[[r, sd + ad + d]] = t.next_state[d];
        }
        for d in 0..ad {
            out[[r, sd + d]] = t.action[d];
        }
    }
    out
}

fn sa_matrix(ts: &[Transition], idx: &[usize]) -> Array2<f64> {
    let (sd, ad) = (ts[0].state_dim(), ts[0].action_dim());
    let mut out = Array2::zeros((idx.len(), sd + ad));
    for (r, &i) in idx.iter().enumerate() {
        let t = &ts[i];
        for d in 0..sd {
            out[[r, d]] = t.state[d];
        }
        for d in 0..ad {
            out[[r, sd + d]] = t.action[d];
        }
    }
    out
}

/// Clips a raw Bayes-rule ratio into the Table-clipping range.
pub fn clip_ratio(raw: f64) -> f64 {
    if raw.is_nan() {
        return RATIO_CLIP.0;
    }
    raw.clamp(RATIO_CLIP.0, RATIO_CLIP.1)
}

/// Condenses sampled dynamics ratios into g, with the KL clip applied.
pub fn g_from_ratios(ratios: &[f64], mode: ErrorMode) -> f64 {
    let n = ratios.len() as f64;
    let raw = match mode {
        ErrorMode::Kl => ratios.iter().map(|r| -r.ln()).sum::<f64>() / n,
        ErrorMode::LiteralRatio => ratios.iter().sum::<f64>() / n,
    };
    if raw.is_nan() {
        return KL_CLIP.0;
    }
    raw.clamp(KL_CLIP.0, KL_CLIP.1)
}

/// Estimated dynamics ratio T_hat / T at one (s, a, s'), clipped.
pub fn dynamics_ratio(
    pair: &DiscriminatorPair,
    state: ArrayView1<f64>,
    action: ArrayView1<f64>,
    next_state: ArrayView1<f64>,
) -> f64 {
    let mut sas = Vec::with_capacity(2 * state.len() + action.len());
    sas.extend(state.iter());
    sas.extend(action.iter());
    sas.extend(next_state.iter());
    let mut sa = Vec::with_capacity(state.len() + action.len());
    sa.extend(state.iter());
    sa.extend(action.iter());
    let p_sas = pair.d_sas.prob_one(Array1::from(sas).view());
    let p_sa = pair.d_sa.prob_one(Array1::from(sa).view());
    clip_ratio(
        (p_sas[CLASS_MODEL] * p_sa[CLASS_OFFLINE]) / (p_sas[CLASS_OFFLINE] * p_sa[CLASS_MODEL]),
    )
}

/// Per-sample raw errors g, normalized weights omega, and the normalizer Z.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingWeights {
    pub g: Vec<f64>,
    pub omega: Vec<f64>,
    pub normalizer: f64,
}

impl SamplingWeights {
    /// omega_i = g_i / sum(g). Falls back to uniform when the normalizer is
    /// degenerate (all-floor or non-finite g values).
    pub fn from_g(g: Vec<f64>) -> Self {
        let z: f64 = g.iter().sum();
        let n = g.len();
        let omega = if z.is_finite() && z > 0.0 {
            g.iter().map(|&v| v / z).collect()
        } else {
            vec![1.0 / n as f64; n]
        };
        SamplingWeights {
            g,
            omega,
            normalizer: z,
        }
    }

    /// Shannon entropy of omega, a collapse diagnostic.
    pub fn entropy(&self) -> f64 {
        -self
            .omega
            .iter()
            .filter(|&&w| w > 0.0)
            .map(|&w| w * w.ln())
            .sum::<f64>()
    }
}

/// g(s,a) for one state-action pair: draws `m` next-states from the
/// ensemble's elite Gaussians and averages the clipped ratio statistic.
pub fn g_estimate(
    pair: &DiscriminatorPair,
    ensemble: &GaussianEnsemble,
    state: ArrayView1<f64>,
    action: ArrayView1<f64>,
    m: usize,
    mode: ErrorMode,
    rng: &mut ChaCha12Rng,
) -> Result<f64, RatioError> {
    let states = state.insert_axis(Axis(0));
    let actions = action.insert_axis(Axis(0));
    let w = sampling_weights(pair, ensemble, states, actions, m, mode, rng)?;
    Ok(w.g[0])
}

/// Batched sampling weights over a model batch of (s, a) rows.
pub fn sampling_weights(
    pair: &DiscriminatorPair,
    ensemble: &GaussianEnsemble,
    states: ArrayView2<f64>,
    actions: ArrayView2<f64>,
    m: usize,
    mode: ErrorMode,
    rng: &mut ChaCha12Rng,
) -> Result<SamplingWeights, RatioError> {
    if m < 1 {
        return Err(RatioError::BadSampleCount(m));
    }
    let b = states.nrows();
    if b == 0 {
        return Err(RatioError::EmptyBatch);
    }
    let s_dim = ensemble.state_dim();
    let a_dim = ensemble.action_dim();
    let elites = ensemble.elite_gaussians_batch(states, actions)?;

    // one (s, a, s'_j) row per sample draw, batched through d_sas
    let mut sas = Array2::zeros((b * m, 2 * s_dim + a_dim));
    for i in 0..b {
        for j in 0..m {
            let pick = rng.random_range(0..elites.len());
            let (means, stds) = &elites[pick];
            let row = i * m + j;
            for d in 0..s_dim {
                sas[[row, d]] = states[[i, d]];
                let eps: f64 = StandardNormal.sample(rng);
                sas[[row, s_dim + a_dim + d]] = means[[i, d]] + stds[[i, d]] * eps;
            }
            for d in 0..a_dim {
                sas[[row, s_dim + d]] = actions[[i, d]];
            }
        }
    }
    let mut sa = Array2::zeros((b, s_dim + a_dim));
    for i in 0..b {
        for d in 0..s_dim {
            sa[[i, d]] = states[[i, d]];
        }
        for d in 0..a_dim {
            sa[[i, s_dim + d]] = actions[[i, d]];
        }
    }
    let p_sas = pair.d_sas.prob_batch(sas.view());
    let p_sa = pair.d_sa.prob_batch(sa.view());

    let mut g = Vec::with_capacity(b);
    for i in 0..b {
        let prior = p_sa[[i, CLASS_OFFLINE]] / p_sa[[i, CLASS_MODEL]];
        let ratios: Vec<f64> = (0..m)
            .map(|j| {
                let row = i * m + j;
                clip_ratio(p_sas[[row, CLASS_MODEL]] / p_sas[[row, CLASS_OFFLINE]] * prior)
            })
            .collect();
        g.push(g_from_ratios(&ratios, mode));
    }
    Ok(SamplingWeights::from_g(g))
}

/// Spearman rank correlation with average ranks for ties.
pub fn spearman(xs: &[f64], ys: &[f64]) -> f64 {
    assert_eq!(xs.len(), ys.len());
    let rx = average_ranks(xs);
    let ry = average_ranks(ys);
    let n = xs.len() as f64;
    let mx = rx.iter().sum::<f64>() / n;
    let my = ry.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for i in 0..xs.len() {
        let (dx, dy) = (rx[i] - mx, ry[i] - my);
        cov += dx * dy;
        vx += dx * dx;
        vy += dy * dy;
    }
    if vx == 0.0 || vy == 0.0 {
        return 0.0;
    }
    cov / (vx.sqrt() * vy.sqrt())
}

fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..xs.len()).collect();
    order.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).unwrap());
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && xs[order[j + 1]] == xs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}
