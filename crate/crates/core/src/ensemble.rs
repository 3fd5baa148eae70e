//! Probabilistic ensemble dynamics model: N diagonal-Gaussian members over
//! (state delta, reward), an elite subset picked by validation likelihood,
//! and short-horizon rollouts that feed the model buffer.

use std::collections::VecDeque;
use std::path::Path;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{OfflineDataset, Transition};
use crate::nn::{Activation, AdamState, GaussianHead, Mlp};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("ensemble has {have} members, need at least {need}")]
    NotEnoughMembers { have: usize, need: usize },
    #[error("elites have not been selected")]
    ElitesNotSelected,
    #[error("non-finite training loss in member {member}, epoch {epoch}: {diagnostics}")]
    NonFiniteLoss {
        member: usize,
        epoch: usize,
        diagnostics: String,
    },
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

/// Input normalization fitted on the offline (s, a) pairs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct NormStats {
    mean: Array1<f64>,
    std: Array1<f64>,
}

impl NormStats {
    pub fn fit(rows: ArrayView2<f64>) -> Self {
        let n = rows.nrows().max(1) as f64;
        let mean = rows.sum_axis(Axis(0)) / n;
        let mut var = Array1::<f64>::zeros(rows.ncols());
        for row in rows.rows() {
            for (d, &v) in row.iter().enumerate() {
                var[d] += (v - mean[d]).powi(2);
            }
        }
        let std = var.mapv(|v| (v / n).sqrt().max(1e-8));
        NormStats { mean, std }
    }

    pub fn normalize(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for d in 0..row.len() {
                row[d] = (row[d] - self.mean[d]) / self.std[d];
            }
        }
        out
    }

    /// Maps a per-dimension Gaussian from normalized space back to raw
    /// scale: mean * std + mean_stat, std * std_stat.
    pub fn denormalize_gaussian(&self, mean: &mut Array1<f64>, std: &mut Array1<f64>) {
        for d in 0..mean.len() {
            mean[d] = mean[d] * self.std[d] + self.mean[d];
            std[d] *= self.std[d];
        }
    }

    pub fn denormalize(&self, rows: ArrayView2<f64>) -> Array2<f64> {
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for d in 0..row.len() {
                row[d] = row[d] * self.std[d] + self.mean[d];
            }
        }
        out
    }
}

/// One ensemble member: an MLP whose output parameterizes a diagonal
/// Gaussian over (next-state delta, reward).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnsembleMember {
    net: Mlp,
    head: GaussianHead,
    pub train_nll: Vec<f64>,
    pub val_nll: Vec<f64>,
}

impl EnsembleMember {
    /// Gaussian over (s' delta, reward) for one normalized input row,
    /// mapped back to the raw target scale.
    fn gaussian(&self, norm_input: ArrayView1<f64>, target_norm: &NormStats) -> (Array1<f64>, Array1<f64>) {
        let raw = self.net.output_one(norm_input);
        let (mut mean, logstd) = self.head.split(raw.view());
        let mut std = logstd.mapv(f64::exp);
        target_norm.denormalize_gaussian(&mut mean, &mut std);
        (mean, std)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelConfig {
    pub members: usize,
    pub elites: usize,
    pub hidden_layers: usize,
    pub hidden_units: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub validation_fraction: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            members: 7,
            elites: 5,
            hidden_layers: 4,
            hidden_units: 200,
            learning_rate: 1e-4,
            batch_size: 256,
            epochs: 600,
            validation_fraction: 0.1,
        }
    }
}

/// Sample drawn from one elite, plus per-elite statistics for diagnostics.
#[derive(Debug, Clone)]
pub struct Prediction {
    pub next_state: Array1<f64>,
    pub reward: f64,
    pub chosen_elite: usize,
    /// Per elite: mean of (s', reward), absolute next-state scale.
    pub elite_means: Vec<Array1<f64>>,
    /// Per elite: std of (s' delta, reward).
    pub elite_stds: Vec<Array1<f64>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianEnsemble {
    members: Vec<EnsembleMember>,
    elites: Vec<usize>,
    norm: NormStats,
    target_norm: NormStats,
    state_dim: usize,
    action_dim: usize,
}

#[derive(Serialize, Deserialize)]
struct EnsembleCheckpoint {
    version: u32,
    ensemble: GaussianEnsemble,
}

const CHECKPOINT_VERSION: u32 = 1;

impl GaussianEnsemble {
    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn num_members(&self) -> usize {
        self.members.len()
    }

    pub fn elites(&self) -> &[usize] {
        &self.elites
    }

    pub fn members(&self) -> &[EnsembleMember] {
        &self.members
    }

    pub fn norm(&self) -> &NormStats {
        &self.norm
    }

    fn norm_input(&self, state: ArrayView1<f64>, action: ArrayView1<f64>) -> Array1<f64> {
        let mut row = Array2::zeros((1, self.state_dim + self.action_dim));
        for (d, &v) in state.iter().enumerate() {
            row[[0, d]] = v;
        }
        for (d, &v) in action.iter().enumerate() {
            row[[0, self.state_dim + d]] = v;
        }
        self.norm.normalize(row.view()).index_axis_move(Axis(0), 0)
    }

    /// Per-elite Gaussians at (s, a): means are absolute (s', reward),
    /// stds are over (s' delta, reward).
    pub fn elite_gaussians(
        &self,
        state: ArrayView1<f64>,
        action: ArrayView1<f64>,
    ) -> Result<Vec<(Array1<f64>, Array1<f64>)>, ModelError> {
        if self.elites.is_empty() {
            return Err(ModelError::ElitesNotSelected);
        }
        let input = self.norm_input(state, action);
        let mut out = Vec::with_capacity(self.elites.len());
        for &e in &self.elites {
            let (mut mean, std) = self.members[e].gaussian(input.view(), &self.target_norm);
            for d in 0..self.state_dim {
                mean[d] += state[d]; // delta -> absolute next state
            }
            out.push((mean, std));
        }
        Ok(out)
    }

    /// Batched variant of [`GaussianEnsemble::elite_gaussians`]: one
    /// (means, stds) matrix pair per elite, rows matching the input rows.
    pub fn elite_gaussians_batch(
        &self,
        states: ArrayView2<f64>,
        actions: ArrayView2<f64>,
    ) -> Result<Vec<(Array2<f64>, Array2<f64>)>, ModelError> {
        if self.elites.is_empty() {
            return Err(ModelError::ElitesNotSelected);
        }
        let b = states.nrows();
        let mut inputs = Array2::zeros((b, self.state_dim + self.action_dim));
        for i in 0..b {
            for d in 0..self.state_dim {
                inputs[[i, d]] = states[[i, d]];
            }
            for d in 0..self.action_dim {
                inputs[[i, self.state_dim + d]] = actions[[i, d]];
            }
        }
        let norm = self.norm.normalize(inputs.view());
        let mut out = Vec::with_capacity(self.elites.len());
        for &e in &self.elites {
            let member = &self.members[e];
            let raw = member.net.output_batch(norm.view());
            let dim = member.head.dim;
            let mut means = Array2::zeros((b, dim));
            let mut stds = Array2::zeros((b, dim));
            for i in 0..b {
                let (mut mean, logstd) = member.head.split(raw.row(i));
                let mut std = logstd.mapv(f64::exp);
                self.target_norm.denormalize_gaussian(&mut mean, &mut std);
                for d in 0..dim {
                    means[[i, d]] = mean[d];
                    stds[[i, d]] = std[d];
                }
                for d in 0..self.state_dim {
                    means[[i, d]] += states[[i, d]];
                }
            }
            out.push((means, stds));
        }
        Ok(out)
    }

    /// Draws (s', r) from one uniformly chosen elite.
    pub fn predict<R: Rng + ?Sized>(
        &self,
        state: ArrayView1<f64>,
        action: ArrayView1<f64>,
        rng: &mut R,
    ) -> Result<Prediction, ModelError> {
        let gaussians = self.elite_gaussians(state, action)?;
        let pick = rng.random_range(0..self.elites.len());
        let (mean, std) = &gaussians[pick];
        let mut sample = mean.clone();
        for d in 0..sample.len() {
            let eps: f64 = StandardNormal.sample(rng);
            sample[d] += std[d] * eps;
        }
        let next_state = sample.slice(ndarray::s![..self.state_dim]).to_owned();
        let reward = sample[self.state_dim];
        Ok(Prediction {
            next_state,
            reward,
            chosen_elite: pick,
            elite_means: gaussians.iter().map(|(m, _)| m.clone()).collect(),
            elite_stds: gaussians.iter().map(|(_, s)| s.clone()).collect(),
        })
    }

    /// Mean NLL of the given transitions under one member.
    pub fn member_nll(&self, member: usize, transitions: &[Transition]) -> f64 {
        let (inputs, targets) = build_arrays(transitions);
        let norm = self.norm.normalize(inputs.view());
        mean_nll(&self.members[member], &self.target_norm, norm.view(), targets.view())
    }

    /// Mean NLL averaged over the elite members.
    pub fn elite_mean_nll(&self, transitions: &[Transition]) -> f64 {
        let (inputs, targets) = build_arrays(transitions);
        let norm = self.norm.normalize(inputs.view());
        let total: f64 = self
            .elites
            .iter()
            .map(|&e| mean_nll(&self.members[e], &self.target_norm, norm.view(), targets.view()))
            .sum();
        total / self.elites.len() as f64
    }

    /// Recomputes validation NLLs on the given transitions and reselects the
    /// elite subset (lowest NLL, ties broken by lower member index).
    pub fn select_elites(&mut self, validation: &[Transition], m: usize) -> Result<(), ModelError> {
        let nlls: Vec<f64> = (0..self.members.len())
            .map(|i| self.member_nll(i, validation))
            .collect();
        self.elites = elite_indices(&nlls, m)?;
        for (i, member) in self.members.iter_mut().enumerate() {
            member.val_nll.push(nlls[i]);
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<(), ModelError> {
        let ckpt = EnsembleCheckpoint {
            version: CHECKPOINT_VERSION,
            ensemble: self.clone(),
        };
        let blob = serde_json::to_vec(&ckpt).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        std::fs::write(path, blob).map_err(|e| ModelError::Checkpoint(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ModelError> {
        let blob = std::fs::read(path).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        let ckpt: EnsembleCheckpoint =
            serde_json::from_slice(&blob).map_err(|e| ModelError::Checkpoint(e.to_string()))?;
        if ckpt.version != CHECKPOINT_VERSION {
            return Err(ModelError::Checkpoint(format!(
                "unsupported checkpoint version {}",
                ckpt.version
            )));
        }
        Ok(ckpt.ensemble)
    }
}

/// Indices of the `m` lowest values; ties broken by lower index.
pub fn elite_indices(nlls: &[f64], m: usize) -> Result<Vec<usize>, ModelError> {
    if nlls.len() < m {
        return Err(ModelError::NotEnoughMembers {
            have: nlls.len(),
            need: m,
        });
    }
    let mut order: Vec<usize> = (0..nlls.len()).collect();
    order.sort_by(|&a, &b| nlls[a].partial_cmp(&nlls[b]).unwrap().then(a.cmp(&b)));
    let mut chosen: Vec<usize> = order.into_iter().take(m).collect();
    chosen.sort_unstable();
    Ok(chosen)
}

fn build_arrays(transitions: &[Transition]) -> (Array2<f64>, Array2<f64>) {
    let n = transitions.len();
    let s_dim = transitions[0].state_dim();
    let a_dim = transitions[0].action_dim();
    let mut inputs = Array2::zeros((n, s_dim + a_dim));
    let mut targets = Array2::zeros((n, s_dim + 1));
    for (i, t) in transitions.iter().enumerate() {
        for d in 0..s_dim {
            inputs[[i, d]] = t.state[d];
            targets[[i, d]] = t.next_state[d] - t.state[d];
        }
        for d in 0..a_dim {
            inputs[[i, s_dim + d]] = t.action[d];
        }
        targets[[i, s_dim]] = t.reward;
    }
    (inputs, targets)
}

fn mean_nll(
    member: &EnsembleMember,
    target_norm: &NormStats,
    norm_inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
) -> f64 {
    let raw = member.net.output_batch(norm_inputs);
    let mut total = 0.0;
    for i in 0..raw.nrows() {
        let (mut mean, logstd) = member.head.split(raw.row(i));
        let mut std = logstd.mapv(f64::exp);
        target_norm.denormalize_gaussian(&mut mean, &mut std);
        for d in 0..mean.len() {
            total -= crate::nn::normal_logpdf(targets[[i, d]], mean[d], std[d]);
        }
    }
    total / raw.nrows() as f64
}

/// Trains the ensemble by minibatch maximum likelihood. Each member trains
/// on its own bootstrap resample of the training split; the last
/// `validation_fraction` of a seeded shuffle is held out and shared.
pub fn train_ensemble(
    dataset: &OfflineDataset,
    config: &ModelConfig,
    seed: u64,
) -> Result<GaussianEnsemble, ModelError> {
    if dataset.is_empty() {
        return Err(ModelError::EmptyDataset);
    }
    if config.members < config.elites {
        return Err(ModelError::NotEnoughMembers {
            have: config.members,
            need: config.elites,
        });
    }
    let transitions = dataset.transitions();
    let s_dim = dataset.state_dim();
    let a_dim = dataset.action_dim();
    let (inputs, targets) = build_arrays(transitions);
    let norm = NormStats::fit(inputs.view());
    let norm_inputs = norm.normalize(inputs.view());
    let target_norm = NormStats::fit(targets.view());
    let norm_targets = target_norm.normalize(targets.view());

    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..transitions.len()).collect();
    shuffle(&mut order, &mut rng);
    let val_len = ((transitions.len() as f64 * config.validation_fraction) as usize)
        .clamp(1, transitions.len() - 1);
    let (train_idx, val_idx) = order.split_at(transitions.len() - val_len);

    let head = GaussianHead::new(s_dim + 1);
    let mut sizes = vec![s_dim + a_dim];
    sizes.extend(std::iter::repeat(config.hidden_units).take(config.hidden_layers));
    sizes.push(head.raw_dim());

    // Each member owns its seed, bootstrap sample, and optimizer, so member
    // training is order-independent. A small worker pool (not one thread
    // per member) keeps the GEMM working sets from thrashing the cache.
    let member_seeds: Vec<u64> = (0..config.members)
        .map(|i| seed.wrapping_add(0x9e37_79b9_7f4a_7c15_u64.wrapping_mul(i as u64 + 1)))
        .collect();
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(config.members)
        .max(1);
    let mut slots: Vec<Option<Result<EnsembleMember, ModelError>>> =
        (0..config.members).map(|_| None).collect();
    std::thread::scope(|scope| {
        let mut handles = Vec::new();
        for w in 0..workers {
            let sizes = sizes.clone();
            let norm_inputs = &norm_inputs;
            let norm_targets = &norm_targets;
            let train_idx = &train_idx;
            let member_seeds = &member_seeds;
            handles.push(scope.spawn(move || {
                let mut out = Vec::new();
                let mut mi = w;
                while mi < config.members {
                    out.push((
                        mi,
                        train_member(
                            mi,
                            member_seeds[mi],
                            &sizes,
                            head,
                            norm_inputs.view(),
                            norm_targets.view(),
                            train_idx,
                            config,
                        ),
                    ));
                    mi += workers;
                }
                out
            }));
        }
        for h in handles {
            for (mi, res) in h.join().unwrap() {
                slots[mi] = Some(res);
            }
        }
    });
    let members: Vec<EnsembleMember> = slots
        .into_iter()
        .map(|s| s.expect("worker filled every slot"))
        .collect::<Result<_, _>>()?;

    let mut ensemble = GaussianEnsemble {
        members,
        elites: Vec::new(),
        norm,
        target_norm,
        state_dim: s_dim,
        action_dim: a_dim,
    };
    let val_transitions: Vec<Transition> =
        val_idx.iter().map(|&i| transitions[i].clone()).collect();
    ensemble.select_elites(&val_transitions, config.elites)?;
    Ok(ensemble)
}

#[allow(clippy::too_many_arguments)]
fn train_member(
    member_index: usize,
    seed: u64,
    sizes: &[usize],
    head: GaussianHead,
    norm_inputs: ArrayView2<f64>,
    targets: ArrayView2<f64>,
    train_idx: &[usize],
    config: &ModelConfig,
) -> Result<EnsembleMember, ModelError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let mut net = Mlp::new(sizes, Activation::Relu, &mut rng);
    {
        // start the log-std outputs around e^-1 in normalized target space
        let (_, biases) = net.weights_mut();
        let out_bias = biases.last_mut().unwrap();
        for d in head.dim..2 * head.dim {
            out_bias[d] = -2.0;
        }
    }
    let mut adam = AdamState::new(&net, config.learning_rate);
    // bootstrap resample of the training split
    let mut pool: Vec<usize> = (0..train_idx.len())
        .map(|_| train_idx[rng.random_range(0..train_idx.len())])
        .collect();
    let mut train_hist = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        shuffle(&mut pool, &mut rng);
        let mut epoch_nll = 0.0;
        let mut batches = 0;
        for chunk in pool.chunks(config.batch_size) {
            let x = select_rows(norm_inputs, chunk);
            let y = select_rows(targets, chunk);
            let (raw, cache) = net.forward_batch(x.view());
            let (nll, grad_raw) = head.nll_batch_grad(raw.view(), y.view());
            if !nll.is_finite() {
                return Err(ModelError::NonFiniteLoss {
                    member: member_index,
                    epoch,
                    diagnostics: format!("batch of {} produced NLL {nll}", chunk.len()),
                });
            }
            let (grads, _) = net.backward_batch(&cache, grad_raw.view());
            adam.step(&mut net, &grads);
            epoch_nll += nll;
            batches += 1;
        }
        train_hist.push(epoch_nll / batches.max(1) as f64);
    }
    Ok(EnsembleMember {
        net,
        head,
        train_nll: train_hist,
        val_nll: Vec::new(),
    })
}

fn select_rows(src: ArrayView2<f64>, idx: &[usize]) -> Array2<f64> {
    let mut out = Array2::zeros((idx.len(), src.ncols()));
    for (r, &i) in idx.iter().enumerate() {
        out.row_mut(r).assign(&src.row(i));
    }
    out
}

fn shuffle<R: Rng + ?Sized>(xs: &mut [usize], rng: &mut R) {
    for i in (1..xs.len()).rev() {
        let j = rng.random_range(0..=i);
        xs.swap(i, j);
    }
}

/// A model-generated transition tagged with its rollout step (1-based).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TaggedTransition {
    pub transition: Transition,
    pub step: usize,
}

/// FIFO buffer of model-generated transitions.
#[derive(Debug, Clone, Default)]
pub struct ModelBuffer {
    items: VecDeque<TaggedTransition>,
    capacity: usize,
    truncations: u64,
}

impl ModelBuffer {
    pub fn new(capacity: usize) -> Self {
        ModelBuffer {
            items: VecDeque::with_capacity(capacity.min(1 << 20)),
            capacity,
            truncations: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn truncations(&self) -> u64 {
        self.truncations
    }

    pub fn iter(&self) -> impl Iterator<Item = &TaggedTransition> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> &TaggedTransition {
        &self.items[i]
    }

    pub fn push(&mut self, item: TaggedTransition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(item);
    }

    pub fn sample_indices<R: Rng + ?Sized>(&self, count: usize, rng: &mut R) -> Vec<usize> {
        (0..count)
            .map(|_| rng.random_range(0..self.items.len()))
            .collect()
    }
}

/// Simulates `count` trajectories of up to `horizon` steps under `policy`,
/// starting from states drawn uniformly from the offline dataset, and
/// appends every transition (tagged with its step) to the buffer.
///
/// Non-finite model output truncates the offending trajectory and bumps the
/// buffer's truncation counter.
pub fn rollout<F>(
    ensemble: &GaussianEnsemble,
    mut policy: F,
    dataset: &OfflineDataset,
    horizon: usize,
    count: usize,
    buffer: &mut ModelBuffer,
    rng: &mut ChaCha12Rng,
) -> Result<usize, ModelError>
where
    F: FnMut(ArrayView2<f64>, &mut ChaCha12Rng) -> Array2<f64>,
{
    assert!(horizon >= 1, "rollout horizon must be at least 1");
    if ensemble.elites.is_empty() {
        return Err(ModelError::ElitesNotSelected);
    }
    let s_dim = ensemble.state_dim;
    let transitions = dataset.transitions();
    let mut states = Array2::zeros((count, s_dim));
    for i in 0..count {
        let t = &transitions[rng.random_range(0..transitions.len())];
        for d in 0..s_dim {
            states[[i, d]] = t.state[d];
        }
    }
    let mut alive: Vec<bool> = vec![true; count];
    let mut added = 0;
    for step in 1..=horizon {
        let actions = policy(states.view(), rng);
        // choose elites first so the rng stream stays index-ordered
        let picks: Vec<usize> = (0..count)
            .map(|_| rng.random_range(0..ensemble.elites.len()))
            .collect();
        let mut next_states = states.clone();
        for i in 0..count {
            if !alive[i] {
                continue;
            }
            let input = ensemble.norm_input(states.row(i), actions.row(i));
            let member = &ensemble.members[ensemble.elites[picks[i]]];
            let (mean, std) = member.gaussian(input.view(), &ensemble.target_norm);
            let mut sample = mean;
            for d in 0..sample.len() {
                let eps: f64 = StandardNormal.sample(rng);
                sample[d] += std[d] * eps;
            }
            let next: Vec<f64> = (0..s_dim).map(|d| states[[i, d]] + sample[d]).collect();
            let reward = sample[s_dim];
            if !reward.is_finite() || next.iter().any(|v| !v.is_finite()) {
                alive[i] = false;
                buffer.truncations += 1;
                continue;
            }
            buffer.push(TaggedTransition {
                transition: Transition {
                    state: states.row(i).to_vec(),
                    action: actions.row(i).to_vec(),
                    reward,
                    next_state: next.clone(),
                    terminal: false,
                },
                step,
            });
            added += 1;
            for d in 0..s_dim {
                next_states[[i, d]] = next[d];
            }
        }
        states = next_states;
        if alive.iter().all(|a| !a) {
            break;
        }
    }
    Ok(added)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn elite_selection_orders_by_nll_then_index() {
        let nlls = [5.0, 1.0, 4.0, 2.0, 3.0, 7.0, 6.0];
        let elites = elite_indices(&nlls, 5).unwrap();
        assert_eq!(elites, vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn equal_nlls_pick_first_indices() {
        let nlls = [1.0; 7];
        assert_eq!(elite_indices(&nlls, 5).unwrap(), vec![0, 1, 2, 3, 4]);
    }

    #[test]
    fn all_members_can_be_elite() {
        let nlls = [3.0, 1.0, 2.0];
        assert_eq!(elite_indices(&nlls, 3).unwrap(), vec![0, 1, 2]);
    }

    #[test]
    fn too_few_members_is_an_error() {
        assert!(matches!(
            elite_indices(&[1.0, 2.0], 5),
            Err(ModelError::NotEnoughMembers { have: 2, need: 5 })
        ));
    }

    #[test]
    fn normalization_roundtrip_is_identity() {
        let rows = ndarray::array![[1.0, -2.0], [3.0, 0.5], [-1.0, 4.0]];
        let norm = NormStats::fit(rows.view());
        let there = norm.normalize(rows.view());
        let back = norm.denormalize(there.view());
        for (a, b) in rows.iter().zip(back.iter()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn buffer_evicts_fifo_and_counts_len() {
        let mut buf = ModelBuffer::new(3);
        for k in 0..5 {
            buf.push(TaggedTransition {
                transition: Transition {
                    state: vec![k as f64],
                    action: vec![0.0],
                    reward: 0.0,
                    next_state: vec![0.0],
                    terminal: false,
                },
                step: 1,
            });
        }
        assert_eq!(buf.len(), 3);
        assert_eq!(buf.get(0).transition.state[0], 2.0);
    }
}
