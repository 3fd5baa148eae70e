//! Tanh-squashed Gaussian policy with reparameterized sampling, plus the
//! self-tuning entropy temperature.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_chacha::ChaCha12Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::nn::{Activation, ForwardCache, GaussianHead, Gradients, Mlp, ScalarAdam, LN_2PI};

fn softplus(x: f64) -> f64 {
    if x > 20.0 {
        x
    } else if x < -20.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

/// log(1 - tanh(u)^2), computed without cancellation.
fn log_one_minus_tanh_sq(u: f64) -> f64 {
    2.0 * (std::f64::consts::LN_2 - u - softplus(-2.0 * u))
}

/// Policy network: state -> [mu, log_std], squashed through tanh onto the
/// action box.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Actor {
    net: Mlp,
    head: GaussianHead,
    action_low: Array1<f64>,
    action_high: Array1<f64>,
}

/// One reparameterized draw per input state, with everything the update
/// needs to differentiate through it.
#[derive(Debug)]
pub struct ActorSample {
    pub actions: Array2<f64>,
    pub log_probs: Array1<f64>,
    pub pre_tanh: Array2<f64>,
    pub noise: Array2<f64>,
    pub raw: Array2<f64>,
    pub cache: ForwardCache,
}

impl Actor {
    pub fn new<R: Rng + ?Sized>(
        state_dim: usize,
        action_low: Vec<f64>,
        action_high: Vec<f64>,
        hidden_units: usize,
        hidden_layers: usize,
        rng: &mut R,
    ) -> Self {
        assert_eq!(action_low.len(), action_high.len());
        let action_dim = action_low.len();
        let mut sizes = vec![state_dim];
        sizes.extend(std::iter::repeat(hidden_units).take(hidden_layers));
        sizes.push(2 * action_dim);
        Actor {
            net: Mlp::new(&sizes, Activation::Relu, rng),
            head: GaussianHead::new(action_dim),
            action_low: Array1::from(action_low),
            action_high: Array1::from(action_high),
        }
    }

    pub fn action_dim(&self) -> usize {
        self.head.dim
    }

    pub fn state_dim(&self) -> usize {
        self.net.in_dim()
    }

    pub fn net(&self) -> &Mlp {
        &self.net
    }

    pub fn net_mut(&mut self) -> &mut Mlp {
        &mut self.net
    }

    fn scale(&self, d: usize) -> f64 {
        (self.action_high[d] - self.action_low[d]) / 2.0
    }

    fn center(&self, d: usize) -> f64 {
        (self.action_high[d] + self.action_low[d]) / 2.0
    }

    /// Draws one action per state with fresh noise.
    pub fn sample_batch(&self, states: ArrayView2<f64>, rng: &mut ChaCha12Rng) -> ActorSample {
        let dim = self.action_dim();
        let mut noise = Array2::zeros((states.nrows(), dim));
        for v in noise.iter_mut() {
            *v = StandardNormal.sample(rng);
        }
        self.sample_batch_with_noise(states, noise)
    }

    /// Reparameterized sampling with the noise supplied by the caller
    /// (finite-difference probes need bit-identical noise across calls).
    pub fn sample_batch_with_noise(&self, states: ArrayView2<f64>, noise: Array2<f64>) -> ActorSample {
        let dim = self.action_dim();
        let (raw, cache) = self.net.forward_batch(states);
        let b = states.nrows();
        let mut actions = Array2::zeros((b, dim));
        let mut pre_tanh = Array2::zeros((b, dim));
        let mut log_probs = Array1::zeros(b);
        for i in 0..b {
            let (mean, logstd) = self.head.split(raw.row(i));
            let mut lp = 0.0;
            for d in 0..dim {
                let std = logstd[d].exp();
                let u = mean[d] + std * noise[[i, d]];
                let t = u.tanh();
                pre_tanh[[i, d]] = u;
                actions[[i, d]] = self.center(d) + self.scale(d) * t;
                // log N(u; mean, std) in epsilon form, minus the tanh and
                // box-scaling corrections
                lp += -logstd[d]
                    - 0.5 * LN_2PI
                    - 0.5 * noise[[i, d]] * noise[[i, d]]
                    - log_one_minus_tanh_sq(u)
                    - self.scale(d).ln();
            }
            log_probs[i] = lp;
        }
        ActorSample {
            actions,
            log_probs,
            pre_tanh,
            noise,
            raw,
            cache,
        }
    }

    /// Draws `n` actions per state; row layout is state-major. Returns the
    /// actions and their log-densities under the policy.
    pub fn sample_n_per_state(
        &self,
        states: ArrayView2<f64>,
        n: usize,
        rng: &mut ChaCha12Rng,
    ) -> (Array2<f64>, Array1<f64>) {
        let dim = self.action_dim();
        let raw = self.net.output_batch(states);
        let b = states.nrows();
        let mut actions = Array2::zeros((b * n, dim));
        let mut log_probs = Array1::zeros(b * n);
        for i in 0..b {
            let (mean, logstd) = self.head.split(raw.row(i));
            for j in 0..n {
                let row = i * n + j;
                let mut lp = 0.0;
                for d in 0..dim {
                    let eps: f64 = StandardNormal.sample(rng);
                    let std = logstd[d].exp();
                    let u = mean[d] + std * eps;
                    actions[[row, d]] = self.center(d) + self.scale(d) * u.tanh();
                    lp += -logstd[d]
                        - 0.5 * LN_2PI
                        - 0.5 * eps * eps
                        - log_one_minus_tanh_sq(u)
                        - self.scale(d).ln();
                }
                log_probs[row] = lp;
            }
        }
        (actions, log_probs)
    }

    /// Deterministic evaluation actions: tanh of the mean head.
    pub fn mean_actions(&self, states: ArrayView2<f64>) -> Array2<f64> {
        let raw = self.net.output_batch(states);
        let dim = self.action_dim();
        let mut out = Array2::zeros((states.nrows(), dim));
        for i in 0..states.nrows() {
            let (mean, _) = self.head.split(raw.row(i));
            for d in 0..dim {
                out[[i, d]] = self.center(d) + self.scale(d) * mean[d].tanh();
            }
        }
        out
    }

    /// Gradient of `sum_i w_mu[i] . dL/d(action_i) + w_lp[i] * dL/d(log_prob_i)`
    /// w.r.t. the raw network outputs of a previous [`ActorSample`].
    ///
    /// `grad_actions` is dL/da (B x dim); `grad_log_probs` is dL/dlogpi (B).
    pub fn backprop_sample(
        &self,
        sample: &ActorSample,
        grad_actions: ArrayView2<f64>,
        grad_log_probs: ArrayView1<f64>,
    ) -> (Gradients, Array2<f64>) {
        let dim = self.action_dim();
        let b = sample.actions.nrows();
        let mut grad_raw = Array2::zeros(sample.raw.raw_dim());
        for i in 0..b {
            for d in 0..dim {
                let u = sample.pre_tanh[[i, d]];
                let t = u.tanh();
                let raw_logstd = sample.raw[[i, dim + d]];
                let clamped =
                    raw_logstd > self.head.logstd_min && raw_logstd < self.head.logstd_max;
                let std = raw_logstd
                    .clamp(self.head.logstd_min, self.head.logstd_max)
                    .exp();
                let eps = sample.noise[[i, d]];
                // action path: da/du = scale * (1 - tanh^2)
                let da_du = self.scale(d) * (1.0 - t * t);
                // log-prob path: dlogpi/du = 2 tanh(u); dlogpi/dlogstd = -1 (+ chain through u)
                let dlp_du = 2.0 * t;
                let g_a = grad_actions[[i, d]];
                let g_lp = grad_log_probs[i];
                // du/dmu = 1, du/dlogstd = std * eps
                grad_raw[[i, d]] = g_a * da_du + g_lp * dlp_du;
                if clamped {
                    grad_raw[[i, dim + d]] =
                        (g_a * da_du + g_lp * dlp_du) * std * eps + g_lp * (-1.0);
                }
            }
        }
        self.net.backward_batch(&sample.cache, grad_raw.view())
    }
}

/// Trainable entropy temperature with dual-gradient updates toward the
/// target entropy -dim(A).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EntropyCoef {
    log_alpha: f64,
    pub target_entropy: f64,
    adam: ScalarAdam,
}

impl EntropyCoef {
    pub fn new(action_dim: usize, lr: f64) -> Self {
        EntropyCoef {
            log_alpha: 0.0,
            target_entropy: -(action_dim as f64),
            adam: ScalarAdam::new(lr),
        }
    }

    pub fn alpha(&self) -> f64 {
        self.log_alpha.exp()
    }

    pub fn log_alpha(&self) -> f64 {
        self.log_alpha
    }

    /// Dual update: entropy above target shrinks alpha, below grows it.
    /// Returns the gradient applied to log-alpha.
    pub fn update(&mut self, mean_log_prob: f64) -> f64 {
        let grad = -(mean_log_prob + self.target_entropy);
        self.adam.step(&mut self.log_alpha, grad);
        grad
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;

    fn toy_actor(seed: u64) -> Actor {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        Actor::new(1, vec![-1.0], vec![1.0], 16, 2, &mut rng)
    }

    #[test]
    fn sampled_actions_stay_in_the_box() {
        let actor = toy_actor(5);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let states = Array2::from_shape_fn((64, 1), |_| rng.random_range(-2.0..2.0));
        let sample = actor.sample_batch(states.view(), &mut rng);
        for &a in sample.actions.iter() {
            assert!((-1.0..=1.0).contains(&a));
        }
        for &lp in sample.log_probs.iter() {
            assert!(lp.is_finite());
        }
    }

    #[test]
    fn log_prob_matches_quadrature_entropy() {
        // zero-weight net -> mu = 0, log_std = 0. The squashed policy's
        // entropy is H(N(0,1)) + E[log(1 - tanh(u)^2)], computable by
        // quadrature over u and compared against the sampler's -log pi.
        let actor = Actor {
            net: Mlp::zeros(&[1, 2], Activation::Relu),
            head: GaussianHead::new(1),
            action_low: array![-1.0],
            action_high: array![1.0],
        };
        let mut quad = 0.0;
        let n = 20_000;
        let (lo, hi) = (-8.0, 8.0);
        let h = (hi - lo) / n as f64;
        for k in 0..n {
            let u = lo + (k as f64 + 0.5) * h;
            let pdf = (-0.5 * u * u).exp() / (2.0 * std::f64::consts::PI).sqrt();
            quad += pdf * log_one_minus_tanh_sq(u) * h;
        }
        let analytic_entropy = 0.5 * (LN_2PI + 1.0) + quad;

        let mut rng = ChaCha12Rng::seed_from_u64(1);
        let states = Array2::zeros((1, 1));
        let (_, lps) = actor.sample_n_per_state(states.view(), 50_000, &mut rng);
        let mc_entropy = -lps.iter().sum::<f64>() / lps.len() as f64;
        assert!(
            (mc_entropy - analytic_entropy).abs() < 0.02,
            "mc {mc_entropy} vs quadrature {analytic_entropy}"
        );
    }

    #[test]
    fn entropy_update_signs() {
        let mut coef = EntropyCoef::new(1, 1e-2);
        // entropy above target: mean_log_prob = -2 vs target -1 -> alpha down
        let a0 = coef.alpha();
        coef.update(-2.0);
        assert!(coef.alpha() < a0);
        // entropy equals target: measured entropy -E[log pi] = 1 = -target,
        // so mean_log_prob = 1 and the gradient vanishes
        let mut coef = EntropyCoef::new(1, 1e-2);
        let a0 = coef.alpha();
        let g = coef.update(1.0);
        assert_eq!(g, 0.0);
        assert_eq!(coef.alpha(), a0);
    }
}
