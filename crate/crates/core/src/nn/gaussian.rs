//! Diagonal-Gaussian output heads: an `Mlp` emits `[mean, log_std]` pairs and
//! the head turns them into densities, samples, and NLL gradients.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub const LN_2PI: f64 = 1.8378770664093453;

pub const DEFAULT_LOGSTD_MIN: f64 = -5.0;
pub const DEFAULT_LOGSTD_MAX: f64 = 2.0;

/// Interprets a raw network output of width `2 * dim` as per-dimension mean
/// and clamped log-std.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GaussianHead {
    pub dim: usize,
    pub logstd_min: f64,
    pub logstd_max: f64,
}

impl GaussianHead {
    pub fn new(dim: usize) -> Self {
        GaussianHead {
            dim,
            logstd_min: DEFAULT_LOGSTD_MIN,
            logstd_max: DEFAULT_LOGSTD_MAX,
        }
    }

    pub fn raw_dim(&self) -> usize {
        2 * self.dim
    }

    /// Splits one raw output row into (mean, clamped log-std).
    pub fn split(&self, raw: ArrayView1<f64>) -> (Array1<f64>, Array1<f64>) {
        assert_eq!(raw.len(), self.raw_dim(), "raw output width mismatch");
        let mean = raw.slice(ndarray::s![..self.dim]).to_owned();
        let logstd = raw
            .slice(ndarray::s![self.dim..])
            .mapv(|v| v.clamp(self.logstd_min, self.logstd_max));
        (mean, logstd)
    }

    /// Negative log-likelihood of `target` under the Gaussian encoded in `raw`.
    pub fn nll(&self, raw: ArrayView1<f64>, target: ArrayView1<f64>) -> f64 {
        assert_eq!(target.len(), self.dim, "target dimension mismatch");
        let (mean, logstd) = self.split(raw);
        let mut nll = 0.0;
        for d in 0..self.dim {
            let std = logstd[d].exp();
            let z = (target[d] - mean[d]) / std;
            nll += logstd[d] + 0.5 * LN_2PI + 0.5 * z * z;
        }
        nll
    }

    /// Mean NLL over a batch together with its gradient w.r.t. the raw
    /// outputs. Clamped log-std entries receive zero gradient.
    pub fn nll_batch_grad(
        &self,
        raw: ArrayView2<f64>,
        targets: ArrayView2<f64>,
    ) -> (f64, Array2<f64>) {
        assert_eq!(raw.ncols(), self.raw_dim(), "raw output width mismatch");
        assert_eq!(targets.ncols(), self.dim, "target dimension mismatch");
        assert_eq!(raw.nrows(), targets.nrows(), "batch size mismatch");
        let n = raw.nrows();
        let inv_n = 1.0 / n as f64;
        let mut grad = Array2::zeros(raw.raw_dim());
        let mut total = 0.0;
        for i in 0..n {
            for d in 0..self.dim {
                let raw_logstd = raw[[i, self.dim + d]];
                let clamped = raw_logstd.clamp(self.logstd_min, self.logstd_max);
                let std = clamped.exp();
                let z = (targets[[i, d]] - raw[[i, d]]) / std;
                total += clamped + 0.5 * LN_2PI + 0.5 * z * z;
                grad[[i, d]] = -z / std * inv_n;
                if raw_logstd > self.logstd_min && raw_logstd < self.logstd_max {
                    grad[[i, self.dim + d]] = (1.0 - z * z) * inv_n;
                }
            }
        }
        (total * inv_n, grad)
    }

    /// Draws one sample from the encoded Gaussian.
    pub fn sample<R: Rng + ?Sized>(&self, raw: ArrayView1<f64>, rng: &mut R) -> Array1<f64> {
        let (mean, logstd) = self.split(raw);
        let mut out = mean;
        for d in 0..self.dim {
            let eps: f64 = StandardNormal.sample(rng);
            out[d] += logstd[d].exp() * eps;
        }
        out
    }
}

/// log N(x; mean, std)
pub fn normal_logpdf(x: f64, mean: f64, std: f64) -> f64 {
    let z = (x - mean) / std;
    -std.ln() - 0.5 * LN_2PI - 0.5 * z * z
}

/// KL(N(mu_p, std_p) || N(mu_q, std_q)) for scalars.
pub fn gaussian_kl(mu_p: f64, std_p: f64, mu_q: f64, std_q: f64) -> f64 {
    (std_q / std_p).ln() + (std_p * std_p + (mu_p - mu_q).powi(2)) / (2.0 * std_q * std_q) - 0.5
}

/// Numerically stable log(sum(exp(xs))).
pub fn logsumexp(xs: &[f64]) -> f64 {
    let m = xs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}
