//! Feedforward networks with hand-rolled reverse-mode gradients.
//!
//! Everything is batch-first: inputs are `(batch, in_dim)` matrices so the
//! heavy lifting happens inside GEMM calls instead of per-sample loops.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

/// Hidden-layer nonlinearity. The output layer is always linear; heads
/// (Gaussian, tanh squashing, softmax) are applied by the caller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Activation {
    Relu,
    Tanh,
}

impl Activation {
    fn apply_inplace(self, z: &mut Array2<f64>) {
        match self {
            Activation::Relu => z.mapv_inplace(|v| if v > 0.0 { v } else { 0.0 }),
            Activation::Tanh => z.mapv_inplace(f64::tanh),
        }
    }

    /// Derivative expressed in terms of the post-activation value.
    #[inline]
    fn derivative_from_post(self, post: f64) -> f64 {
        match self {
            Activation::Relu => {
                if post > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - post * post,
        }
    }
}

/// Multilayer perceptron with a linear output layer.
///
/// Weights are stored `(in, out)` so a forward pass is `x.dot(w) + b`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Mlp {
    sizes: Vec<usize>,
    hidden: Activation,
    weights: Vec<Array2<f64>>,
    biases: Vec<Array1<f64>>,
}

/// Post-activation values recorded during a forward pass; required by
/// [`Mlp::backward_batch`].
#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// `acts[0]` is the input, `acts[l]` the input to layer `l`.
    acts: Vec<Array2<f64>>,
}

/// Parameter gradients shaped exactly like the network they came from.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
}

impl Mlp {
    /// Uniform fan-in initialization: W, b ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], hidden: Activation, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "need at least input and output sizes");
        let mut weights = Vec::with_capacity(sizes.len() - 1);
        let mut biases = Vec::with_capacity(sizes.len() - 1);
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = 1.0 / (fan_in as f64).sqrt();
            weights.push(Array2::from_shape_fn((fan_in, fan_out), |_| {
                rng.random_range(-bound..bound)
            }));
            biases.push(Array1::from_shape_fn(fan_out, |_| {
                rng.random_range(-bound..bound)
            }));
        }
        Mlp {
            sizes: sizes.to_vec(),
            hidden,
            weights,
            biases,
        }
    }

    /// All-zero parameters; handy for constructing constant functions in tests.
    pub fn zeros(sizes: &[usize], hidden: Activation) -> Self {
        assert!(sizes.len() >= 2);
        let weights = sizes
            .windows(2)
            .map(|w| Array2::zeros((w[0], w[1])))
            .collect();
        let biases = sizes.windows(2).map(|w| Array1::zeros(w[1])).collect();
        Mlp {
            sizes: sizes.to_vec(),
            hidden,
            weights,
            biases,
        }
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn in_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn out_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn hidden_activation(&self) -> Activation {
        self.hidden
    }

    fn num_layers(&self) -> usize {
        self.weights.len()
    }

    /// Forward pass that records per-layer activations for a later backward.
    pub fn forward_batch(&self, x: ArrayView2<f64>) -> (Array2<f64>, ForwardCache) {
        assert_eq!(
            x.ncols(),
            self.in_dim(),
            "input dimension {} does not match network input {}",
            x.ncols(),
            self.in_dim()
        );
        let last = self.num_layers() - 1;
        let mut acts = Vec::with_capacity(self.num_layers());
        acts.push(x.to_owned());
        for l in 0..last {
            let mut z = acts[l].dot(&self.weights[l]);
            z += &self.biases[l];
            self.hidden.apply_inplace(&mut z);
            acts.push(z);
        }
        let mut out = acts[last].dot(&self.weights[last]);
        out += &self.biases[last];
        (out, ForwardCache { acts })
    }

    /// Forward pass without caching; use for inference.
    pub fn output_batch(&self, x: ArrayView2<f64>) -> Array2<f64> {
        assert_eq!(
            x.ncols(),
            self.in_dim(),
            "input dimension {} does not match network input {}",
            x.ncols(),
            self.in_dim()
        );
        let last = self.num_layers() - 1;
        let mut cur = x.to_owned();
        for l in 0..self.num_layers() {
            let mut z = cur.dot(&self.weights[l]);
            z += &self.biases[l];
            if l < last {
                self.hidden.apply_inplace(&mut z);
            }
            cur = z;
        }
        cur
    }

    /// Single-sample convenience wrapper around [`Mlp::output_batch`].
    pub fn output_one(&self, x: ArrayView1<f64>) -> Array1<f64> {
        let row = x.insert_axis(Axis(0));
        self.output_batch(row).index_axis_move(Axis(0), 0)
    }

    /// Reverse-mode pass. `grad_out` is dLoss/dOutput for the batch of the
    /// cached forward; returns parameter gradients and dLoss/dInput.
    pub fn backward_batch(
        &self,
        cache: &ForwardCache,
        grad_out: ArrayView2<f64>,
    ) -> (Gradients, Array2<f64>) {
        assert_eq!(cache.acts.len(), self.num_layers(), "stale forward cache");
        assert_eq!(grad_out.ncols(), self.out_dim(), "gradient dimension mismatch");
        let mut gw: Vec<Array2<f64>> = Vec::with_capacity(self.num_layers());
        let mut gb: Vec<Array1<f64>> = Vec::with_capacity(self.num_layers());
        for w in self.sizes.windows(2) {
            gw.push(Array2::zeros((w[0], w[1])));
            gb.push(Array1::zeros(w[1]));
        }
        let mut delta = grad_out.to_owned();
        let mut input_grad = Array2::zeros((grad_out.nrows(), self.in_dim()));
        for l in (0..self.num_layers()).rev() {
            gw[l] = cache.acts[l].t().dot(&delta);
            gb[l] = delta.sum_axis(Axis(0));
            let upstream = delta.dot(&self.weights[l].t());
            if l > 0 {
                let post = &cache.acts[l];
                let mut next = upstream;
                next.zip_mut_with(post, |d, &p| *d *= self.hidden.derivative_from_post(p));
                delta = next;
            } else {
                input_grad = upstream;
            }
        }
        (
            Gradients {
                weights: gw,
                biases: gb,
            },
            input_grad,
        )
    }

    /// Smallest |pre-activation| over all hidden units for this input.
    /// Finite-difference probes use it to stay away from ReLU kinks.
    pub fn min_abs_preactivation(&self, x: ArrayView1<f64>) -> f64 {
        let last = self.num_layers() - 1;
        let mut cur = x.to_owned().insert_axis(Axis(0));
        let mut min_abs = f64::INFINITY;
        for l in 0..self.num_layers() {
            let mut z = cur.dot(&self.weights[l]);
            z += &self.biases[l];
            if l < last {
                for &v in z.iter() {
                    min_abs = min_abs.min(v.abs());
                }
                self.hidden.apply_inplace(&mut z);
            }
            cur = z;
        }
        min_abs
    }

    pub fn num_params(&self) -> usize {
        self.sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn param(&self, idx: usize) -> f64 {
        let (l, in_weight, off) = self.locate(idx);
        if in_weight {
            let cols = self.weights[l].ncols();
            self.weights[l][[off / cols, off % cols]]
        } else {
            self.biases[l][off]
        }
    }

    pub fn set_param(&mut self, idx: usize, value: f64) {
        let (l, in_weight, off) = self.locate(idx);
        if in_weight {
            let cols = self.weights[l].ncols();
            self.weights[l][[off / cols, off % cols]] = value;
        } else {
            self.biases[l][off] = value;
        }
    }

    fn locate(&self, mut idx: usize) -> (usize, bool, usize) {
        for (l, w) in self.sizes.windows(2).enumerate() {
            let nw = w[0] * w[1];
            if idx < nw {
                return (l, true, idx);
            }
            idx -= nw;
            if idx < w[1] {
                return (l, false, idx);
            }
            idx -= w[1];
        }
        panic!("parameter index out of range");
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    pub fn weights_and_biases(&self) -> (&[Array2<f64>], &[Array1<f64>]) {
        (&self.weights, &self.biases)
    }

    pub fn weights_and_biases_mut(&mut self) -> (&mut Vec<Array2<f64>>, &mut Vec<Array1<f64>>) {
        (&mut self.weights, &mut self.biases)
    }

    pub(crate) fn weights_mut(&mut self) -> (&mut Vec<Array2<f64>>, &mut Vec<Array1<f64>>) {
        (&mut self.weights, &mut self.biases)
    }
}

impl Gradients {
    pub fn zeros_like(mlp: &Mlp) -> Self {
        Gradients {
            weights: mlp
                .sizes
                .windows(2)
                .map(|w| Array2::zeros((w[0], w[1])))
                .collect(),
            biases: mlp.sizes.windows(2).map(|w| Array1::zeros(w[1])).collect(),
        }
    }

    /// self += c * other
    pub fn add_scaled(&mut self, other: &Gradients, c: f64) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            a.zip_mut_with(b, |x, &y| *x += c * y);
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            a.zip_mut_with(b, |x, &y| *x += c * y);
        }
    }

    pub fn scale(&mut self, c: f64) {
        for a in &mut self.weights {
            a.mapv_inplace(|x| x * c);
        }
        for a in &mut self.biases {
            a.mapv_inplace(|x| x * c);
        }
    }

    pub fn max_abs(&self) -> f64 {
        let w = self
            .weights
            .iter()
            .flat_map(|a| a.iter())
            .fold(0.0_f64, |m, &v| m.max(v.abs()));
        self.biases
            .iter()
            .flat_map(|a| a.iter())
            .fold(w, |m, &v| m.max(v.abs()))
    }

    pub fn all_finite(&self) -> bool {
        self.weights.iter().all(|w| w.iter().all(|v| v.is_finite()))
            && self.biases.iter().all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// Flat parameter indexing matching [`Mlp::param`].
    pub fn flat(&self, mut idx: usize) -> f64 {
        for l in 0..self.weights.len() {
            let nw = self.weights[l].len();
            if idx < nw {
                let cols = self.weights[l].ncols();
                return self.weights[l][[idx / cols, idx % cols]];
            }
            idx -= nw;
            let nb = self.biases[l].len();
            if idx < nb {
                return self.biases[l][idx];
            }
            idx -= nb;
        }
        panic!("gradient index out of range");
    }
}
