//! Central-finite-difference probing of analytic gradients. Test-oriented
//! but part of the library so both the unit suites and the acceptance suite
//! drive the same oracle.

use crate::nn::Mlp;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// Relative disagreement |a - fd| / max(|a|, |fd|, 1e-6).
pub fn grad_rel_err(analytic: f64, fd: f64) -> f64 {
    (analytic - fd).abs() / analytic.abs().max(fd.abs()).max(1e-6)
}

/// Central finite difference of `loss` w.r.t. parameter `idx` of `net`.
/// The closure must be a pure function of the network.
pub fn central_difference<F>(net: &mut Mlp, idx: usize, h: f64, mut loss: F) -> f64
where
    F: FnMut(&Mlp) -> f64,
{
    let orig = net.param(idx);
    net.set_param(idx, orig + h);
    let plus = loss(net);
    net.set_param(idx, orig - h);
    let minus = loss(net);
    net.set_param(idx, orig);
    (plus - minus) / (2.0 * h)
}

/// Probes `count` parameter indices (deterministically spread over the
/// network) and returns the worst relative error between the analytic
/// gradient accessor and the central difference.
pub fn probe_worst_rel_err<F, G>(
    net: &mut Mlp,
    count: usize,
    h: f64,
    mut loss: F,
    analytic: G,
) -> f64
where
    F: FnMut(&Mlp) -> f64,
    G: Fn(usize) -> f64,
{
    let n = net.num_params();
    let mut worst = 0.0_f64;
    for k in 0..count {
        // golden-ratio stride covers the parameter vector evenly
        let idx = (k * 2654435761 + 1) % n;
        let fd = central_difference(net, idx, h, &mut loss);
        worst = worst.max(grad_rel_err(analytic(idx), fd));
    }
    worst
}

use ndarray::Array2;
use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::nn::Activation;

/// Random net and input batch whose hidden pre-activations all sit at least
/// `margin` away from the ReLU kink, so central differences are valid.
pub fn kink_free_net_and_batch(
    sizes: &[usize],
    batch: usize,
    margin: f64,
    rng: &mut ChaCha12Rng,
) -> (Mlp, Array2<f64>) {
    loop {
        let net = Mlp::new(sizes, Activation::Relu, rng);
        let x = Array2::from_shape_fn((batch, sizes[0]), |_| rng.random_range(-1.0..1.0));
        let clear = (0..batch).all(|i| net.min_abs_preactivation(x.row(i)) > margin);
        if clear {
            return (net, x);
        }
    }
}
