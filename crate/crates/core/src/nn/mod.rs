//! Minimal differentiable substrate: batch-first MLPs, reverse-mode
//! gradients, Adam, and diagonal-Gaussian heads. No frameworks.

mod adam;
mod gaussian;
mod mlp;

pub use adam::{AdamState, ScalarAdam, DEFAULT_BETA1, DEFAULT_BETA2, DEFAULT_EPS};
pub use gaussian::{
    gaussian_kl, logsumexp, normal_logpdf, GaussianHead, DEFAULT_LOGSTD_MAX, DEFAULT_LOGSTD_MIN,
    LN_2PI,
};
pub use mlp::{Activation, ForwardCache, Gradients, Mlp};
