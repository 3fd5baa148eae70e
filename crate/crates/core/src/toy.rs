//! The designed 1-D benchmark MDP: piecewise-quadratic next-state mean over
//! five action intervals, reward R(s,a) = s, and a clipped-Gaussian
//! behavior policy for offline data generation.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::dataset::{DatasetMeta, OfflineDataset, Transition};

/// Interior breakpoints of the piecewise dynamics. The mean is continuous
/// across all four (value 0.8 at each).
pub const TOY_BREAKPOINTS: [f64; 4] = [-0.6, -0.2, 0.2, 0.6];

#[derive(Debug, Error, PartialEq)]
pub enum ToyError {
    #[error("action {0} outside the action box [-1, 1]")]
    ActionOutOfRange(f64),
}

/// Configuration of the benchmark MDP and its offline dataset.
#[derive(Debug, Clone)]
pub struct ToyMdpSpec {
    pub action_box: (f64, f64),
    /// Behavior policy: N(mean, std) clipped to the action box.
    pub behavior_mean: f64,
    pub behavior_std: f64,
    pub dataset_size: usize,
}

impl Default for ToyMdpSpec {
    fn default() -> Self {
        ToyMdpSpec {
            action_box: (-1.0, 1.0),
            behavior_mean: 0.0,
            behavior_std: 0.35,
            dataset_size: 1000,
        }
    }
}

/// Piecewise (mu, sigma) of the next-state distribution.
///
/// Interval ownership is half-open [lo, hi) except the final interval,
/// which is closed at a = 1.
pub fn toy_mean_sigma(action: f64) -> Result<(f64, f64), ToyError> {
    if !(-1.0..=1.0).contains(&action) || action.is_nan() {
        return Err(ToyError::ActionOutOfRange(action));
    }
    let a = action;
    let (mu, sigma) = if a < -0.6 {
        (-a + 0.2, 0.06)
    } else if a < -0.2 {
        (5.0 * (a + 0.4).powi(2) + 0.6, 0.04)
    } else if a < 0.2 {
        (-5.0 * a * a + 1.0, 0.02)
    } else if a < 0.6 {
        (10.0 * (a - 0.4).powi(2) + 0.4, 0.04)
    } else {
        (a + 0.2, 0.06)
    };
    Ok((mu, sigma))
}

/// One step with the noise draw supplied explicitly: s' = mu(a) + sigma(a) * eps.
/// Reward is the current state; the task never terminates.
pub fn toy_step_with_noise(state: f64, action: f64, eps: f64) -> Result<Transition, ToyError> {
    let (mu, sigma) = toy_mean_sigma(action)?;
    Ok(Transition {
        state: vec![state],
        action: vec![action],
        reward: state,
        next_state: vec![mu + sigma * eps],
        terminal: false,
    })
}

/// One step with noise drawn from the given rng.
pub fn toy_step<R: Rng + ?Sized>(
    state: f64,
    action: f64,
    rng: &mut R,
) -> Result<Transition, ToyError> {
    let eps: f64 = StandardNormal.sample(rng);
    toy_step_with_noise(state, action, eps)
}

/// Samples one behavior action: N(mean, std) clipped to the action box.
pub fn behavior_action<R: Rng + ?Sized>(spec: &ToyMdpSpec, rng: &mut R) -> f64 {
    let eps: f64 = StandardNormal.sample(rng);
    let a = spec.behavior_mean + spec.behavior_std * eps;
    a.clamp(spec.action_box.0, spec.action_box.1)
}

/// Generates the offline dataset: `dataset_size` single-step episodes with
/// s0 ~ U[0, 1] and actions from the clipped behavior Gaussian.
/// Deterministic given the seed.
pub fn generate_toy_dataset(spec: &ToyMdpSpec, seed: u64) -> OfflineDataset {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
    let mut transitions = Vec::with_capacity(spec.dataset_size);
    for _ in 0..spec.dataset_size {
        let s0: f64 = rng.random_range(0.0..1.0);
        let a = behavior_action(spec, &mut rng);
        transitions.push(toy_step(s0, a, &mut rng).expect("behavior action is in range"));
    }
    OfflineDataset::new(
        transitions,
        DatasetMeta {
            generator: format!(
                "clipped N({}, {}) behavior policy, s0 ~ U[0,1]",
                spec.behavior_mean, spec.behavior_std
            ),
            seed,
        },
    )
    .expect("generated transitions are well-formed")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha12Rng;

    #[test]
    fn table_values_at_reference_actions() {
        assert_eq!(toy_mean_sigma(0.0).unwrap(), (1.0, 0.02));
        assert_eq!(toy_mean_sigma(-1.0).unwrap(), (1.2, 0.06));
        // breakpoint ownership: sigma comes from [-0.6, -0.2)
        let (mu, sigma) = toy_mean_sigma(-0.6).unwrap();
        assert!((mu - 0.8).abs() < 1e-12);
        assert_eq!(sigma, 0.04);
    }

    #[test]
    fn mean_is_continuous_at_breakpoints() {
        for b in TOY_BREAKPOINTS {
            let eps = 1e-9;
            let left = toy_mean_sigma((b - eps).max(-1.0)).unwrap().0;
            let right = toy_mean_sigma(b).unwrap().0;
            assert!((left - right).abs() < 1e-7, "discontinuity at {b}");
            assert!((right - 0.8).abs() < 1e-12);
        }
    }

    #[test]
    fn out_of_range_action_is_rejected() {
        assert_eq!(toy_mean_sigma(1.2), Err(ToyError::ActionOutOfRange(1.2)));
        assert!(toy_step(0.0, -1.01, &mut ChaCha12Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn degenerate_noise_step_hits_the_branch_mean() {
        let t = toy_step_with_noise(0.5, 0.0, 0.0).unwrap();
        assert_eq!(t.reward, 0.5);
        assert_eq!(t.next_state[0], 1.0);
        assert!(!t.terminal);
    }

    #[test]
    fn reward_is_exactly_the_state() {
        let mut rng = ChaCha12Rng::seed_from_u64(123);
        for _ in 0..100 {
            let s: f64 = rng.random_range(-3.0..3.0);
            let a: f64 = rng.random_range(-1.0..1.0);
            let t = toy_step(s, a, &mut rng).unwrap();
            assert_eq!(t.reward, s);
        }
    }

    #[test]
    fn monte_carlo_moments_match_the_table() {
        let mut rng = ChaCha12Rng::seed_from_u64(42);
        let n = 10_000;
        let xs: Vec<f64> = (0..n)
            .map(|_| toy_step(0.0, 0.0, &mut rng).unwrap().next_state[0])
            .collect();
        let mean = xs.iter().sum::<f64>() / n as f64;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        assert!((mean - 1.0).abs() < 0.001, "mean {mean}");
        assert!((var.sqrt() - 0.02).abs() < 0.002, "std {}", var.sqrt());
    }

    #[test]
    fn dataset_has_requested_size_and_support() {
        let spec = ToyMdpSpec::default();
        let ds = generate_toy_dataset(&spec, 7);
        assert_eq!(ds.len(), 1000);
        let actions: Vec<f64> = ds.transitions().iter().map(|t| t.action[0]).collect();
        assert!(actions.iter().all(|a| (-1.0..=1.0).contains(a)));
        let mean = actions.iter().sum::<f64>() / actions.len() as f64;
        assert!(mean.abs() < 0.04, "action mean {mean}");
        let tail = actions.iter().filter(|a| a.abs() > 0.7).count() as f64 / 1000.0;
        assert!(tail < 0.05, "tail fraction {tail}");
    }

    #[test]
    fn equal_seeds_give_bit_identical_datasets() {
        let spec = ToyMdpSpec::default();
        let a = generate_toy_dataset(&spec, 99);
        let b = generate_toy_dataset(&spec, 99);
        assert_eq!(a.transitions(), b.transitions());

        let dir = tempfile::tempdir().unwrap();
        let (pa, pb) = (dir.path().join("a.txt"), dir.path().join("b.txt"));
        a.save(&pa).unwrap();
        b.save(&pb).unwrap();
        assert_eq!(
            std::fs::read(&pa).unwrap(),
            std::fs::read(&pb).unwrap(),
            "saved bytes differ"
        );
    }
}
