//! Enumerable MDPs with exact row-stochastic transition tensors.

use ndarray::{Array1, Array2, Array3};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum TabularError {
    #[error("transition row (s={s}, a={a}) sums to {sum}, expected 1")]
    BadTransitionRow { s: usize, a: usize, sum: f64 },
    #[error("discount {0} outside (0, 1)")]
    BadDiscount(f64),
    #[error("initial distribution sums to {0}, expected 1")]
    BadInitialDistribution(f64),
    #[error("policy row s={0} is not stochastic")]
    BadPolicy(usize),
    #[error("pi({a}|{s}) = 0 where pi_b({a}|{s}) > 0: behavior/policy ratio undefined")]
    ZeroPolicyMass { s: usize, a: usize },
    #[error("linear system is singular")]
    Singular,
    #[error("direct solve residual {residual:.3e} exceeds {tol:.1e}")]
    ResidualTooLarge { residual: f64, tol: f64 },
    #[error("penalty undefined at (s={s}, a={a}): d_beta is zero but omega differs from d")]
    UndefinedPenalty { s: usize, a: usize },
    #[error("lower-bound condition unsatisfiable: minimum premise margin {0:.3e} is not positive")]
    ConditionUnsatisfiable(f64),
    #[error("fixed-point iteration did not converge within {0} sweeps")]
    NoConvergence(usize),
}

/// A finite MDP: transition tensor T[s][a][s'], reward table r[s][a],
/// discount, and initial state distribution.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TabularMdp {
    pub n_states: usize,
    pub n_actions: usize,
    pub transition: Array3<f64>,
    pub reward: Array2<f64>,
    pub gamma: f64,
    pub rho0: Array1<f64>,
}

impl TabularMdp {
    pub fn new(
        transition: Array3<f64>,
        reward: Array2<f64>,
        gamma: f64,
        rho0: Array1<f64>,
    ) -> Result<Self, TabularError> {
        let (s, a, s2) = transition.dim();
        assert_eq!(s, s2, "transition tensor must be square in states");
        assert_eq!(reward.dim(), (s, a));
        assert_eq!(rho0.len(), s);
        let mdp = TabularMdp {
            n_states: s,
            n_actions: a,
            transition,
            reward,
            gamma,
            rho0,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<(), TabularError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(TabularError::BadDiscount(self.gamma));
        }
        for s in 0..self.n_states {
            for a in 0..self.n_actions {
                let sum: f64 = (0..self.n_states)
                    .map(|s2| self.transition[[s, a, s2]])
                    .sum();
                if (sum - 1.0).abs() > 1e-12 {
                    return Err(TabularError::BadTransitionRow { s, a, sum });
                }
            }
        }
        let rho_sum: f64 = self.rho0.sum();
        if (rho_sum - 1.0).abs() > 1e-12 {
            return Err(TabularError::BadInitialDistribution(rho_sum));
        }
        Ok(())
    }

    pub fn r_max(&self) -> f64 {
        self.reward.iter().fold(0.0_f64, |m, &r| m.max(r.abs()))
    }

    /// Mixture MDP (1-f) * self + f * other: mixed rewards and transitions.
    /// The mixed Bellman operator equals the f-weighted sum of the two.
    pub fn mix(&self, other: &TabularMdp, f: f64) -> TabularMdp {
        assert_eq!(self.n_states, other.n_states);
        assert_eq!(self.n_actions, other.n_actions);
        let mut t = self.transition.clone();
        t.zip_mut_with(&other.transition, |x, &y| *x = (1.0 - f) * *x + f * y);
        let mut r = self.reward.clone();
        r.zip_mut_with(&other.reward, |x, &y| *x = (1.0 - f) * *x + f * y);
        TabularMdp {
            n_states: self.n_states,
            n_actions: self.n_actions,
            transition: t,
            reward: r,
            gamma: self.gamma,
            rho0: self.rho0.clone(),
        }
    }

    /// Dirichlet(1) transition rows, rewards U[-1, 1], Dirichlet(1) rho0.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        rng: &mut R,
    ) -> TabularMdp {
        let mut transition = Array3::zeros((n_states, n_actions, n_states));
        for s in 0..n_states {
            for a in 0..n_actions {
                let row = dirichlet_uniform(n_states, rng);
                for s2 in 0..n_states {
                    transition[[s, a, s2]] = row[s2];
                }
            }
        }
        let reward = Array2::from_shape_fn((n_states, n_actions), |_| rng.random_range(-1.0..1.0));
        let rho0 = Array1::from(dirichlet_uniform(n_states, rng));
        TabularMdp {
            n_states,
            n_actions,
            transition,
            reward,
            gamma,
            rho0,
        }
    }

    /// Maximum-likelihood empirical MDP from (s, a, r, s') visit counts.
    /// Unvisited (s, a) become zero-reward self-loops; the returned flag
    /// table marks which pairs were actually visited.
    pub fn from_counts(
        samples: &[(usize, usize, f64, usize)],
        n_states: usize,
        n_actions: usize,
        gamma: f64,
        rho0: Array1<f64>,
    ) -> (TabularMdp, Array2<bool>, Array2<f64>) {
        let mut counts = Array2::<f64>::zeros((n_states, n_actions));
        let mut reward_sum = Array2::<f64>::zeros((n_states, n_actions));
        let mut next_counts = Array3::<f64>::zeros((n_states, n_actions, n_states));
        for &(s, a, r, s2) in samples {
            counts[[s, a]] += 1.0;
            reward_sum[[s, a]] += r;
            next_counts[[s, a, s2]] += 1.0;
        }
        let mut transition = Array3::zeros((n_states, n_actions, n_states));
        let mut reward = Array2::zeros((n_states, n_actions));
        let mut visited = Array2::from_elem((n_states, n_actions), false);
        for s in 0..n_states {
            for a in 0..n_actions {
                if counts[[s, a]] > 0.0 {
                    visited[[s, a]] = true;
                    reward[[s, a]] = reward_sum[[s, a]] / counts[[s, a]];
                    for s2 in 0..n_states {
                        transition[[s, a, s2]] = next_counts[[s, a, s2]] / counts[[s, a]];
                    }
                } else {
                    transition[[s, a, s]] = 1.0;
                }
            }
        }
        (
            TabularMdp {
                n_states,
                n_actions,
                transition,
                reward,
                gamma,
                rho0,
            },
            visited,
            counts,
        )
    }
}

/// Row-stochastic policy table pi(a|s).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Policy(pub Array2<f64>);

impl Policy {
    pub fn uniform(n_states: usize, n_actions: usize) -> Policy {
        Policy(Array2::from_elem(
            (n_states, n_actions),
            1.0 / n_actions as f64,
        ))
    }

    /// Dirichlet(1) rows blended with `uniform_mass` of the uniform policy,
    /// which keeps behavior/policy ratios bounded away from zero.
    pub fn random<R: Rng + ?Sized>(
        n_states: usize,
        n_actions: usize,
        uniform_mass: f64,
        rng: &mut R,
    ) -> Policy {
        let u = 1.0 / n_actions as f64;
        let mut table = Array2::zeros((n_states, n_actions));
        for s in 0..n_states {
            let row = dirichlet_uniform(n_actions, rng);
            for a in 0..n_actions {
                table[[s, a]] = (1.0 - uniform_mass) * row[a] + uniform_mass * u;
            }
        }
        Policy(table)
    }

    pub fn validate(&self) -> Result<(), TabularError> {
        for (s, row) in self.0.rows().into_iter().enumerate() {
            let sum: f64 = row.sum();
            if (sum - 1.0).abs() > 1e-10 || row.iter().any(|&p| p < 0.0) {
                return Err(TabularError::BadPolicy(s));
            }
        }
        Ok(())
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.0[[s, a]]
    }

    /// Deterministic policy picking argmax_a q(s, a).
    pub fn greedy(q: &Array2<f64>) -> Policy {
        let (s_count, a_count) = q.dim();
        let mut table = Array2::zeros((s_count, a_count));
        for s in 0..s_count {
            let mut best = 0;
            for a in 1..a_count {
                if q[[s, a]] > q[[s, best]] {
                    best = a;
                }
            }
            table[[s, best]] = 1.0;
        }
        Policy(table)
    }

    /// (1 - w) * self + w * other.
    pub fn blend(&self, other: &Policy, w: f64) -> Policy {
        let mut table = self.0.clone();
        table.zip_mut_with(&other.0, |x, &y| *x = (1.0 - w) * *x + w * y);
        Policy(table)
    }
}

/// Dirichlet(1, ..., 1) draw via normalized exponentials.
pub fn dirichlet_uniform<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Vec<f64> {
    let mut draw: Vec<f64> = (0..dim)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let total: f64 = draw.iter().sum();
    for v in &mut draw {
        *v /= total;
    }
    draw
}
