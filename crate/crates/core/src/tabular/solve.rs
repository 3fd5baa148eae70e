//! Exact policy evaluation and occupancy measures by direct linear solve.

use ndarray::{Array1, Array2};

use super::mdp::{Policy, TabularError, TabularMdp};

/// Gaussian elimination with partial pivoting. Consumes its inputs.
pub fn solve_linear(mut a: Array2<f64>, mut b: Array1<f64>) -> Result<Array1<f64>, TabularError> {
    let n = b.len();
    assert_eq!(a.dim(), (n, n));
    for col in 0..n {
        let mut pivot = col;
        for row in col + 1..n {
            if a[[row, col]].abs() > a[[pivot, col]].abs() {
                pivot = row;
            }
        }
        if a[[pivot, col]].abs() < 1e-300 {
            return Err(TabularError::Singular);
        }
        if pivot != col {
            for k in 0..n {
                a.swap([pivot, k], [col, k]);
            }
            b.swap(pivot, col);
        }
        let diag = a[[col, col]];
        for row in col + 1..n {
            let factor = a[[row, col]] / diag;
            if factor == 0.0 {
                continue;
            }
            for k in col..n {
                a[[row, k]] -= factor * a[[col, k]];
            }
            b[row] -= factor * b[col];
        }
    }
    let mut x = Array1::zeros(n);
    for row in (0..n).rev() {
        let mut acc = b[row];
        for k in row + 1..n {
            acc -= a[[row, k]] * x[k];
        }
        x[row] = acc / a[[row, row]];
    }
    Ok(x)
}

fn sa_index(a_count: usize, s: usize, a: usize) -> usize {
    s * a_count + a
}

/// Exact Q^pi: solves (I - gamma P^pi) Q = r over the S*A system and checks
/// the residual against 1e-10.
pub fn exact_policy_eval(mdp: &TabularMdp, policy: &Policy) -> Result<Array2<f64>, TabularError> {
    policy.validate()?;
    let (s_count, a_count) = (mdp.n_states, mdp.n_actions);
    let n = s_count * a_count;
    let mut m = Array2::zeros((n, n));
    let mut rhs = Array1::zeros(n);
    for s in 0..s_count {
        for a in 0..a_count {
            let row = sa_index(a_count, s, a);
            m[[row, row]] += 1.0;
            rhs[row] = mdp.reward[[s, a]];
            for s2 in 0..s_count {
                let t = mdp.transition[[s, a, s2]];
                if t == 0.0 {
                    continue;
                }
                for a2 in 0..a_count {
                    m[[row, sa_index(a_count, s2, a2)]] -=
                        mdp.gamma * t * policy.prob(s2, a2);
                }
            }
        }
    }
    let q_flat = solve_linear(m.clone(), rhs.clone())?;
    // residual check on the original system
    let mut residual = 0.0_f64;
    for row in 0..n {
        let mut acc = -rhs[row];
        for k in 0..n {
            acc += m[[row, k]] * q_flat[k];
        }
        residual = residual.max(acc.abs());
    }
    if residual > 1e-10 {
        return Err(TabularError::ResidualTooLarge {
            residual,
            tol: 1e-10,
        });
    }
    let mut q = Array2::zeros((s_count, a_count));
    for s in 0..s_count {
        for a in 0..a_count {
            q[[s, a]] = q_flat[sa_index(a_count, s, a)];
        }
    }
    Ok(q)
}

/// V(s) = sum_a pi(a|s) Q(s, a).
pub fn state_values(q: &Array2<f64>, policy: &Policy) -> Array1<f64> {
    let (s_count, a_count) = q.dim();
    Array1::from_shape_fn(s_count, |s| {
        (0..a_count).map(|a| policy.prob(s, a) * q[[s, a]]).sum()
    })
}

/// Discounted occupancy measures.
#[derive(Debug, Clone)]
pub struct Occupancy {
    /// d^pi(s), sums to 1.
    pub states: Array1<f64>,
    /// d^pi(s, a) = d^pi(s) pi(a|s).
    pub state_actions: Array2<f64>,
}

/// d^pi(s) = (1 - gamma) rho0^T (I - gamma P^pi)^-1, then
/// d^pi(s,a) = d^pi(s) pi(a|s).
pub fn occupancy(mdp: &TabularMdp, policy: &Policy) -> Result<Occupancy, TabularError> {
    policy.validate()?;
    let s_count = mdp.n_states;
    // state-to-state kernel under pi
    let mut p = Array2::<f64>::zeros((s_count, s_count));
    for s in 0..s_count {
        for a in 0..mdp.n_actions {
            let pa = policy.prob(s, a);
            if pa == 0.0 {
                continue;
            }
            for s2 in 0..s_count {
                p[[s, s2]] += pa * mdp.transition[[s, a, s2]];
            }
        }
    }
    // (I - gamma P^T) d = (1 - gamma) rho0
    let mut m = Array2::zeros((s_count, s_count));
    for s in 0..s_count {
        m[[s, s]] += 1.0;
        for s2 in 0..s_count {
            m[[s, s2]] -= mdp.gamma * p[[s2, s]];
        }
    }
    let rhs = mdp.rho0.mapv(|v| (1.0 - mdp.gamma) * v);
    let states = solve_linear(m, rhs)?;
    let mut state_actions = Array2::zeros((s_count, mdp.n_actions));
    for s in 0..s_count {
        for a in 0..mdp.n_actions {
            state_actions[[s, a]] = states[s] * policy.prob(s, a);
        }
    }
    Ok(Occupancy {
        states,
        state_actions,
    })
}

/// J(M, pi) = E_{d^pi}[r] / (1 - gamma).
pub fn expected_return(mdp: &TabularMdp, policy: &Policy) -> Result<f64, TabularError> {
    let occ = occupancy(mdp, policy)?;
    let mut j = 0.0;
    for s in 0..mdp.n_states {
        for a in 0..mdp.n_actions {
            j += occ.state_actions[[s, a]] * mdp.reward[[s, a]];
        }
    }
    Ok(j / (1.0 - mdp.gamma))
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array3};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn single_state_mdp(r: f64, gamma: f64) -> TabularMdp {
        TabularMdp::new(
            Array3::from_elem((1, 1, 1), 1.0),
            array![[r]],
            gamma,
            array![1.0],
        )
        .unwrap()
    }

    #[test]
    fn geometric_series_value() {
        let mdp = single_state_mdp(1.0, 0.9);
        let q = exact_policy_eval(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert!((q[[0, 0]] - 10.0).abs() < 1e-9);
    }

    #[test]
    fn zero_reward_gives_zero_values() {
        let mut rng = ChaCha12Rng::seed_from_u64(3);
        let mut mdp = TabularMdp::random(4, 3, 0.95, &mut rng);
        mdp.reward.fill(0.0);
        let q = exact_policy_eval(&mdp, &Policy::uniform(4, 3)).unwrap();
        assert!(q.iter().all(|&v| v.abs() < 1e-12));
    }

    #[test]
    fn direct_solve_matches_value_iteration() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let mdp = TabularMdp::random(5, 3, 0.9, &mut rng);
        let policy = Policy::random(5, 3, 0.2, &mut rng);
        let q = exact_policy_eval(&mdp, &policy).unwrap();
        // value-iteration oracle
        let mut q_vi = Array2::zeros((5, 3));
        for _ in 0..2000 {
            let mut next = mdp.reward.clone();
            for s in 0..5 {
                for a in 0..3 {
                    let mut boot = 0.0;
                    for s2 in 0..5 {
                        let mut v = 0.0;
                        for a2 in 0..3 {
                            v += policy.prob(s2, a2) * q_vi[[s2, a2]];
                        }
                        boot += mdp.transition[[s, a, s2]] * v;
                    }
                    next[[s, a]] += mdp.gamma * boot;
                }
            }
            q_vi = next;
        }
        for (a, b) in q.iter().zip(q_vi.iter()) {
            assert!((a - b).abs() < 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn absorbing_state_occupancy_is_one() {
        let mdp = single_state_mdp(0.5, 0.9);
        let occ = occupancy(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert!((occ.states[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn deterministic_cycle_splits_evenly() {
        let mut t = Array3::zeros((2, 1, 2));
        t[[0, 0, 1]] = 1.0;
        t[[1, 0, 0]] = 1.0;
        let mdp = TabularMdp::new(t, array![[0.0], [0.0]], 0.9, array![0.5, 0.5]).unwrap();
        let occ = occupancy(&mdp, &Policy::uniform(2, 1)).unwrap();
        assert!((occ.states[0] - 0.5).abs() < 1e-12);
        assert!((occ.states[1] - 0.5).abs() < 1e-12);
    }

    #[test]
    fn occupancy_matches_monte_carlo() {
        let mut rng = ChaCha12Rng::seed_from_u64(11);
        let mdp = TabularMdp::random(4, 2, 0.9, &mut rng);
        let policy = Policy::random(4, 2, 0.3, &mut rng);
        let occ = occupancy(&mdp, &policy).unwrap();

        // sample the discounted visitation: restart with prob 1 - gamma
        let mut counts = vec![0u64; 4];
        let n: u64 = 1_000_000;
        let sample_categorical = |probs: &[f64], rng: &mut ChaCha12Rng| -> usize {
            let u: f64 = rng.random();
            let mut acc = 0.0;
            for (i, &p) in probs.iter().enumerate() {
                acc += p;
                if u < acc {
                    return i;
                }
            }
            probs.len() - 1
        };
        let rho: Vec<f64> = mdp.rho0.to_vec();
        let mut s = sample_categorical(&rho, &mut rng);
        for _ in 0..n {
            counts[s] += 1;
            if rng.random::<f64>() < 1.0 - mdp.gamma {
                s = sample_categorical(&rho, &mut rng);
            } else {
                let row: Vec<f64> = (0..2).map(|a| policy.prob(s, a)).collect();
                let a = sample_categorical(&row, &mut rng);
                let next: Vec<f64> = (0..4).map(|s2| mdp.transition[[s, a, s2]]).collect();
                s = sample_categorical(&next, &mut rng);
            }
        }
        for st in 0..4 {
            let mc = counts[st] as f64 / n as f64;
            assert!(
                (mc - occ.states[st]).abs() < 1e-2,
                "state {st}: mc {mc} vs exact {}",
                occ.states[st]
            );
        }
        let total: f64 = occ.state_actions.sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn expected_return_of_constant_reward() {
        let mdp = single_state_mdp(1.0, 0.9);
        let j = expected_return(&mdp, &Policy::uniform(1, 1)).unwrap();
        assert!((j - 10.0).abs() < 1e-9);
    }
}
