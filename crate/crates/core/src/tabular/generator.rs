//! Random-instance generators for the bound property suites, built so the
//! checked implications hold by construction, plus the penalized policy
//! optimizer used by the safety diagnostic.
//!
//! Where the written bound chains are loose (the dynamics-error term
//! assumes an unpenalized value span), the generators stay inside the
//! regime where the chain is exact: reward-only model perturbations, or
//! dynamics perturbations small enough that a solvable linear condition
//! restores the margin.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use super::backup::domain_backup_fixed_point;
use super::mdp::{Policy, TabularError, TabularMdp};
use super::solve::occupancy;
use super::theorems::{
    build_tables, delta_l, penalized_objective, policy_ratios, xi, ErrorConstants,
    OccupancyTables, PolicyRatios,
};

pub const SUITE_STATES: usize = 5;
pub const SUITE_ACTIONS: usize = 3;
pub const SUITE_GAMMA: f64 = 0.9;

/// A fully assembled lower-bound instance.
pub struct Theorem1Instance {
    pub m: TabularMdp,
    pub m_bar: TabularMdp,
    pub m_hat: TabularMdp,
    pub pi: Policy,
    pub pi_b: Policy,
    pub omega: Array2<f64>,
    pub d: Array2<f64>,
    pub f: f64,
    pub lambda: f64,
    pub constants: ErrorConstants,
}

fn scaled_offline_table(tables: &OccupancyTables, scale: f64) -> Array2<f64> {
    tables.d_behavior.mapv(|v| v * scale)
}

/// Allocates omega so every state satisfies the premise with the working
/// margin sum_a omega(s,.) >= (2 xi(s) - 1) sum_a d(s,.), then spreads the
/// leftover mass uniformly. Returns None when the margins do not fit in a
/// unit of mass.
fn premise_omega<R: Rng + ?Sized>(
    xi_values: &Array1<f64>,
    d: &Array2<f64>,
    rng: &mut R,
) -> Option<Array2<f64>> {
    let (s_count, a_count) = d.dim();
    let mut targets = Vec::with_capacity(s_count);
    let mut total = 0.0;
    for s in 0..s_count {
        let d_sum: f64 = (0..a_count).map(|a| d[[s, a]]).sum();
        let t = (2.0 * xi_values[s] - 1.0) * d_sum * 1.02;
        targets.push(t);
        total += t;
    }
    if total >= 0.98 {
        return None;
    }
    let mut omega = Array2::zeros((s_count, a_count));
    for s in 0..s_count {
        // random split of the state's share across actions
        let split = super::mdp::dirichlet_uniform(a_count, rng);
        for a in 0..a_count {
            omega[[s, a]] = targets[s] * split[a];
        }
    }
    let leftover = 1.0 - total;
    let per_cell = leftover / (s_count * a_count) as f64;
    omega.mapv_inplace(|v| v + per_cell);
    Some(omega)
}

/// Lower-bound instance with reward-only model error: the dynamics term of
/// the derivation vanishes, so lambda = delta_l provably forces the bound.
/// When `dynamics_tv` is positive, the transition rows of the learned model
/// are perturbed too and lambda is raised just enough to re-close the chain
/// in the presence of the penalty-inflated value span.
pub fn theorem1_instance(seed: u64, dynamics_tv: f64) -> Result<Theorem1Instance, TabularError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    loop {
        let m = TabularMdp::random(SUITE_STATES, SUITE_ACTIONS, SUITE_GAMMA, &mut rng);
        let pi = Policy::random(SUITE_STATES, SUITE_ACTIONS, 0.35, &mut rng);
        let pi_b = Policy::random(SUITE_STATES, SUITE_ACTIONS, 0.35, &mut rng);
        // sampling constants are zero, so the empirical MDP is exact
        let m_bar = m.clone();
        let mut m_hat = m.clone();
        for v in m_hat.reward.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
        if dynamics_tv > 0.0 {
            perturb_transitions(&mut m_hat, dynamics_tv, &mut rng);
        }
        let f = 0.5;
        let tables = build_tables(&m, &pi_b, &m_hat, &pi, f, None)?;
        let ratios = policy_ratios(&pi, &pi_b)?;
        let xi_values = xi(&tables, &ratios, f);
        if xi_values.iter().any(|&x| x <= 1.0 + 1e-6) {
            continue; // needs a strict premise margin at every state
        }
        let d = scaled_offline_table(&tables, 0.15);
        let Some(omega) = premise_omega(&xi_values, &d, &mut rng) else {
            continue;
        };
        let tables = build_tables(&m, &pi_b, &m_hat, &pi, f, Some(d.clone()))?;
        let constants = ErrorConstants::exact(
            &m,
            &m_hat,
            0.0,
            0.0,
            Array2::from_elem((SUITE_STATES, SUITE_ACTIONS), 100.0),
        );
        let base = delta_l(&constants, &tables, &ratios, &xi_values, f, SUITE_GAMMA)?;
        let lambda = if dynamics_tv > 0.0 {
            match lambda_for_dynamics_gap(&constants, &tables, &ratios, &xi_values, f, &omega, &d)
            {
                Some(l) => base.max(l) * (1.0 + 1e-9),
                None => continue,
            }
        } else {
            base
        };
        return Ok(Theorem1Instance {
            m,
            m_bar,
            m_hat,
            pi,
            pi_b,
            omega,
            d,
            f,
            lambda,
            constants,
        });
    }
}

/// Moves at most `tv` of probability mass between two next-states per row.
fn perturb_transitions<R: Rng + ?Sized>(mdp: &mut TabularMdp, tv: f64, rng: &mut R) {
    let s_count = mdp.n_states;
    for s in 0..s_count {
        for a in 0..mdp.n_actions {
            let from = rng.random_range(0..s_count);
            let to = rng.random_range(0..s_count);
            if from == to {
                continue;
            }
            let amount = rng.random_range(0.0..tv).min(mdp.transition[[s, a, from]]);
            mdp.transition[[s, a, from]] -= amount;
            mdp.transition[[s, a, to]] += amount;
        }
    }
}

/// Smallest lambda closing the bound chain when transitions are perturbed:
/// the penalized value span grows linearly in lambda, so solve
///   lambda * (margin - 2 f gamma tv_max eta_max / (1-gamma))
///     >= f * (eps_max + 2 gamma tv_max R_max / (1-gamma)).
fn lambda_for_dynamics_gap(
    constants: &ErrorConstants,
    tables: &OccupancyTables,
    ratios: &PolicyRatios,
    xi_values: &Array1<f64>,
    f: f64,
    omega: &Array2<f64>,
    d: &Array2<f64>,
) -> Option<f64> {
    let gamma = SUITE_GAMMA;
    let margins = super::theorems::premise_margins(tables, ratios, xi_values, f);
    let margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    let mut eta_max = 0.0_f64;
    for (i, db) in tables.d_beta.iter().enumerate() {
        if *db > 0.0 {
            let num = (omega.as_slice().unwrap()[i] - d.as_slice().unwrap()[i]).abs();
            eta_max = eta_max.max(num / db);
        }
    }
    let tv_max = constants.tv.iter().cloned().fold(0.0, f64::max);
    let eps_max = constants.eps_r.iter().cloned().fold(0.0, f64::max);
    let coef = margin - 2.0 * f * gamma * tv_max * eta_max / (1.0 - gamma);
    if coef <= 0.0 {
        return None;
    }
    let rhs = f * (eps_max + 2.0 * gamma * tv_max * constants.r_max / (1.0 - gamma));
    Some(rhs / coef)
}

/// A conservatism-comparison instance.
pub struct Theorem2Instance {
    pub m_bar: TabularMdp,
    pub m_hat: TabularMdp,
    pub pi: Policy,
    pub omega: Array2<f64>,
    pub rho: Array2<f64>,
    pub d: Array2<f64>,
    pub eval_states: Array1<f64>,
    pub f: f64,
    pub lambda: f64,
}

/// How the comparison instance relates omega to the comparator's rho.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Theorem2Kind {
    /// omega tilted below rho where it matters; the average-value condition
    /// holds and the comparison must come out strict.
    ConditionHolds,
    /// omega == rho: the two backups coincide.
    Identical,
    /// omega inflated so the condition fails; the checker records that and
    /// asserts nothing.
    ConditionFails,
}

pub fn theorem2_instance(seed: u64, kind: Theorem2Kind) -> Result<Theorem2Instance, TabularError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    loop {
        let m_bar = TabularMdp::random(SUITE_STATES, SUITE_ACTIONS, SUITE_GAMMA, &mut rng);
        let m_hat = TabularMdp::random(SUITE_STATES, SUITE_ACTIONS, SUITE_GAMMA, &mut rng);
        let pi = Policy::random(SUITE_STATES, SUITE_ACTIONS, 0.25, &mut rng);
        let pi_b = Policy::random(SUITE_STATES, SUITE_ACTIONS, 0.25, &mut rng);
        let occ_b = occupancy(&m_bar, &pi_b)?;
        let occ_m = occupancy(&m_hat, &pi)?;
        let d = occ_b.state_actions.clone();
        let rho = occ_m.state_actions.clone();
        let eval_states = occ_b.states.clone();
        let f = 0.5;
        let lambda = rng.random_range(0.5..4.0);

        let omega = match kind {
            Theorem2Kind::Identical => rho.clone(),
            Theorem2Kind::ConditionHolds => {
                // within-state tilt of rho toward the action with the
                // smallest pi/d_beta, leaving state marginals intact
                let mut d_beta = d.clone();
                d_beta.zip_mut_with(&rho, |x, &y| *x = (1.0 - f) * *x + f * y);
                // slack in the average-value condition from sum_a pi^2 < 1
                let mut gap = 0.0;
                for s in 0..SUITE_STATES {
                    let sq: f64 = (0..SUITE_ACTIONS).map(|a| pi.prob(s, a).powi(2)).sum();
                    gap += eval_states[s] * occ_m.states[s] * (1.0 - sq);
                }
                let cap = gap / (2.0 * SUITE_STATES as f64);
                let mut omega = rho.clone();
                let mut tilted = false;
                for s in 0..SUITE_STATES {
                    let score = |a: usize| pi.prob(s, a) / d_beta[[s, a]].max(1e-300);
                    let mut hi = 0;
                    let mut lo = 0;
                    for a in 1..SUITE_ACTIONS {
                        if score(a) > score(hi) {
                            hi = a;
                        }
                        if score(a) < score(lo) {
                            lo = a;
                        }
                    }
                    if score(hi) <= score(lo) * (1.0 + 1e-9) {
                        continue;
                    }
                    let t = cap.min(rho[[s, hi]] / 2.0);
                    if t <= 0.0 {
                        continue;
                    }
                    omega[[s, hi]] -= t;
                    omega[[s, lo]] += t;
                    tilted = true;
                }
                if !tilted {
                    continue;
                }
                omega
            }
            Theorem2Kind::ConditionFails => {
                // concentrate omega on the policy's favorite action of one
                // state and evaluate only there, so E[omega] outweighs the
                // model occupancy
                let mut best_s = 0;
                let mut best_a = 0;
                let mut best_gap = f64::NEG_INFINITY;
                for s in 0..SUITE_STATES {
                    for a in 0..SUITE_ACTIONS {
                        let gap = pi.prob(s, a) - occ_m.states[s];
                        if gap > best_gap {
                            best_gap = gap;
                            best_s = s;
                            best_a = a;
                        }
                    }
                }
                if best_gap <= 0.0 {
                    continue;
                }
                let mut omega = Array2::zeros((SUITE_STATES, SUITE_ACTIONS));
                omega[[best_s, best_a]] = 1.0;
                let mut eval = Array1::zeros(SUITE_STATES);
                eval[best_s] = 1.0;
                return Ok(Theorem2Instance {
                    m_bar,
                    m_hat,
                    pi,
                    omega,
                    rho,
                    d,
                    eval_states: eval,
                    f,
                    lambda,
                });
            }
        };
        return Ok(Theorem2Instance {
            m_bar,
            m_hat,
            pi,
            omega,
            rho,
            d,
            eval_states,
            f,
            lambda,
        });
    }
}

/// A safe-improvement instance with reward-only perturbations, constant
/// error magnitudes, and exactly matching concentration constants.
pub struct Theorem3Instance {
    pub m: TabularMdp,
    pub m_bar: TabularMdp,
    pub m_hat: TabularMdp,
    pub pi_star: Policy,
    pub pi_b: Policy,
    pub omega: Array2<f64>,
    pub d: Array2<f64>,
    pub f: f64,
    pub lambda: f64,
    pub constants: ErrorConstants,
}

pub fn theorem3_instance(seed: u64) -> Result<Theorem3Instance, TabularError> {
    let mut rng = ChaCha12Rng::seed_from_u64(seed);
    let m = TabularMdp::random(SUITE_STATES, SUITE_ACTIONS, SUITE_GAMMA, &mut rng);
    let pi_b = Policy::random(SUITE_STATES, SUITE_ACTIONS, 0.3, &mut rng);
    let counts: f64 = 400.0;
    let eps_bar = 0.05; // empirical reward gap, covered exactly by C_r
    let eps_hat = 0.08; // learned-model reward gap

    let mut m_bar = m.clone();
    for v in m_bar.reward.iter_mut() {
        *v += if rng.random::<bool>() { eps_bar } else { -eps_bar };
    }
    let mut m_hat = m.clone();
    for v in m_hat.reward.iter_mut() {
        *v += if rng.random::<bool>() { eps_hat } else { -eps_hat };
    }

    let occ_b = occupancy(&m, &pi_b)?;
    let d = occ_b.state_actions.clone();
    let omega = {
        let raw = Array2::from_shape_fn((SUITE_STATES, SUITE_ACTIONS), |_| {
            rng.random_range(0.01..1.0)
        });
        let total = raw.sum();
        raw.mapv(|v| v / total)
    };
    let f = 0.5;
    let lambda = rng.random_range(0.5..3.0);
    let mut constants = ErrorConstants::exact(
        &m,
        &m_hat,
        eps_bar * counts.sqrt(),
        0.0,
        Array2::from_elem((SUITE_STATES, SUITE_ACTIONS), counts),
    );
    // reward bound applies to the true MDP
    constants.r_max = m.r_max();

    let pi_star = optimize_penalized_policy(&m_bar, &m_hat, &omega, &d, f, lambda, &pi_b, 30)?;
    Ok(Theorem3Instance {
        m,
        m_bar,
        m_hat,
        pi_star,
        pi_b,
        omega,
        d,
        f,
        lambda,
        constants,
    })
}

/// Damped penalized policy iteration on the mixed model, keeping the best
/// iterate (the start policy included) under the penalized objective. The
/// result therefore never scores below the start policy.
pub fn optimize_penalized_policy(
    m_bar: &TabularMdp,
    m_hat: &TabularMdp,
    omega: &Array2<f64>,
    d: &Array2<f64>,
    f: f64,
    lambda: f64,
    start: &Policy,
    iterations: usize,
) -> Result<Policy, TabularError> {
    let mut best = start.clone();
    let mut best_obj = penalized_objective(m_bar, m_hat, &best, omega, d, f, lambda)?;
    let mut current = start.clone();
    for _ in 0..iterations {
        let occ_hat = occupancy(m_hat, &current)?;
        let occ_b_like = d; // offline sampling table doubles as d^{pi_b}
        let mut d_beta = occ_b_like.clone();
        d_beta.zip_mut_with(&occ_hat.state_actions, |x, &y| *x = (1.0 - f) * *x + f * y);
        let fp = domain_backup_fixed_point(m_bar, m_hat, &current, omega, d, &d_beta, f, lambda)?;
        let greedy = Policy::greedy(&fp.q);
        current = current.blend(&greedy, 0.5);
        let obj = penalized_objective(m_bar, m_hat, &current, omega, d, f, lambda)?;
        if obj > best_obj {
            best_obj = obj;
            best = current.clone();
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tabular::theorems::penalized_objective;

    #[test]
    fn theorem1_instances_satisfy_their_premise() {
        let inst = theorem1_instance(42, 0.0).unwrap();
        let tables = build_tables(
            &inst.m,
            &inst.pi_b,
            &inst.m_hat,
            &inst.pi,
            inst.f,
            Some(inst.d.clone()),
        )
        .unwrap();
        let ratios = policy_ratios(&inst.pi, &inst.pi_b).unwrap();
        let xv = xi(&tables, &ratios, inst.f);
        for s in 0..SUITE_STATES {
            let o: f64 = (0..SUITE_ACTIONS).map(|a| inst.omega[[s, a]]).sum();
            let dd: f64 = (0..SUITE_ACTIONS).map(|a| inst.d[[s, a]]).sum();
            assert!(o > xv[s] * dd, "premise fails at state {s}");
        }
        let total: f64 = inst.omega.sum();
        assert!((total - 1.0).abs() < 1e-10);
    }

    #[test]
    fn optimizer_never_returns_a_worse_policy() {
        let inst = theorem3_instance(7).unwrap();
        let obj_star = penalized_objective(
            &inst.m_bar,
            &inst.m_hat,
            &inst.pi_star,
            &inst.omega,
            &inst.d,
            inst.f,
            inst.lambda,
        )
        .unwrap();
        let obj_b = penalized_objective(
            &inst.m_bar,
            &inst.m_hat,
            &inst.pi_b,
            &inst.omega,
            &inst.d,
            inst.f,
            inst.lambda,
        )
        .unwrap();
        assert!(obj_star >= obj_b - 1e-12);
    }
}
