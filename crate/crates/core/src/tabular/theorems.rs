//! Machine-checkable bound diagnostics: the state coefficient xi, the
//! penalty-weight threshold delta_l, the value lower bound, the
//! conservatism comparison against the fixed-distribution comparator, and
//! the safe-improvement margin zeta.

use ndarray::{Array1, Array2};
use serde::Serialize;

use super::backup::{
    combo_backup_fixed_point, domain_backup_fixed_point, penalty_table, FixedPoint,
};
use super::mdp::{Policy, TabularError, TabularMdp};
use super::solve::{exact_policy_eval, expected_return, occupancy, state_values};

/// Exact per-pair error terms between a reference MDP and its learned
/// counterpart, plus user-supplied concentration constants.
#[derive(Debug, Clone, Serialize)]
pub struct ErrorConstants {
    pub c_r: f64,
    pub c_t: f64,
    pub r_max: f64,
    /// |r_M - r_Mhat| per (s, a).
    pub eps_r: Array2<f64>,
    /// Total-variation distance between next-state rows per (s, a).
    pub tv: Array2<f64>,
    /// Dataset visit counts |D(s, a)| (values below 1 mean "unvisited").
    pub counts: Array2<f64>,
}

impl ErrorConstants {
    /// Computes eps_r and TV exactly from the two MDPs.
    pub fn exact(
        m: &TabularMdp,
        m_hat: &TabularMdp,
        c_r: f64,
        c_t: f64,
        counts: Array2<f64>,
    ) -> Self {
        let (s_count, a_count) = m.reward.dim();
        let mut eps_r = Array2::zeros((s_count, a_count));
        let mut tv = Array2::zeros((s_count, a_count));
        for s in 0..s_count {
            for a in 0..a_count {
                eps_r[[s, a]] = (m.reward[[s, a]] - m_hat.reward[[s, a]]).abs();
                let l1: f64 = (0..s_count)
                    .map(|s2| (m.transition[[s, a, s2]] - m_hat.transition[[s, a, s2]]).abs())
                    .sum();
                tv[[s, a]] = 0.5 * l1;
            }
        }
        ErrorConstants {
            c_r,
            c_t,
            r_max: m.r_max(),
            eps_r,
            tv,
            counts,
        }
    }

    /// Combined constant with C_rT * R_max = (1-gamma) C_r + 2 gamma R_max C_T.
    pub fn combined_c_rt(&self, gamma: f64) -> f64 {
        if self.r_max == 0.0 {
            return 0.0;
        }
        ((1.0 - gamma) * self.c_r + 2.0 * gamma * self.r_max * self.c_t) / self.r_max
    }

    /// The sampling-error numerator (1-gamma)C_r + 2 gamma R_max C_T.
    pub fn sampling_numerator(&self, gamma: f64) -> f64 {
        (1.0 - gamma) * self.c_r + 2.0 * gamma * self.r_max * self.c_t
    }
}

/// Occupancy tables entering the bound formulas.
#[derive(Debug, Clone)]
pub struct OccupancyTables {
    pub d_behavior: Array2<f64>,
    pub d_behavior_states: Array1<f64>,
    pub d_model: Array2<f64>,
    pub d_model_states: Array1<f64>,
    pub d_beta: Array2<f64>,
    /// Offline sampling distribution; defaults to the behavior occupancy.
    pub d: Array2<f64>,
}

/// Builds the occupancy tables: the behavior occupancy lives in
/// `behavior_mdp`, the model occupancy of `pi` in `m_hat`.
pub fn build_tables(
    behavior_mdp: &TabularMdp,
    pi_b: &Policy,
    m_hat: &TabularMdp,
    pi: &Policy,
    f: f64,
    d_override: Option<Array2<f64>>,
) -> Result<OccupancyTables, TabularError> {
    let occ_b = occupancy(behavior_mdp, pi_b)?;
    let occ_m = occupancy(m_hat, pi)?;
    let mut d_beta = occ_b.state_actions.clone();
    d_beta.zip_mut_with(&occ_m.state_actions, |x, &y| *x = (1.0 - f) * *x + f * y);
    let d = d_override.unwrap_or_else(|| occ_b.state_actions.clone());
    Ok(OccupancyTables {
        d_behavior: occ_b.state_actions,
        d_behavior_states: occ_b.states,
        d_model: occ_m.state_actions,
        d_model_states: occ_m.states,
        d_beta,
        d,
    })
}

/// Per-state max and min of the behavior/policy probability ratio.
#[derive(Debug, Clone)]
pub struct PolicyRatios {
    pub max_ratio: Array1<f64>,
    pub min_ratio: Array1<f64>,
}

pub fn policy_ratios(pi: &Policy, pi_b: &Policy) -> Result<PolicyRatios, TabularError> {
    let (s_count, a_count) = pi.0.dim();
    let mut max_ratio = Array1::zeros(s_count);
    let mut min_ratio = Array1::zeros(s_count);
    for s in 0..s_count {
        let mut hi = f64::NEG_INFINITY;
        let mut lo = f64::INFINITY;
        for a in 0..a_count {
            let pb = pi_b.prob(s, a);
            let p = pi.prob(s, a);
            if p == 0.0 {
                if pb > 0.0 {
                    return Err(TabularError::ZeroPolicyMass { s, a });
                }
                continue;
            }
            let r = pb / p;
            hi = hi.max(r);
            lo = lo.min(r);
        }
        if !hi.is_finite() {
            hi = 1.0;
            lo = 1.0;
        }
        max_ratio[s] = hi;
        min_ratio[s] = lo;
    }
    Ok(PolicyRatios {
        max_ratio,
        min_ratio,
    })
}

/// The state coefficient
/// xi(s) = [(1-f) d^pi_b(s) max_a(pi_b/pi) + f d^pi_Mhat(s)]
///       / [(1-f) d^pi_b(s) min_a(pi_b/pi) + f d^pi_Mhat(s)], always >= 1.
pub fn xi(tables: &OccupancyTables, ratios: &PolicyRatios, f: f64) -> Array1<f64> {
    let s_count = tables.d_behavior_states.len();
    Array1::from_shape_fn(s_count, |s| {
        let b = tables.d_behavior_states[s];
        let m = tables.d_model_states[s];
        let numer = (1.0 - f) * b * ratios.max_ratio[s] + f * m;
        let denom = (1.0 - f) * b * ratios.min_ratio[s] + f * m;
        if denom <= 0.0 {
            1.0
        } else {
            numer / denom
        }
    })
}

/// Per-state premise margin (xi(s)-1) sum_a d(s,a) / denom_max(s) appearing
/// in delta_l's denominator.
pub fn premise_margins(
    tables: &OccupancyTables,
    ratios: &PolicyRatios,
    xi_values: &Array1<f64>,
    f: f64,
) -> Array1<f64> {
    let (s_count, a_count) = tables.d.dim();
    Array1::from_shape_fn(s_count, |s| {
        let d_sum: f64 = (0..a_count).map(|a| tables.d[[s, a]]).sum();
        let denom_max = (1.0 - f) * tables.d_behavior_states[s] * ratios.max_ratio[s]
            + f * tables.d_model_states[s];
        if denom_max <= 0.0 {
            0.0
        } else {
            (xi_values[s] - 1.0) * d_sum / denom_max
        }
    })
}

/// The penalty-weight threshold delta_l, evaluated as one expression.
pub fn delta_l(
    constants: &ErrorConstants,
    tables: &OccupancyTables,
    ratios: &PolicyRatios,
    xi_values: &Array1<f64>,
    f: f64,
    gamma: f64,
) -> Result<f64, TabularError> {
    let margins = premise_margins(tables, ratios, xi_values, f);
    let min_margin = margins.iter().cloned().fold(f64::INFINITY, f64::min);
    if min_margin <= 0.0 {
        return Err(TabularError::ConditionUnsatisfiable(min_margin));
    }
    let min_count = constants.counts.iter().cloned().fold(f64::INFINITY, f64::min);
    let sampling = (1.0 - f) * constants.sampling_numerator(gamma)
        / ((1.0 - gamma) * min_count.sqrt());
    let max_eps = constants.eps_r.iter().cloned().fold(0.0, f64::max);
    let max_tv = constants.tv.iter().cloned().fold(0.0, f64::max);
    let model = f * (max_eps + 2.0 * gamma * constants.r_max / (1.0 - gamma) * max_tv);
    Ok((sampling + model) / min_margin)
}

/// Independent assembly of delta_l from its sub-terms: per-(s,a) sampling
/// gaps and model gaps are tabulated first and reduced afterwards.
pub fn delta_l_assembled(
    constants: &ErrorConstants,
    tables: &OccupancyTables,
    ratios: &PolicyRatios,
    xi_values: &Array1<f64>,
    f: f64,
    gamma: f64,
) -> Result<f64, TabularError> {
    let (s_count, a_count) = constants.eps_r.dim();
    let c_rt = constants.combined_c_rt(gamma);
    let mut max_delta1 = 0.0_f64;
    let mut max_eps = 0.0_f64;
    let mut max_tv = 0.0_f64;
    for s in 0..s_count {
        for a in 0..a_count {
            let d1 = c_rt * constants.r_max / ((1.0 - gamma) * constants.counts[[s, a]].sqrt());
            max_delta1 = max_delta1.max(d1);
            max_eps = max_eps.max(constants.eps_r[[s, a]]);
            max_tv = max_tv.max(constants.tv[[s, a]]);
        }
    }
    let margins = premise_margins(tables, ratios, xi_values, f);
    let mut min_margin = f64::INFINITY;
    for &m in margins.iter() {
        min_margin = min_margin.min(m);
    }
    if min_margin <= 0.0 {
        return Err(TabularError::ConditionUnsatisfiable(min_margin));
    }
    let numerator =
        (1.0 - f) * max_delta1 + f * (max_eps + 2.0 * gamma * constants.r_max / (1.0 - gamma) * max_tv);
    Ok(numerator / min_margin)
}

pub const VALUE_TOL: f64 = 1e-8;

/// Lower-bound verdicts for the adaptively penalized value function.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem1Report {
    pub xi: Vec<f64>,
    pub delta_l: Option<f64>,
    pub lambda: f64,
    pub lambda_ge_delta: bool,
    pub premise_per_state: Vec<bool>,
    pub premise_all: bool,
    pub v_hat: Vec<f64>,
    pub v_true: Vec<f64>,
    pub lower_bound_per_state: Vec<bool>,
    pub lower_bound_all: bool,
    /// premise (all states) and lambda >= delta_l imply the lower bound.
    pub implication_holds: bool,
    pub fixed_point_sweeps: usize,
    pub max_contraction_ratio: f64,
}

#[allow(clippy::too_many_arguments)]
pub fn check_theorem1(
    m: &TabularMdp,
    m_bar: &TabularMdp,
    m_hat: &TabularMdp,
    pi: &Policy,
    pi_b: &Policy,
    omega: &Array2<f64>,
    d_override: Option<Array2<f64>>,
    f: f64,
    lambda: f64,
    constants: &ErrorConstants,
) -> Result<Theorem1Report, TabularError> {
    let tables = build_tables(m, pi_b, m_hat, pi, f, d_override)?;
    let ratios = policy_ratios(pi, pi_b)?;
    let xi_values = xi(&tables, &ratios, f);
    debug_assert!(xi_values.iter().all(|&x| x >= 1.0 - 1e-12));

    let (s_count, a_count) = tables.d.dim();
    let mut premise_per_state = Vec::with_capacity(s_count);
    for s in 0..s_count {
        let omega_sum: f64 = (0..a_count).map(|a| omega[[s, a]]).sum();
        let d_sum: f64 = (0..a_count).map(|a| tables.d[[s, a]]).sum();
        premise_per_state.push(omega_sum > xi_values[s] * d_sum);
    }
    let premise_all = premise_per_state.iter().all(|&p| p);

    let delta = delta_l(constants, &tables, &ratios, &xi_values, f, m.gamma).ok();
    let lambda_ge_delta = delta.map(|d| lambda >= d).unwrap_or(false);

    let fp = domain_backup_fixed_point(
        m_bar,
        m_hat,
        pi,
        omega,
        &tables.d,
        &tables.d_beta,
        f,
        lambda,
    )?;
    let v_hat = state_values(&fp.q, pi);
    let q_true = exact_policy_eval(m, pi)?;
    let v_true = state_values(&q_true, pi);

    let lower_bound_per_state: Vec<bool> = v_hat
        .iter()
        .zip(v_true.iter())
        .map(|(&vh, &vt)| vh <= vt + VALUE_TOL)
        .collect();
    let lower_bound_all = lower_bound_per_state.iter().all(|&b| b);
    let implication_holds = !(premise_all && lambda_ge_delta) || lower_bound_all;

    Ok(Theorem1Report {
        xi: xi_values.to_vec(),
        delta_l: delta,
        lambda,
        lambda_ge_delta,
        premise_per_state,
        premise_all,
        v_hat: v_hat.to_vec(),
        v_true: v_true.to_vec(),
        lower_bound_per_state,
        lower_bound_all,
        implication_holds,
        fixed_point_sweeps: fp.sweeps,
        max_contraction_ratio: fp.max_contraction_ratio,
    })
}

/// Average-value comparison against the fixed-distribution comparator.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem2Report {
    pub kappa1: f64,
    pub kappa2: f64,
    /// E_d[d^pi_Mhat(s)] >= E_{d,pi}[omega(s,a)]
    pub condition: bool,
    pub condition_lhs: f64,
    pub condition_rhs: f64,
    /// condition implies kappa1 >= kappa2 (equality exactly when the two
    /// penalties coincide, e.g. omega == rho with matched denominators).
    pub holds: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn check_theorem2(
    m_bar: &TabularMdp,
    m_hat: &TabularMdp,
    pi: &Policy,
    omega: &Array2<f64>,
    rho: &Array2<f64>,
    d: &Array2<f64>,
    f: f64,
    lambda: f64,
    eval_states: &Array1<f64>,
) -> Result<Theorem2Report, TabularError> {
    let occ_m = occupancy(m_hat, pi)?;
    let mut d_beta = d.clone();
    d_beta.zip_mut_with(&occ_m.state_actions, |x, &y| *x = (1.0 - f) * *x + f * y);

    let fp1 = domain_backup_fixed_point(m_bar, m_hat, pi, omega, d, &d_beta, f, lambda)?;
    let fp2 = combo_backup_fixed_point(m_bar, m_hat, pi, rho, d, f, lambda)?;

    let expect = |q: &FixedPoint| -> f64 {
        let (s_count, a_count) = q.q.dim();
        let mut acc = 0.0;
        for s in 0..s_count {
            for a in 0..a_count {
                acc += eval_states[s] * pi.prob(s, a) * q.q[[s, a]];
            }
        }
        acc
    };
    let kappa1 = expect(&fp1);
    let kappa2 = expect(&fp2);

    let (s_count, a_count) = omega.dim();
    let mut lhs = 0.0;
    let mut rhs = 0.0;
    for s in 0..s_count {
        lhs += eval_states[s] * occ_m.states[s];
        for a in 0..a_count {
            rhs += eval_states[s] * pi.prob(s, a) * omega[[s, a]];
        }
    }
    let condition = lhs >= rhs;
    let holds = !condition || kappa1 >= kappa2 - 1e-10;
    Ok(Theorem2Report {
        kappa1,
        kappa2,
        condition,
        condition_lhs: lhs,
        condition_rhs: rhs,
        holds,
    })
}

/// Expected penalty under the mixed-model occupancy of `pi`:
/// varpi(pi, f) = E_{d^pi_{M_f}}[(omega - d)/d_beta^pi].
pub fn varpi(
    m_bar: &TabularMdp,
    m_hat: &TabularMdp,
    pi: &Policy,
    omega: &Array2<f64>,
    d: &Array2<f64>,
    f: f64,
) -> Result<f64, TabularError> {
    let m_f = m_bar.mix(m_hat, f);
    let occ_f = occupancy(&m_f, pi)?;
    let occ_hat = occupancy(m_hat, pi)?;
    let mut d_beta = d.clone();
    d_beta.zip_mut_with(&occ_hat.state_actions, |x, &y| *x = (1.0 - f) * *x + f * y);
    let eta = penalty_table(omega, d, &d_beta)?;
    let mut acc = 0.0;
    for (o, e) in occ_f.state_actions.iter().zip(eta.iter()) {
        acc += o * e;
    }
    Ok(acc)
}

/// The penalized policy objective J(M_f, pi) - lambda varpi(pi, f)/(1-gamma)
/// that the improvement bound compares across policies.
pub fn penalized_objective(
    m_bar: &TabularMdp,
    m_hat: &TabularMdp,
    pi: &Policy,
    omega: &Array2<f64>,
    d: &Array2<f64>,
    f: f64,
    lambda: f64,
) -> Result<f64, TabularError> {
    let m_f = m_bar.mix(m_hat, f);
    let j = expected_return(&m_f, pi)?;
    let w = varpi(m_bar, m_hat, pi, omega, d, f)?;
    Ok(j - lambda * w / (1.0 - m_bar.gamma))
}

/// Safe-improvement diagnostic: the zeta margin and the directly computed
/// return difference.
#[derive(Debug, Clone, Serialize)]
pub struct Theorem3Report {
    pub varpi_star: f64,
    pub varpi_behavior: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub mu3: f64,
    pub zeta: f64,
    pub j_star: f64,
    pub j_behavior: f64,
    pub j_diff: f64,
    /// j_diff >= zeta - 1e-8.
    pub holds: bool,
}

#[allow(clippy::too_many_arguments)]
pub fn safety_diagnostic(
    m: &TabularMdp,
    m_bar: &TabularMdp,
    m_hat: &TabularMdp,
    pi_star: &Policy,
    pi_b: &Policy,
    omega: &Array2<f64>,
    d: &Array2<f64>,
    f: f64,
    lambda: f64,
    constants: &ErrorConstants,
) -> Result<Theorem3Report, TabularError> {
    let gamma = m.gamma;
    let varpi_star = varpi(m_bar, m_hat, pi_star, omega, d, f)?;
    let varpi_behavior = varpi(m_bar, m_hat, pi_b, omega, d, f)?;
    let mu1 = lambda / (1.0 - gamma) * (varpi_star - varpi_behavior);

    let occ_star = occupancy(m, pi_star)?;
    let (s_count, a_count) = d.dim();
    let mut sampling_term = 0.0;
    let mut model_term = 0.0;
    for s in 0..s_count {
        for a in 0..a_count {
            let w = occ_star.state_actions[[s, a]];
            sampling_term += w * (constants.c_r + constants.r_max * constants.c_t)
                / constants.counts[[s, a]].sqrt();
            // D(s,a) is the L1 transition distance, i.e. twice the TV
            model_term +=
                w * (constants.eps_r[[s, a]] + constants.r_max * 2.0 * constants.tv[[s, a]]);
        }
    }
    let mu2 = 2.0 * (1.0 - f) / (1.0 - gamma) * sampling_term;
    let mu3 = 2.0 * f / (1.0 - gamma) * model_term;
    let zeta = mu1 - mu2 - mu3;

    let j_star = expected_return(m, pi_star)?;
    let j_behavior = expected_return(m, pi_b)?;
    let j_diff = j_star - j_behavior;
    Ok(Theorem3Report {
        varpi_star,
        varpi_behavior,
        mu1,
        mu2,
        mu3,
        zeta,
        j_star,
        j_behavior,
        j_diff,
        holds: j_diff >= zeta - VALUE_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha12Rng;

    fn setup(seed: u64) -> (TabularMdp, Policy, Policy) {
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let m = TabularMdp::random(5, 3, 0.9, &mut rng);
        let pi = Policy::random(5, 3, 0.3, &mut rng);
        let pi_b = Policy::random(5, 3, 0.3, &mut rng);
        (m, pi, pi_b)
    }

    #[test]
    fn xi_is_one_when_policies_match() {
        let (m, pi, _) = setup(0);
        let tables = build_tables(&m, &pi, &m, &pi, 0.5, None).unwrap();
        let ratios = policy_ratios(&pi, &pi).unwrap();
        let x = xi(&tables, &ratios, 0.5);
        for &v in x.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn xi_is_one_with_full_model_weight() {
        let (m, pi, pi_b) = setup(1);
        let tables = build_tables(&m, &pi_b, &m, &pi, 1.0, None).unwrap();
        let ratios = policy_ratios(&pi, &pi_b).unwrap();
        let x = xi(&tables, &ratios, 1.0);
        for &v in x.iter() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn xi_two_action_arithmetic() {
        // pi_b/pi in {2, 0.5} with f = 0 -> xi = 2 / 0.5 = 4
        use ndarray::{array, Array3};
        let t = Array3::from_elem((1, 2, 1), 1.0);
        let m = TabularMdp::new(t, array![[0.0, 0.0]], 0.9, array![1.0]).unwrap();
        let pi = Policy(array![[1.0 / 3.0, 2.0 / 3.0]]);
        let pi_b = Policy(array![[2.0 / 3.0, 1.0 / 3.0]]);
        let tables = build_tables(&m, &pi_b, &m, &pi, 0.0, None).unwrap();
        let ratios = policy_ratios(&pi, &pi_b).unwrap();
        let x = xi(&tables, &ratios, 0.0);
        assert!((x[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn delta_l_zero_for_matching_models() {
        let (m, pi, pi_b) = setup(2);
        let tables = build_tables(&m, &pi_b, &m, &pi, 0.5, None).unwrap();
        let ratios = policy_ratios(&pi, &pi_b).unwrap();
        let x = xi(&tables, &ratios, 0.5);
        let constants =
            ErrorConstants::exact(&m, &m, 0.0, 0.0, Array2::from_elem((5, 3), 100.0));
        let d = delta_l(&constants, &tables, &ratios, &x, 0.5, m.gamma).unwrap();
        assert!(d.abs() < 1e-15, "delta_l {d}");
    }

    #[test]
    fn delta_l_sampling_only_scaling() {
        // f = 0: delta_l is proportional to the sampling numerator over
        // sqrt(min |D|)
        let (m, pi, pi_b) = setup(3);
        let tables = build_tables(&m, &pi_b, &m, &pi, 0.0, None).unwrap();
        let ratios = policy_ratios(&pi, &pi_b).unwrap();
        let x = xi(&tables, &ratios, 0.0);
        let mk = |counts: f64, c_r: f64| {
            let constants =
                ErrorConstants::exact(&m, &m, c_r, 0.0, Array2::from_elem((5, 3), counts));
            delta_l(&constants, &tables, &ratios, &x, 0.0, m.gamma).unwrap()
        };
        let base = mk(100.0, 1.0);
        assert!(base > 0.0);
        // doubling C_r doubles it; 4x the counts halves it
        assert!((mk(100.0, 2.0) / base - 2.0).abs() < 1e-9);
        assert!((mk(400.0, 1.0) / base - 0.5).abs() < 1e-9);
    }

    #[test]
    fn delta_l_paths_agree() {
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        for seed in 0..20 {
            let (m, pi, pi_b) = setup(seed + 100);
            let mut m_hat = m.clone();
            for v in m_hat.reward.iter_mut() {
                *v += rng.random_range(-0.1..0.1);
            }
            let tables = build_tables(&m, &pi_b, &m_hat, &pi, 0.5, None).unwrap();
            let ratios = policy_ratios(&pi, &pi_b).unwrap();
            let x = xi(&tables, &ratios, 0.5);
            let counts = Array2::from_shape_fn((5, 3), |_| rng.random_range(10.0..500.0));
            let constants = ErrorConstants::exact(&m, &m_hat, 0.7, 0.3, counts);
            let a = delta_l(&constants, &tables, &ratios, &x, 0.5, m.gamma).unwrap();
            let b = delta_l_assembled(&constants, &tables, &ratios, &x, 0.5, m.gamma).unwrap();
            assert!((a - b).abs() < 1e-12, "paths disagree: {a} vs {b}");
        }
    }

    #[test]
    fn unsatisfiable_margin_is_reported() {
        // pi == pi_b makes every xi(s) = 1, so the margin is zero
        let (m, pi, _) = setup(5);
        let tables = build_tables(&m, &pi, &m, &pi, 0.5, None).unwrap();
        let ratios = policy_ratios(&pi, &pi).unwrap();
        let x = xi(&tables, &ratios, 0.5);
        let constants = ErrorConstants::exact(&m, &m, 1.0, 1.0, Array2::from_elem((5, 3), 10.0));
        assert!(matches!(
            delta_l(&constants, &tables, &ratios, &x, 0.5, m.gamma),
            Err(TabularError::ConditionUnsatisfiable(_))
        ));
    }

    #[test]
    fn theorem1_no_penalty_no_error_gives_equality() {
        // omega = d, M_bar = M_hat = M: V_hat = V exactly
        let (m, pi, pi_b) = setup(6);
        let tables = build_tables(&m, &pi_b, &m, &pi, 0.5, None).unwrap();
        let omega = tables.d.clone();
        let constants = ErrorConstants::exact(&m, &m, 0.0, 0.0, Array2::from_elem((5, 3), 50.0));
        let report =
            check_theorem1(&m, &m, &m, &pi, &pi_b, &omega, None, 0.5, 7.0, &constants).unwrap();
        for (vh, vt) in report.v_hat.iter().zip(report.v_true.iter()) {
            assert!((vh - vt).abs() < 1e-7, "{vh} vs {vt}");
        }
        assert!(report.lower_bound_all);
        assert!(report.implication_holds);
    }

    #[test]
    fn theorem2_equal_distributions_give_equal_kappas() {
        let mut rng = ChaCha12Rng::seed_from_u64(7);
        let m_bar = TabularMdp::random(5, 3, 0.9, &mut rng);
        let m_hat = TabularMdp::random(5, 3, 0.9, &mut rng);
        let pi = Policy::random(5, 3, 0.3, &mut rng);
        let pi_b = Policy::random(5, 3, 0.3, &mut rng);
        let occ_b = occupancy(&m_bar, &pi_b).unwrap();
        let occ_m = occupancy(&m_hat, &pi).unwrap();
        let d = occ_b.state_actions;
        let rho = occ_m.state_actions.clone();
        let omega = rho.clone();
        let eval = occ_b.states;
        let report =
            check_theorem2(&m_bar, &m_hat, &pi, &omega, &rho, &d, 0.5, 2.0, &eval).unwrap();
        assert!(
            (report.kappa1 - report.kappa2).abs() <= 1e-10,
            "kappa gap {}",
            report.kappa1 - report.kappa2
        );
        assert!(report.holds);
    }

    #[test]
    fn theorem3_identical_policies_have_zero_mu1_and_j_diff() {
        let (m, _, pi_b) = setup(8);
        let mut rng = ChaCha12Rng::seed_from_u64(9);
        let omega = {
            let raw = Array2::from_shape_fn((5, 3), |_| rng.random_range(0.01..1.0));
            let total = raw.sum();
            raw.mapv(|v| v / total)
        };
        let occ_b = occupancy(&m, &pi_b).unwrap();
        let constants = ErrorConstants::exact(&m, &m, 0.0, 0.0, Array2::from_elem((5, 3), 30.0));
        let report = safety_diagnostic(
            &m,
            &m,
            &m,
            &pi_b,
            &pi_b,
            &omega,
            &occ_b.state_actions,
            0.5,
            2.0,
            &constants,
        )
        .unwrap();
        assert!(report.mu1.abs() < 1e-12);
        assert!(report.j_diff.abs() < 1e-12);
        assert!(report.mu2.abs() < 1e-12 && report.mu3.abs() < 1e-12);
        assert_eq!(report.zeta, report.mu1 - report.mu2 - report.mu3);
        assert!(report.holds);
    }
}
