//! Penalized Bellman fixed points: the adaptive-weight backup
//! Q <- (1-f) T_bar Q + f T_hat Q - lambda (omega - d)/d_beta and its
//! fixed-distribution comparator with penalty lambda (rho - d)/((1-f)d + f rho).

use ndarray::Array2;

use super::mdp::{Policy, TabularError, TabularMdp};

/// eta = (omega - d) / d_beta, with 0/0 treated as zero penalty and a
/// named error when d_beta vanishes but omega != d.
pub fn penalty_table(
    omega: &Array2<f64>,
    d: &Array2<f64>,
    denominator: &Array2<f64>,
) -> Result<Array2<f64>, TabularError> {
    let (s_count, a_count) = omega.dim();
    let mut eta = Array2::zeros((s_count, a_count));
    for s in 0..s_count {
        for a in 0..a_count {
            let num = omega[[s, a]] - d[[s, a]];
            let den = denominator[[s, a]];
            if den <= 0.0 {
                if num.abs() > 0.0 {
                    return Err(TabularError::UndefinedPenalty { s, a });
                }
                continue;
            }
            eta[[s, a]] = num / den;
        }
    }
    Ok(eta)
}

/// The comparator's denominator (1-f) d + f rho.
pub fn fixed_mixture_denominator(d: &Array2<f64>, rho: &Array2<f64>, f: f64) -> Array2<f64> {
    let mut out = d.clone();
    out.zip_mut_with(rho, |x, &y| *x = (1.0 - f) * *x + f * y);
    out
}

#[derive(Debug, Clone)]
pub struct FixedPoint {
    pub q: Array2<f64>,
    pub sweeps: usize,
    /// Largest ratio of successive sup-norm changes observed while the
    /// change was still large relative to the iterate scale (below that,
    /// float rounding dominates); stays <= gamma for a contraction.
    pub max_contraction_ratio: f64,
}

/// Iterates Q <- r_mix - lambda eta + gamma P_mix^pi Q to the fixed point,
/// stopping when the sup-norm change drops to 1e-10.
pub fn penalized_fixed_point(
    m_bar: &TabularMdp,
    m_hat: &TabularMdp,
    policy: &Policy,
    eta: &Array2<f64>,
    f: f64,
    lambda: f64,
) -> Result<FixedPoint, TabularError> {
    policy.validate()?;
    let mixed = m_bar.mix(m_hat, f);
    let (s_count, a_count) = mixed.reward.dim();
    let mut effective_reward = mixed.reward.clone();
    effective_reward.zip_mut_with(eta, |r, &e| *r -= lambda * e);

    let tol = 1e-10;
    let max_sweeps = 200_000;
    let mut q = Array2::<f64>::zeros((s_count, a_count));
    let mut prev_change = f64::INFINITY;
    let mut max_ratio = 0.0_f64;
    for sweep in 0..max_sweeps {
        let mut next = effective_reward.clone();
        for s in 0..s_count {
            for a in 0..a_count {
                let mut boot = 0.0;
                for s2 in 0..s_count {
                    let t = mixed.transition[[s, a, s2]];
                    if t == 0.0 {
                        continue;
                    }
                    let mut v = 0.0;
                    for a2 in 0..a_count {
                        v += policy.prob(s2, a2) * q[[s2, a2]];
                    }
                    boot += t * v;
                }
                next[[s, a]] += mixed.gamma * boot;
            }
        }
        let mut change = 0.0_f64;
        let mut scale = 1.0_f64;
        for (a, b) in next.iter().zip(q.iter()) {
            change = change.max((*a - *b).abs());
            scale = scale.max(a.abs());
        }
        q = next;
        if prev_change.is_finite() && prev_change > 1e-8 * scale && change > 0.0 {
            max_ratio = max_ratio.max(change / prev_change);
        }
        prev_change = change;
        if change <= tol {
            return Ok(FixedPoint {
                q,
                sweeps: sweep + 1,
                max_contraction_ratio: max_ratio,
            });
        }
    }
    Err(TabularError::NoConvergence(max_sweeps))
}

/// Adaptive-weight backup fixed point (penalty (omega - d)/d_beta).
pub fn domain_backup_fixed_point(
    m_bar: &TabularMdp,
    m_hat: &TabularMdp,
    policy: &Policy,
    omega: &Array2<f64>,
    d: &Array2<f64>,
    d_beta: &Array2<f64>,
    f: f64,
    lambda: f64,
) -> Result<FixedPoint, TabularError> {
    let eta = penalty_table(omega, d, d_beta)?;
    penalized_fixed_point(m_bar, m_hat, policy, &eta, f, lambda)
}

/// Fixed-distribution comparator (penalty (rho - d)/((1-f)d + f rho)).
pub fn combo_backup_fixed_point(
    m_bar: &TabularMdp,
    m_hat: &TabularMdp,
    policy: &Policy,
    rho: &Array2<f64>,
    d: &Array2<f64>,
    f: f64,
    lambda: f64,
) -> Result<FixedPoint, TabularError> {
    let denom = fixed_mixture_denominator(d, rho, f);
    let eta = penalty_table(rho, d, &denom)?;
    penalized_fixed_point(m_bar, m_hat, policy, &eta, f, lambda)
}
