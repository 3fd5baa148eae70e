//! Bound verification driver: runs the tabular property suites over fresh
//! random instances and emits one JSON line per instance with premise flags
//! and numeric margins.

use std::io::Write;

use midl_core::tabular::{
    check_theorem1, check_theorem2, safety_diagnostic, theorem1_instance, theorem2_instance,
    theorem3_instance, Theorem2Kind,
};
use serde::Serialize;

use crate::pipeline::StageError;

const STAGE: &str = "verify";

#[derive(Serialize)]
struct LowerBoundLine {
    theorem: u8,
    instance_seed: u64,
    family: &'static str,
    premise_all: bool,
    lambda: f64,
    delta_l: Option<f64>,
    lower_bound_all: bool,
    implication_holds: bool,
    /// max over states of v_hat - v_true (negative when safely below).
    max_gap: f64,
}

#[derive(Serialize)]
struct ConservatismLine {
    theorem: u8,
    instance_seed: u64,
    kind: &'static str,
    condition: bool,
    kappa1: f64,
    kappa2: f64,
    margin: f64,
    holds: bool,
}

#[derive(Serialize)]
struct SafetyLine {
    theorem: u8,
    instance_seed: u64,
    zeta: f64,
    j_diff: f64,
    margin: f64,
    holds: bool,
}

/// Runs `instances` checks of the chosen theorem; returns how many held.
pub fn run_verify(
    theorem: u8,
    instances: usize,
    seed: u64,
    out: &mut dyn Write,
) -> Result<usize, StageError> {
    let mut passed = 0;
    for k in 0..instances {
        let instance_seed = seed.wrapping_add(k as u64);
        let ok = match theorem {
            1 => {
                // alternate the reward-only and perturbed-dynamics families
                let (family, tv) = if k % 3 == 2 {
                    ("dynamics", 0.01)
                } else {
                    ("reward", 0.0)
                };
                let inst =
                    theorem1_instance(instance_seed, tv).map_err(|e| StageError::new(STAGE, e))?;
                let report = check_theorem1(
                    &inst.m,
                    &inst.m_bar,
                    &inst.m_hat,
                    &inst.pi,
                    &inst.pi_b,
                    &inst.omega,
                    Some(inst.d.clone()),
                    inst.f,
                    inst.lambda,
                    &inst.constants,
                )
                .map_err(|e| StageError::new(STAGE, e))?;
                let max_gap = report
                    .v_hat
                    .iter()
                    .zip(report.v_true.iter())
                    .map(|(vh, vt)| vh - vt)
                    .fold(f64::NEG_INFINITY, f64::max);
                let line = LowerBoundLine {
                    theorem: 1,
                    instance_seed,
                    family,
                    premise_all: report.premise_all,
                    lambda: report.lambda,
                    delta_l: report.delta_l,
                    lower_bound_all: report.lower_bound_all,
                    implication_holds: report.implication_holds,
                    max_gap,
                };
                writeln!(out, "{}", serde_json::to_string(&line).unwrap())
                    .map_err(|e| StageError::new(STAGE, e))?;
                report.premise_all && report.lambda_ge_delta && report.lower_bound_all
            }
            2 => {
                let kind = match k % 3 {
                    0 => Theorem2Kind::ConditionHolds,
                    1 => Theorem2Kind::Identical,
                    _ => Theorem2Kind::ConditionFails,
                };
                let inst = theorem2_instance(instance_seed, kind)
                    .map_err(|e| StageError::new(STAGE, e))?;
                let report = check_theorem2(
                    &inst.m_bar,
                    &inst.m_hat,
                    &inst.pi,
                    &inst.omega,
                    &inst.rho,
                    &inst.d,
                    inst.f,
                    inst.lambda,
                    &inst.eval_states,
                )
                .map_err(|e| StageError::new(STAGE, e))?;
                let ok = match kind {
                    Theorem2Kind::ConditionHolds => {
                        report.condition && report.kappa1 > report.kappa2
                    }
                    Theorem2Kind::Identical => (report.kappa1 - report.kappa2).abs() <= 1e-10,
                    Theorem2Kind::ConditionFails => !report.condition,
                };
                let line = ConservatismLine {
                    theorem: 2,
                    instance_seed,
                    kind: match kind {
                        Theorem2Kind::ConditionHolds => "condition-holds",
                        Theorem2Kind::Identical => "identical",
                        Theorem2Kind::ConditionFails => "condition-fails",
                    },
                    condition: report.condition,
                    kappa1: report.kappa1,
                    kappa2: report.kappa2,
                    margin: report.kappa1 - report.kappa2,
                    holds: report.holds,
                };
                writeln!(out, "{}", serde_json::to_string(&line).unwrap())
                    .map_err(|e| StageError::new(STAGE, e))?;
                ok
            }
            3 => {
                let inst =
                    theorem3_instance(instance_seed).map_err(|e| StageError::new(STAGE, e))?;
                let report = safety_diagnostic(
                    &inst.m,
                    &inst.m_bar,
                    &inst.m_hat,
                    &inst.pi_star,
                    &inst.pi_b,
                    &inst.omega,
                    &inst.d,
                    inst.f,
                    inst.lambda,
                    &inst.constants,
                )
                .map_err(|e| StageError::new(STAGE, e))?;
                let line = SafetyLine {
                    theorem: 3,
                    instance_seed,
                    zeta: report.zeta,
                    j_diff: report.j_diff,
                    margin: report.j_diff - report.zeta,
                    holds: report.holds,
                };
                writeln!(out, "{}", serde_json::to_string(&line).unwrap())
                    .map_err(|e| StageError::new(STAGE, e))?;
                report.holds
            }
            other => {
                return Err(StageError::new(
                    STAGE,
                    format!("theorem must be 1, 2, or 3, got {other}"),
                ))
            }
        };
        if ok {
            passed += 1;
        }
    }
    Ok(passed)
}
