//! Exact dynamic programming on enumerable MDPs: penalized Bellman fixed
//! points and machine checks of the lower-bound, conservatism-comparison,
//! and safe-improvement guarantees.

mod backup;
mod generator;
mod mdp;
mod solve;
mod theorems;

pub use backup::{
    combo_backup_fixed_point, domain_backup_fixed_point, fixed_mixture_denominator,
    penalized_fixed_point, penalty_table, FixedPoint,
};
pub use generator::{
    optimize_penalized_policy, theorem1_instance, theorem2_instance, theorem3_instance,
    Theorem1Instance, Theorem2Instance, Theorem2Kind, Theorem3Instance, SUITE_ACTIONS,
    SUITE_GAMMA, SUITE_STATES,
};
pub use mdp::{dirichlet_uniform, Policy, TabularError, TabularMdp};
pub use solve::{
    exact_policy_eval, expected_return, occupancy, solve_linear, state_values, Occupancy,
};
pub use theorems::{
    build_tables, check_theorem1, check_theorem2, delta_l, delta_l_assembled,
    penalized_objective, policy_ratios, premise_margins, safety_diagnostic, varpi, xi,
    ErrorConstants, OccupancyTables, PolicyRatios, Theorem1Report, Theorem2Report,
    Theorem3Report, VALUE_TOL,
};
