//! Model-based offline reinforcement learning with adaptive,
//! discriminator-weighted conservative value estimation, plus an exact
//! tabular solver that machine-checks the algorithm's bounds.

pub mod agent;
pub mod dataset;
pub mod grad_check;
pub mod ensemble;
pub mod nn;
pub mod ratio;
pub mod tabular;
pub mod toy;
