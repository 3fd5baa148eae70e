//! Orchestration layer for the offline RL engine: configuration, the
//! gen-data/train-model/train-agent/evaluate pipeline, diagnostics, and the
//! tabular bound verifier.

pub mod config;
pub mod diagnostics;
pub mod pipeline;
pub mod verify;
