//! Uplift modeling with continuous treatments.
//!
//! The pipeline has two halves. The prediction half simulates
//! semi-synthetic dose-response data ([`datagen`]) and fits conditional
//! average dose-response estimators ([`estimators`]) whose output is a
//! discretized matrix of dose effects. The optimization half turns that
//! matrix into a dose-allocation policy under a budget, optional group
//! fairness constraints and per-entity benefits ([`alloc`], backed by the
//! simplex in [`lpcore`]). [`metrics`] scores policies against the known
//! ground truth and [`experiments`] wires everything into reproducible runs.

pub mod alloc;
pub mod config;
pub mod datagen;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod lpcore;
pub mod metrics;

pub use alloc::{
    AllocationProblem, CostMatrix, Fairness, Policy, SolveReport, SolveStatus, Solver,
};
pub use datagen::{Dataset, GenConfig, GroundTruth};
pub use error::{Error, Result};
pub use estimators::{CadeMatrix, DoseResponse, Estimator, RfConfig};
