//! Semi-synthetic continuous-treatment data.
//!
//! Covariates come from a 25-column table (the IHDP layout, or a synthetic
//! stand-in). Doses and outcomes are simulated from closed-form response
//! surfaces so that the true dose-response of every row is known.
//!
//! Feature indices in the response formulas are 1-based in the literature;
//! everything here is 0-based. The mapping is:
//!
//! | set       | 1-based              | 0-based            |
//! |-----------|----------------------|--------------------|
//! | continuous| 1, 2, 3, 5, 6        | 0, 1, 2, 4, 5      |
//! | binary 1  | 4, 7, 8, ..., 15     | 3, 6, 7, ..., 14   |
//! | binary 2  | 16, ..., 25          | 15, ..., 24        |

mod covariates;
mod generator;

pub use covariates::{
    load_covariates, oversample_covariates, synth_covariates, CovariateTable, LoadOptions,
};
pub use generator::{
    assign_dose, base_response, generate_dataset, load_dataset, Dataset, DoseAssignment, DoseDraw,
    GenConfig, GeneratorConstants, GroundTruth, Normalization,
};

/// Number of covariate columns.
pub const N_FEATURES: usize = 25;

/// Continuous feature columns (0-based).
pub const CONTINUOUS: [usize; 5] = [0, 1, 2, 4, 5];

/// First binary feature set (0-based).
pub const BINARY_1: [usize; 10] = [3, 6, 7, 8, 9, 10, 11, 12, 13, 14];

/// Second binary feature set (0-based).
pub const BINARY_2: [usize; 10] = [15, 16, 17, 18, 19, 20, 21, 22, 23, 24];

/// Default protected attribute column, 1-based.
pub const DEFAULT_PROTECTED_FEATURE: usize = 7;

pub(crate) fn is_binary_column(col: usize) -> bool {
    BINARY_1.contains(&col) || BINARY_2.contains(&col)
}

/// Evenly spaced dose grid `{0, 1/delta, ..., 1}`.
pub fn dose_grid(delta: usize) -> Vec<f64> {
    (0..=delta).map(|d| d as f64 / delta as f64).collect()
}
