//! Fixtures shared by the solver benchmarks.

use dosealloc::config::{DataSource, ExperimentConfig};
use dosealloc::experiments::prepare;
use dosealloc::{AllocationProblem, CostMatrix, Fairness};

/// Budget-only problem on the true effect matrix of `n` synthetic rows.
pub fn uplift_instance(n: usize, delta: usize, budget: f64) -> AllocationProblem {
    let cfg = ExperimentConfig {
        data: DataSource::Synthetic(n),
        delta,
        ..ExperimentConfig::default()
    };
    let prep = prepare(&cfg, 0.0).expect("synthetic data");
    AllocationProblem::uplift(prep.t_true, budget).expect("valid problem")
}

/// Same data with both disparity constraints at slack `eps`.
pub fn fair_instance(n: usize, delta: usize, budget: f64, eps: f64) -> AllocationProblem {
    let cfg = ExperimentConfig {
        data: DataSource::Synthetic(n),
        delta,
        ..ExperimentConfig::default()
    };
    let prep = prepare(&cfg, 0.0).expect("synthetic data");
    let rows = prep.t_true.n_rows();
    AllocationProblem::new(
        prep.t_true,
        CostMatrix::proportional(rows, delta),
        vec![1.0; rows],
        budget,
        prep.data.protected,
        Fairness::new(Some(eps), Some(eps)),
    )
    .expect("valid problem")
}
