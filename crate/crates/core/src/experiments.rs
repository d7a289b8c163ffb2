//! Experiment runners.
//!
//! Each runner takes an [`ExperimentConfig`], returns typed results, and
//! can render them as [`Table`]s. Tables are written as CSV next to a JSON
//! metadata sidecar holding the config hash, seed and grids. Apart from
//! the timing columns of the scalability and dose-grid runs, outputs are a
//! pure function of the configuration.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

use crate::alloc::{
    solve_bnb, solve_dp, solve_greedy, AllocationProblem, CostMatrix, Fairness, Policy,
    SolveReport, SolveStatus, Solver,
};
use crate::config::{BenefitSpec, DataSource, EstimatorKind, ExperimentConfig};
use crate::datagen::{
    generate_dataset, load_covariates, oversample_covariates, synth_covariates, CovariateTable,
    Dataset, GroundTruth, LoadOptions,
};
use crate::error::{Error, Result};
use crate::estimators::{
    cade_matrix, cross_validate_rf, fit_binned_slearner, fit_rf_slearner, ground_truth_cade, mise,
    oracle_estimator, CadeMatrix, Estimator, RfConfig,
};
use crate::metrics::{auuc, budget_grid, fairness_report, policy_values, regret, ValueCurve};

/// A CSV result table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Self {
            name: name.into(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.header.join(",");
        s.push('\n');
        for r in &self.rows {
            s.push_str(&r.join(","));
            s.push('\n');
        }
        s
    }

    /// Writes `<dir>/<name>.csv` and `<dir>/<name>.meta.json`.
    pub fn write(&self, dir: &Path, meta: &serde_json::Value) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join(format!("{}.csv", self.name));
        std::fs::write(&path, self.to_csv()).map_err(|e| Error::io(&path, e))?;
        let meta_path = dir.join(format!("{}.meta.json", self.name));
        let mut f = std::fs::File::create(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
        serde_json::to_writer_pretty(&mut f, meta)?;
        writeln!(f).map_err(|e| Error::io(&meta_path, e))?;
        Ok(path)
    }
}

fn f(v: f64) -> String {
    v.to_string()
}

fn eps_str(e: Option<f64>) -> String {
    e.map_or_else(|| "disabled".into(), f)
}

/// Metadata sidecar content shared by all outputs of one run.
pub fn metadata(cfg: &ExperimentConfig, experiment: &str) -> serde_json::Value {
    let benefits = match cfg.benefits {
        BenefitSpec::Ones => "ones".to_string(),
        BenefitSpec::Uniform { lo, hi } => format!("uniform({lo},{hi})"),
    };
    json!({
        "experiment": experiment,
        "config_hash": cfg.hash(),
        "seed": cfg.seed,
        "delta": cfg.delta,
        "grids": {
            "budgets": cfg.budgets,
            "auuc_caps": cfg.auuc_caps,
            "auuc_step": cfg.auuc_step,
            "eps_dt": cfg.eps_dt.iter().map(|e| eps_str(*e)).collect::<Vec<_>>(),
            "eps_do": cfg.eps_do.iter().map(|e| eps_str(*e)).collect::<Vec<_>>(),
            "gammas": cfg.gammas,
            "deltas": cfg.deltas,
            "scalability_factors": cfg.scalability_factors,
        },
        "benefits": benefits,
        "benefit_seed": cfg.benefit_seed,
        "jitter_sd": cfg.jitter_sd,
        "config": cfg.to_text(),
    })
}

/// Writes every table with the run's metadata.
pub fn write_tables(
    cfg: &ExperimentConfig,
    experiment: &str,
    tables: &[Table],
) -> Result<Vec<PathBuf>> {
    let meta = metadata(cfg, experiment);
    tables
        .iter()
        .map(|t| t.write(&cfg.out_dir, &meta))
        .collect()
}

/// Data, its generator, and the true effect matrix at the configured grid.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub data: Dataset,
    pub truth: GroundTruth,
    pub t_true: CadeMatrix,
}

pub fn covariates_for(cfg: &ExperimentConfig) -> Result<CovariateTable> {
    match &cfg.data {
        DataSource::Synthetic(n) => synth_covariates(*n, cfg.seed),
        DataSource::Csv {
            path,
            has_header,
            skip_columns,
        } => load_covariates(
            path,
            &LoadOptions {
                has_header: *has_header,
                skip_columns: *skip_columns,
            },
        ),
    }
}

pub fn prepare(cfg: &ExperimentConfig, gamma: f64) -> Result<Prepared> {
    let cov = covariates_for(cfg)?;
    prepare_from(cfg, &cov, gamma)
}

fn prepare_from(cfg: &ExperimentConfig, cov: &CovariateTable, gamma: f64) -> Result<Prepared> {
    let (data, truth) = generate_dataset(cov, &cfg.gen_config(gamma))?;
    let t_true = ground_truth_cade(&truth, &data.covariates, cfg.delta)?;
    Ok(Prepared {
        data,
        truth,
        t_true,
    })
}

/// Fits the requested estimator, cross-validating the forest depth when a
/// grid is configured.
pub fn fit_estimator(
    kind: EstimatorKind,
    prep: &Prepared,
    cfg: &ExperimentConfig,
) -> Result<Estimator> {
    match kind {
        EstimatorKind::Oracle => oracle_estimator(&prep.truth),
        EstimatorKind::Rf => {
            let rf = if cfg.cv_max_depths.is_empty() {
                cfg.rf.clone()
            } else {
                let grid: Vec<RfConfig> = cfg
                    .cv_max_depths
                    .iter()
                    .map(|&max_depth| RfConfig {
                        max_depth,
                        ..cfg.rf.clone()
                    })
                    .collect();
                cross_validate_rf(&prep.data, &grid, cfg.cv_folds, cfg.seed)?
            };
            fit_rf_slearner(&prep.data, &rf)
        }
        EstimatorKind::Binned => fit_binned_slearner(&prep.data, cfg.binned_bins, cfg.binned_k),
    }
}

pub fn benefits_for(spec: BenefitSpec, n: usize, seed: u64) -> Vec<f64> {
    match spec {
        BenefitSpec::Ones => vec![1.0; n],
        BenefitSpec::Uniform { lo, hi } => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..n).map(|_| rng.random_range(lo..hi)).collect()
        }
    }
}

/// Solves with the configured solver. `exact` uses the dynamic program
/// for budget-only instances and branch-and-bound otherwise.
pub fn solve_configured(cfg: &ExperimentConfig, prob: &AllocationProblem) -> Result<SolveReport> {
    match cfg.solver {
        Solver::Greedy => solve_greedy(prob),
        Solver::Dp => solve_dp(prob, None),
        Solver::BranchAndBound => solve_bnb(prob, &cfg.bnb_options()),
        Solver::Exact => {
            if !prob.fairness.is_active() {
                match solve_dp(prob, None) {
                    Err(Error::NonRepresentableCosts { .. }) | Err(Error::TooLarge { .. }) => {}
                    other => return other,
                }
            }
            solve_bnb(prob, &cfg.bnb_options())
        }
    }
}

fn solve_grid(
    prob: &AllocationProblem,
    budgets: &[f64],
    solve: impl Fn(&AllocationProblem) -> Result<SolveReport> + Sync,
) -> Result<Vec<SolveReport>> {
    use rayon::prelude::*;
    budgets
        .par_iter()
        .map(|&b| {
            prob.with_budget(b)
                .and_then(|p| solve(&p))
                .map_err(|e| Error::SolverAtBudget {
                    budget: b,
                    message: e.to_string(),
                })
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Experiment 1: estimator comparison.

/// Expected, prescribed and optimal curves for one estimator and solver.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSet {
    pub estimator: String,
    pub solver: String,
    pub expected: ValueCurve,
    pub prescribed: ValueCurve,
    pub optimal: ValueCurve,
}

impl CurveSet {
    pub fn table(&self, name: String) -> Table {
        let mut t = Table::new(name, &["budget", "value_exp", "value_presc", "value_opt"]);
        for k in 0..self.expected.budgets.len() {
            t.push(vec![
                f(self.expected.budgets[k]),
                f(self.expected.values[k]),
                f(self.prescribed.values[k]),
                f(self.optimal.values[k]),
            ]);
        }
        t
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Row {
    pub estimator: String,
    pub mise: f64,
    /// Normalized AUUC per cap; the greedy column is normalized by greedy
    /// on the true matrix, the exact column by the exact optimum.
    pub auuc_greedy: Vec<f64>,
    pub auuc_exact: Vec<f64>,
    /// Areas of the expected curves up to the largest cap.
    pub expected_area_greedy: f64,
    pub expected_area_exact: f64,
    /// Largest |regret| of the exact solver over the configured budgets.
    pub max_abs_regret: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp1Result {
    pub caps: Vec<f64>,
    pub rows: Vec<Exp1Row>,
    pub curves: Vec<CurveSet>,
    /// Regret curves of the exact solver on the configured budget grid.
    pub regret_budgets: Vec<f64>,
    pub regrets: Vec<(String, Vec<f64>)>,
}

fn curve_set(
    estimator: &str,
    solver: Solver,
    prob_est: &AllocationProblem,
    prob_true: &AllocationProblem,
    budgets: &[f64],
    cfg: &ExperimentConfig,
) -> Result<CurveSet> {
    let solve = |p: &AllocationProblem| match solver {
        Solver::Greedy => solve_greedy(p),
        _ => solve_configured(cfg, p),
    };
    let est_policies: Vec<Policy> = solve_grid(prob_est, budgets, solve)?
        .into_iter()
        .map(|r| r.policy)
        .collect();
    let opt_policies: Vec<Policy> = solve_grid(prob_true, budgets, solve)?
        .into_iter()
        .map(|r| r.policy)
        .collect();
    let b = &prob_true.benefits;
    let curve = |pols: &[Policy], t: &CadeMatrix| -> Result<ValueCurve> {
        ValueCurve::new(budgets.to_vec(), policy_values(pols, t, b)?, solver.name())
    };
    Ok(CurveSet {
        estimator: estimator.to_string(),
        solver: solver.name().to_string(),
        expected: curve(&est_policies, &prob_est.cade)?,
        prescribed: curve(&est_policies, &prob_true.cade)?,
        optimal: curve(&opt_policies, &prob_true.cade)?,
    })
}

pub fn run_exp1(cfg: &ExperimentConfig) -> Result<Exp1Result> {
    let ctx = |e: Error| e.context("experiment 1");
    let prep = prepare(cfg, 0.0).map_err(ctx)?;
    let cov = &prep.data.covariates;
    let max_cap = cfg.auuc_caps.iter().copied().fold(0.0, f64::max);
    let grid = budget_grid(cfg.auuc_step, max_cap, cfg.auuc_step).map_err(ctx)?;
    let prob_true = AllocationProblem::uplift(prep.t_true.clone(), 0.0).map_err(ctx)?;

    let mut rows = Vec::new();
    let mut curves = Vec::new();
    let mut regrets = Vec::new();
    for &kind in &cfg.estimators {
        let name = kind.name();
        log::info!("experiment 1: estimator {name}");
        let ectx = |e: Error| e.context(format!("experiment 1, estimator {name}"));
        let est = fit_estimator(kind, &prep, cfg).map_err(ectx)?;
        let m = mise(&est, &prep.truth, cov, cfg.mise_grid_points).map_err(ectx)?;
        let t_hat = cade_matrix(&est, cov, cfg.delta).map_err(ectx)?;
        let prob_est = AllocationProblem::uplift(t_hat, 0.0).map_err(ectx)?;

        let greedy =
            curve_set(name, Solver::Greedy, &prob_est, &prob_true, &grid, cfg).map_err(ectx)?;
        let exact =
            curve_set(name, Solver::Exact, &prob_est, &prob_true, &grid, cfg).map_err(ectx)?;
        let norm = |c: &CurveSet| -> Result<Vec<f64>> {
            cfg.auuc_caps
                .iter()
                .map(|&cap| auuc(&c.prescribed.truncate(cap), &c.optimal.truncate(cap)))
                .collect()
        };

        let reg = curve_set(
            name,
            Solver::Exact,
            &prob_est,
            &prob_true,
            &cfg.budgets,
            cfg,
        )
        .map_err(ectx)?;
        let r: Vec<f64> = reg
            .optimal
            .values
            .iter()
            .zip(&reg.prescribed.values)
            .map(|(&o, &p)| regret(o, p))
            .collect();
        rows.push(Exp1Row {
            estimator: name.to_string(),
            mise: m,
            auuc_greedy: norm(&greedy).map_err(ectx)?,
            auuc_exact: norm(&exact).map_err(ectx)?,
            expected_area_greedy: greedy.expected.area(),
            expected_area_exact: exact.expected.area(),
            max_abs_regret: r.iter().fold(0.0, |a, v| a.max(v.abs())),
        });
        regrets.push((name.to_string(), r));
        curves.push(greedy);
        curves.push(exact);
    }
    Ok(Exp1Result {
        caps: cfg.auuc_caps.clone(),
        rows,
        curves,
        regret_budgets: cfg.budgets.clone(),
        regrets,
    })
}

impl Exp1Result {
    pub fn tables(&self) -> Vec<Table> {
        let cap = |c: f64| format!("{c}");
        let mut header = vec!["estimator".to_string(), "mise".to_string()];
        for solver in ["greedy", "exact"] {
            for &c in &self.caps {
                header.push(format!("auuc{}_{solver}", cap(c)));
            }
        }
        header.extend(
            [
                "expected_area_greedy",
                "expected_area_exact",
                "max_abs_regret",
            ]
            .map(String::from),
        );
        let mut main = Table {
            name: "exp1".into(),
            header,
            rows: Vec::new(),
        };
        for r in &self.rows {
            let mut row = vec![r.estimator.clone(), format!("{:.6}", r.mise)];
            row.extend(r.auuc_greedy.iter().map(|v| format!("{v:.6}")));
            row.extend(r.auuc_exact.iter().map(|v| format!("{v:.6}")));
            row.push(f(r.expected_area_greedy));
            row.push(f(r.expected_area_exact));
            row.push(f(r.max_abs_regret));
            main.push(row);
        }
        let mut out = vec![main];
        for c in &self.curves {
            out.push(c.table(format!("exp1_curve_{}_{}", c.estimator, c.solver)));
        }
        let mut reg = Table::new("exp1_regret", &["estimator", "budget", "regret"]);
        for (name, values) in &self.regrets {
            for (b, v) in self.regret_budgets.iter().zip(values) {
                reg.push(vec![name.clone(), f(*b), f(*v)]);
            }
        }
        out.push(reg);
        out
    }
}

// ---------------------------------------------------------------------------
// Experiment 2: fairness trade-offs.

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Cell {
    pub gamma: f64,
    pub eps_dt: Option<f64>,
    pub eps_do: Option<f64>,
    /// Prescribed uplift over the unconstrained true optimum, averaged over budgets.
    pub avg_norm_u_presc: f64,
    /// Estimated objective averaged over budgets.
    pub avg_objective: f64,
    /// Solves that stopped at a node or time limit.
    pub limit_solves: usize,
    pub mean_dose: [f64; 2],
    pub outcome_est: [f64; 2],
    pub outcome_true: [f64; 2],
    /// Estimated objective at the fairness report budget.
    pub report_objective: f64,
}

impl Exp2Cell {
    /// Difference between the estimated and the true outcome gap between groups.
    pub fn disparity_gap(&self) -> f64 {
        (self.outcome_est[0] - self.outcome_est[1]) - (self.outcome_true[0] - self.outcome_true[1])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp2Result {
    pub estimator: String,
    pub cells: Vec<Exp2Cell>,
}

pub fn run_exp2(cfg: &ExperimentConfig) -> Result<Exp2Result> {
    let cov = covariates_for(cfg).map_err(|e| e.context("experiment 2"))?;
    let mut cells = Vec::new();
    for &gamma in &cfg.gammas {
        let ctx = |e: Error| e.context(format!("experiment 2, gamma {gamma}"));
        let prep = prepare_from(cfg, &cov, gamma).map_err(ctx)?;
        let est = fit_estimator(cfg.estimator, &prep, cfg).map_err(ctx)?;
        let t_hat = cade_matrix(&est, &prep.data.covariates, cfg.delta).map_err(ctx)?;
        let n = t_hat.n_rows();
        let groups = prep.data.protected.clone();
        let base = AllocationProblem::new(
            t_hat,
            CostMatrix::proportional(n, cfg.delta),
            vec![1.0; n],
            0.0,
            groups.clone(),
            Fairness::none(),
        )
        .map_err(ctx)?;
        let truth_prob = AllocationProblem::uplift(prep.t_true.clone(), 0.0).map_err(ctx)?;
        let u_opt: Vec<f64> = solve_grid(&truth_prob, &cfg.budgets, |p| solve_dp(p, None))
            .map_err(ctx)?
            .iter()
            .map(|r| r.objective)
            .collect();
        if let Some(k) = u_opt.iter().position(|v| v.abs() < 1e-12) {
            return Err(ctx(Error::Undefined(format!(
                "optimal uplift is zero at budget {}",
                cfg.budgets[k]
            ))));
        }
        for &eps_dt in &cfg.eps_dt {
            for &eps_do in &cfg.eps_do {
                log::info!("experiment 2: gamma {gamma}, eps_dt {eps_dt:?}, eps_do {eps_do:?}");
                let prob = AllocationProblem {
                    fairness: Fairness::new(eps_dt, eps_do),
                    ..base.clone()
                };
                let mut budgets = cfg.budgets.clone();
                let report_at = budgets.iter().position(|&b| b == cfg.fairness_budget);
                if report_at.is_none() {
                    budgets.push(cfg.fairness_budget);
                }
                let reports = {
                    // Solve on a sorted copy; map back afterwards.
                    let mut order: Vec<usize> = (0..budgets.len()).collect();
                    order.sort_by(|&a, &b| budgets[a].total_cmp(&budgets[b]));
                    let sorted: Vec<f64> = order.iter().map(|&k| budgets[k]).collect();
                    let mut solved: Vec<Option<SolveReport>> = vec![None; budgets.len()];
                    for (r, &k) in solve_grid(&prob, &sorted, |p| solve_configured(cfg, p))
                        .map_err(ctx)?
                        .into_iter()
                        .zip(&order)
                    {
                        solved[k] = Some(r);
                    }
                    solved
                        .into_iter()
                        .map(|r| r.expect("every budget solved"))
                        .collect::<Vec<_>>()
                };
                let nb = cfg.budgets.len();
                let mut norm_sum = 0.0;
                let mut obj_sum = 0.0;
                let mut limits = 0;
                for (k, r) in reports[..nb].iter().enumerate() {
                    let presc = prob_value(&r.policy, &prep.t_true)?;
                    norm_sum += presc / u_opt[k];
                    obj_sum += r.objective;
                    if r.status == SolveStatus::Limit {
                        limits += 1;
                    }
                }
                let report = &reports[report_at.unwrap_or(nb)];
                let est_rep = fairness_report(&report.policy, &prob.cade, &groups).map_err(ctx)?;
                let true_rep =
                    fairness_report(&report.policy, &prep.t_true, &groups).map_err(ctx)?;
                cells.push(Exp2Cell {
                    gamma,
                    eps_dt,
                    eps_do,
                    avg_norm_u_presc: norm_sum / nb as f64,
                    avg_objective: obj_sum / nb as f64,
                    limit_solves: limits,
                    mean_dose: est_rep.mean_dose,
                    outcome_est: est_rep.mean_outcome,
                    outcome_true: true_rep.mean_outcome,
                    report_objective: report.objective,
                });
            }
        }
    }
    Ok(Exp2Result {
        estimator: cfg.estimator.name().to_string(),
        cells,
    })
}

fn prob_value(p: &Policy, t: &CadeMatrix) -> Result<f64> {
    crate::alloc::policy_value(p, t, &vec![1.0; t.n_rows()])
}

impl Exp2Result {
    pub fn tables(&self) -> Vec<Table> {
        let mut grid = Table::new(
            "exp2_grid",
            &[
                "gamma",
                "eps_dt",
                "eps_do",
                "avg_norm_u_presc",
                "avg_objective",
                "limit_solves",
            ],
        );
        let mut gammas: Vec<f64> = Vec::new();
        for c in &self.cells {
            if !gammas.contains(&c.gamma) {
                gammas.push(c.gamma);
            }
            grid.push(vec![
                f(c.gamma),
                eps_str(c.eps_dt),
                eps_str(c.eps_do),
                format!("{:.6}", c.avg_norm_u_presc),
                f(c.avg_objective),
                c.limit_solves.to_string(),
            ]);
        }
        let mut out = vec![grid];
        for g in gammas {
            let mut t = Table::new(
                format!("exp2_fairness_gamma{g}"),
                &[
                    "eps_dt",
                    "eps_do",
                    "mean_dose_g0",
                    "mean_dose_g1",
                    "outcome_g0_est",
                    "outcome_g1_est",
                    "outcome_g0_true",
                    "outcome_g1_true",
                    "objective",
                ],
            );
            for c in self.cells.iter().filter(|c| c.gamma == g) {
                t.push(vec![
                    eps_str(c.eps_dt),
                    eps_str(c.eps_do),
                    f(c.mean_dose[0]),
                    f(c.mean_dose[1]),
                    f(c.outcome_est[0]),
                    f(c.outcome_est[1]),
                    f(c.outcome_true[0]),
                    f(c.outcome_true[1]),
                    f(c.report_objective),
                ]);
            }
            out.push(t);
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Experiment 3: cost-sensitive objective.

#[derive(Debug, Clone, PartialEq)]
pub struct Exp3Row {
    pub budget: f64,
    pub u_of_u_opt: f64,
    pub v_of_u_opt: f64,
    pub u_of_v_opt: f64,
    pub v_of_v_opt: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Exp3Result {
    pub estimator: String,
    pub benefits: Vec<f64>,
    pub rows: Vec<Exp3Row>,
}

pub fn run_exp3(cfg: &ExperimentConfig) -> Result<Exp3Result> {
    let ctx = |e: Error| e.context("experiment 3");
    let prep = prepare(cfg, 0.0).map_err(ctx)?;
    let est = fit_estimator(cfg.estimator, &prep, cfg).map_err(ctx)?;
    let t_hat = cade_matrix(&est, &prep.data.covariates, cfg.delta).map_err(ctx)?;
    let n = t_hat.n_rows();
    let b = benefits_for(cfg.benefits, n, cfg.benefit_seed);
    let u_prob = AllocationProblem::uplift(t_hat, 0.0).map_err(ctx)?;
    let v_prob = AllocationProblem {
        benefits: b.clone(),
        ..u_prob.clone()
    };
    let u_pols = solve_grid(&u_prob, &cfg.budgets, |p| solve_configured(cfg, p)).map_err(ctx)?;
    let v_pols = solve_grid(&v_prob, &cfg.budgets, |p| solve_configured(cfg, p)).map_err(ctx)?;
    let ones = vec![1.0; n];
    let eval = |p: &Policy, w: &[f64]| crate::alloc::policy_value(p, &prep.t_true, w);
    let rows = cfg
        .budgets
        .iter()
        .zip(u_pols.iter().zip(&v_pols))
        .map(|(&budget, (ur, vr))| {
            Ok(Exp3Row {
                budget,
                u_of_u_opt: eval(&ur.policy, &ones)?,
                v_of_u_opt: eval(&ur.policy, &b)?,
                u_of_v_opt: eval(&vr.policy, &ones)?,
                v_of_v_opt: eval(&vr.policy, &b)?,
            })
        })
        .collect::<Result<Vec<_>>>()
        .map_err(ctx)?;
    Ok(Exp3Result {
        estimator: cfg.estimator.name().to_string(),
        benefits: b,
        rows,
    })
}

impl Exp3Result {
    pub fn tables(&self) -> Vec<Table> {
        let mut t = Table::new(
            "exp3",
            &[
                "budget",
                "u_of_u_opt",
                "v_of_u_opt",
                "u_of_v_opt",
                "v_of_v_opt",
            ],
        );
        for r in &self.rows {
            t.push(vec![
                f(r.budget),
                f(r.u_of_u_opt),
                f(r.v_of_u_opt),
                f(r.u_of_v_opt),
                f(r.v_of_v_opt),
            ]);
        }
        vec![t]
    }
}

// ---------------------------------------------------------------------------
// Scalability.

#[derive(Debug, Clone, PartialEq)]
pub struct ScalabilityRow {
    pub factor: usize,
    pub n: usize,
    pub unique_rows: usize,
    pub budget: f64,
    pub greedy_ms: f64,
    pub greedy_value: f64,
    pub dp_ms: f64,
    pub dp_value: f64,
    /// `None` when the instance exceeds the exact-solver size cap.
    pub bnb: Option<(f64, SolveStatus, f64, Option<f64>)>,
}

fn ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Oversamples the covariates by each factor, scales the budget with it,
/// and times the solvers on the true effect matrix.
pub fn run_scalability(cfg: &ExperimentConfig) -> Result<Vec<ScalabilityRow>> {
    let ctx = |e: Error| e.context("scalability");
    let prep = prepare(cfg, 0.0).map_err(ctx)?;
    let mut rows = Vec::new();
    for &factor in &cfg.scalability_factors {
        log::info!("scalability: factor {factor}");
        let cov = oversample_covariates(&prep.data.covariates, factor, cfg.jitter_sd, cfg.seed)
            .map_err(ctx)?;
        let n = cov.n_rows();
        let unique_rows = {
            let mut keys: Vec<Vec<u64>> = cov
                .rows()
                .map(|r| r.iter().map(|v| v.to_bits()).collect())
                .collect();
            keys.sort();
            keys.dedup();
            keys.len()
        };
        let t = ground_truth_cade(&prep.truth, &cov, cfg.delta).map_err(ctx)?;
        let budget = cfg.scalability_budget * factor as f64;
        let prob = AllocationProblem::uplift(t, budget).map_err(ctx)?;
        let start = Instant::now();
        let g = solve_greedy(&prob).map_err(ctx)?;
        let greedy_ms = ms(start);
        let start = Instant::now();
        let d = solve_dp(&prob, None).map_err(ctx)?;
        let dp_ms = ms(start);
        let bnb = if n <= cfg.exact_max_n {
            let start = Instant::now();
            let r = solve_bnb(&prob, &cfg.bnb_options()).map_err(ctx)?;
            Some((ms(start), r.status, r.objective, r.gap))
        } else {
            None
        };
        rows.push(ScalabilityRow {
            factor,
            n,
            unique_rows,
            budget,
            greedy_ms,
            greedy_value: g.objective,
            dp_ms,
            dp_value: d.objective,
            bnb,
        });
    }
    Ok(rows)
}

pub fn scalability_table(rows: &[ScalabilityRow]) -> Table {
    let mut t = Table::new(
        "scalability",
        &[
            "factor",
            "n",
            "unique_rows",
            "budget",
            "greedy_ms",
            "greedy_value",
            "dp_ms",
            "dp_value",
            "bnb_ms",
            "bnb_status",
            "bnb_value",
            "bnb_gap",
        ],
    );
    for r in rows {
        let (bms, bst, bval, bgap) = match &r.bnb {
            Some((t, s, v, g)) => (
                format!("{t:.3}"),
                s.as_str().to_string(),
                f(*v),
                g.map_or(String::new(), f),
            ),
            None => (
                String::new(),
                "skipped".into(),
                String::new(),
                String::new(),
            ),
        };
        t.push(vec![
            r.factor.to_string(),
            r.n.to_string(),
            r.unique_rows.to_string(),
            f(r.budget),
            format!("{:.3}", r.greedy_ms),
            f(r.greedy_value),
            format!("{:.3}", r.dp_ms),
            f(r.dp_value),
            bms,
            bst,
            bval,
            bgap,
        ]);
    }
    t
}

// ---------------------------------------------------------------------------
// Dose-grid resolution sweep.

#[derive(Debug, Clone, PartialEq)]
pub struct DeltaRow {
    pub delta: usize,
    pub u_presc: f64,
    pub u_opt: f64,
    pub solve_ms: f64,
}

pub fn run_delta_sweep(cfg: &ExperimentConfig) -> Result<Vec<DeltaRow>> {
    let ctx = |e: Error| e.context("dose-grid sweep");
    let prep = prepare(cfg, 0.0).map_err(ctx)?;
    let est = fit_estimator(cfg.estimator, &prep, cfg).map_err(ctx)?;
    let cov = &prep.data.covariates;
    let mut rows = Vec::new();
    for &delta in &cfg.deltas {
        log::info!("dose-grid sweep: delta {delta}");
        let t_hat = cade_matrix(&est, cov, delta).map_err(ctx)?;
        let t_true = ground_truth_cade(&prep.truth, cov, delta).map_err(ctx)?;
        let prob = AllocationProblem::uplift(t_hat, cfg.delta_budget).map_err(ctx)?;
        let start = Instant::now();
        let r = solve_configured(cfg, &prob).map_err(ctx)?;
        let solve_ms = ms(start);
        let u_presc = prob_value(&r.policy, &t_true)?;
        let truth = AllocationProblem::uplift(t_true, cfg.delta_budget).map_err(ctx)?;
        let u_opt = solve_dp(&truth, None).map_err(ctx)?.objective;
        rows.push(DeltaRow {
            delta,
            u_presc,
            u_opt,
            solve_ms,
        });
    }
    Ok(rows)
}

pub fn delta_table(rows: &[DeltaRow]) -> Table {
    let mut t = Table::new("delta_sweep", &["delta", "u_presc", "u_opt", "solve_ms"]);
    for r in rows {
        t.push(vec![
            r.delta.to_string(),
            f(r.u_presc),
            f(r.u_opt),
            format!("{:.3}", r.solve_ms),
        ]);
    }
    t
}
