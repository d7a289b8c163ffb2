//! Acceptance checks. Prints one PASS or FAIL line per criterion followed by
//! the measured numbers. A FAIL is reported, not panicked on, so the rest of
//! the suite still runs; the provable properties are asserted in the other
//! test targets.

mod support;

use std::time::{Duration, Instant};

use dosealloc::alloc::{brute_force, solve_bnb, solve_dp, solve_greedy, BnbOptions};
use dosealloc::config::{DataSource, EstimatorKind, ExperimentConfig};
use dosealloc::datagen::{synth_covariates, Dataset};
use dosealloc::estimators::{fit_rf_slearner, DoseResponse, Estimator, MaxFeatures, RfConfig};
use dosealloc::experiments::{self as exp, Exp2Result};
use dosealloc::lpcore::{solve_lp, LpStatus};
use dosealloc::metrics::{budget_grid, flattening_budget};
use dosealloc::{AllocationProblem, SolveStatus};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use support::{
    check_policy, random_budget_problem, random_lp, random_problem, rng, tableau_simplex, Reference,
};

const REGRET_TOL: f64 = 1e-9;
const SOLVER_TOL: f64 = 1e-9;
const FAIRNESS_TOL: f64 = 1e-7;
const LP_TOL: f64 = 1e-6;
const LP_FEAS_TOL: f64 = 1e-7;
const PROBE_MAE: f64 = 0.05;
const STRATUM_ERR: f64 = 0.05;
/// Monotonicity slack for the fairness grid, matching the default relative
/// optimality gap of branch-and-bound.
const GRID_TOL: f64 = 1e-6;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let tag = if o.pass { "PASS" } else { "FAIL" };
    println!(
        "{tag} {id} {name} ({:.1}s): {}",
        start.elapsed().as_secs_f64(),
        o.detail
    );
    o.pass
}

fn oracle_closure() -> Outcome {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        estimators: vec![EstimatorKind::Oracle],
        ..ExperimentConfig::default()
    };
    let r = match exp::run_exp1(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let row = &r.rows[0];
    let auuc_ok = row
        .auuc_greedy
        .iter()
        .chain(&row.auuc_exact)
        .all(|&a| (a - 1.0).abs() <= 5e-4);
    let elapsed = start.elapsed();
    let pass = row.mise == 0.0
        && row.max_abs_regret <= REGRET_TOL
        && auuc_ok
        && r.caps == [140.0, 250.0]
        && elapsed < Duration::from_secs(600);
    outcome(
        pass,
        format!(
            "mise {} max |regret| {:.2e} over {} budgets, auuc@{:?} greedy {:?} exact {:?}",
            row.mise,
            row.max_abs_regret,
            r.regret_budgets.len(),
            r.caps,
            row.auuc_greedy,
            row.auuc_exact
        ),
    )
}

fn solver_cross_validation() -> Outcome {
    let start = Instant::now();
    let mut r = rng(2024);
    let mut worst_bnb: f64 = 0.0;
    let mut not_optimal = 0;
    for _ in 0..200 {
        let prob = random_problem(&mut r, 6, 3);
        let exact = brute_force(&prob).expect("brute force");
        let bnb = solve_bnb(&prob, &BnbOptions::default()).expect("bnb");
        not_optimal += usize::from(bnb.status != SolveStatus::Optimal);
        worst_bnb = worst_bnb.max((bnb.objective - exact.objective).abs());
    }
    let mut worst_dp: f64 = 0.0;
    for _ in 0..100 {
        let prob = random_budget_problem(&mut r, 50, 5);
        let dp = solve_dp(&prob, None).expect("dp");
        let bnb = solve_bnb(&prob, &BnbOptions::default()).expect("bnb");
        not_optimal += usize::from(bnb.status != SolveStatus::Optimal);
        worst_dp = worst_dp.max((dp.objective - bnb.objective).abs());
    }
    let elapsed = start.elapsed();
    outcome(
        worst_bnb <= SOLVER_TOL && worst_dp <= SOLVER_TOL && not_optimal == 0 && elapsed < Duration::from_secs(120),
        format!(
            "bnb vs brute max diff {worst_bnb:.2e} (200), dp vs bnb max diff {worst_dp:.2e} (100), {not_optimal} non-optimal"
        ),
    )
}

fn feasibility_suite() -> Outcome {
    let mut r = rng(77);
    let mut policies = 0;
    let mut worst: f64 = 0.0;
    let mut broken = 0;
    for _ in 0..500 {
        let prob = random_problem(&mut r, 8, 4);
        let mut reports = vec![
            brute_force(&prob).expect("brute force"),
            solve_bnb(&prob, &BnbOptions::default()).expect("bnb"),
        ];
        if !prob.fairness.is_active() {
            reports.push(solve_greedy(&prob).expect("greedy"));
            reports.extend(solve_dp(&prob, None).ok());
        }
        for rep in reports {
            policies += 1;
            match std::panic::catch_unwind(|| check_policy(&prob, &rep.policy)) {
                Ok(v) => worst = worst.max(v),
                Err(_) => broken += 1,
            }
        }
    }
    outcome(
        broken == 0 && worst <= FAIRNESS_TOL,
        format!("{policies} policies, {broken} structural violations, worst fairness violation {worst:.2e}"),
    )
}

fn structural_curve() -> Outcome {
    let cfg = ExperimentConfig::default();
    let prep = match exp::prepare(&cfg, 0.0) {
        Ok(p) => p,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let prob = AllocationProblem::uplift(prep.t_true.clone(), 0.0).expect("problem");
    let sweep = budget_grid(25.0, 250.0, 25.0).expect("grid");
    let endpoint = *sweep.last().unwrap();
    let b_star = flattening_budget(&prob);
    let mut budgets = sweep.clone();
    budgets.extend([b_star, b_star + 25.0, 2.0 * b_star]);
    budgets.sort_by(f64::total_cmp);
    let values: Vec<f64> = budgets
        .iter()
        .map(|&b| {
            solve_dp(&prob.with_budget(b).unwrap(), None)
                .expect("dp")
                .objective
        })
        .collect();
    let monotone = values.windows(2).all(|w| w[1] >= w[0] - SOLVER_TOL);
    let plateau: Vec<f64> = budgets
        .iter()
        .zip(&values)
        .filter(|(b, _)| **b >= b_star)
        .map(|(_, v)| *v)
        .collect();
    let flat = plateau
        .windows(2)
        .all(|w| (w[1] - w[0]).abs() <= SOLVER_TOL);
    let sweep_vals: Vec<String> = budgets
        .iter()
        .zip(&values)
        .filter(|(b, _)| sweep.contains(b))
        .map(|(_, v)| format!("{v:.3}"))
        .collect();
    outcome(
        monotone && flat && b_star < endpoint,
        format!(
            "non-decreasing {monotone}, flat beyond B* {flat}, B* {b_star:.1} vs endpoint {endpoint}; U on 25..250: [{}]",
            sweep_vals.join(", ")
        ),
    )
}

/// Counts grid steps where the averaged normalized prescribed uplift drops as
/// one slack loosens with the other held fixed.
fn grid_drops(
    r: &Exp2Result,
    cfg: &ExperimentConfig,
    value: impl Fn(&dosealloc::experiments::Exp2Cell) -> f64,
) -> (usize, f64) {
    let (ndt, ndo) = (cfg.eps_dt.len(), cfg.eps_do.len());
    let mut drops = 0;
    let mut worst: f64 = 0.0;
    for (g, _) in cfg.gammas.iter().enumerate() {
        let cell = |i: usize, j: usize| value(&r.cells[g * ndt * ndo + i * ndo + j]);
        for i in 0..ndt {
            for j in 0..ndo {
                let here = cell(i, j);
                let mut next = Vec::new();
                if i + 1 < ndt {
                    next.push(cell(i + 1, j));
                }
                if j + 1 < ndo {
                    next.push(cell(i, j + 1));
                }
                for v in next {
                    let tol = GRID_TOL * here.abs().max(1.0);
                    if v < here - tol {
                        drops += 1;
                        worst = worst.max(here - v);
                    }
                }
            }
        }
    }
    (drops, worst)
}

fn fairness_monotonicity() -> Outcome {
    // The full grid at N = 747 is far beyond the time budget of a test run on
    // one core, so the sweep runs on a small synthetic population with the
    // budgets scaled down accordingly.
    let base = ExperimentConfig {
        data: DataSource::Synthetic(30),
        budgets: vec![2.0, 4.0, 6.0, 8.0, 10.0],
        fairness_budget: 6.0,
        time_limit_secs: Some(2.0),
        gammas: vec![0.0, 5.0],
        ..ExperimentConfig::default()
    };
    let rf = match exp::run_exp2(&base) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let (drops, worst) = grid_drops(&rf, &base, |c| c.avg_norm_u_presc);
    let (obj_drops, _) = grid_drops(&rf, &base, |c| c.avg_objective);
    let limits: usize = rf.cells.iter().map(|c| c.limit_solves).sum();
    let max_gap = rf
        .cells
        .iter()
        .map(|c| c.disparity_gap().abs())
        .fold(0.0, f64::max);

    outcome(
        drops == 0 && max_gap > 1e-9,
        format!(
            "rf prescribed uplift: {drops} drops (worst {worst:.4}) over {} cells; rf estimated objective: {obj_drops} drops; \
             {limits} limit solves; max |est - true disparity gap| {max_gap:.4}",
            rf.cells.len()
        ),
    )
}

fn cost_sensitivity() -> Outcome {
    let cfg = ExperimentConfig {
        estimator: EstimatorKind::Oracle,
        ..ExperimentConfig::default()
    };
    let r = match exp::run_exp3(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let v_dom = r.rows.iter().all(|w| w.v_of_v_opt >= w.v_of_u_opt);
    let u_dom = r.rows.iter().all(|w| w.u_of_u_opt >= w.u_of_v_opt);
    let strict = r
        .rows
        .iter()
        .filter(|w| w.v_of_v_opt > w.v_of_u_opt || w.u_of_u_opt > w.u_of_v_opt)
        .count();
    outcome(
        v_dom && u_dom && strict >= 1,
        format!(
            "V(V-opt) >= V(U-opt) {v_dom}, U(U-opt) >= U(V-opt) {u_dom}, strict at {strict}/{} budgets",
            r.rows.len()
        ),
    )
}

fn estimator_sanity() -> Outcome {
    // Forest on y = s with covariates that carry no signal.
    let n = 2000;
    let cov = synth_covariates(n, 5).expect("covariates");
    let mut r = ChaCha8Rng::seed_from_u64(6);
    let doses: Vec<f64> = (0..n).map(|_| r.random_range(0.0..1.0)).collect();
    let data = Dataset {
        covariates: cov,
        outcomes: doses.clone(),
        doses,
        protected: vec![0; n],
        guarded_rows: 0,
    };
    let rf = fit_rf_slearner(&data, &RfConfig::default()).expect("fit");
    let probe_rows: Vec<&[f64]> = data.covariates.rows().step_by(20).collect();
    let mut abs_err = 0.0;
    let mut count = 0;
    for x in &probe_rows {
        for k in 0..=20 {
            let s = k as f64 / 20.0;
            abs_err += (rf.predict(s, x) - s).abs();
            count += 1;
        }
    }
    let mae = abs_err / count as f64;
    let all_features = RfConfig {
        max_features: MaxFeatures::All,
        ..RfConfig::default()
    };
    let rf_all = fit_rf_slearner(&data, &all_features).expect("fit");
    let mae_all = probe_rows
        .iter()
        .flat_map(|x| (0..=20).map(move |k| (k as f64 / 20.0, x)))
        .map(|(s, x)| (rf_all.predict(s, x) - s).abs())
        .sum::<f64>()
        / count as f64;

    // Binned learner under randomized doses: stratum means against the
    // population mean of the true response over each dose bin.
    let cfg = ExperimentConfig {
        data: DataSource::Synthetic(20_000),
        randomized_doses: true,
        ..ExperimentConfig::default()
    };
    let prep = exp::prepare(&cfg, 0.0).expect("data");
    let est = exp::fit_estimator(EstimatorKind::Binned, &prep, &cfg).expect("fit");
    let Estimator::BinnedSlearner(b) = &est else {
        unreachable!()
    };
    let bins = b.n_bins();
    let mut worst: f64 = 0.0;
    for k in 0..bins {
        let Some(mean) = b.stratum_mean(k) else {
            return outcome(false, format!("stratum {k} is empty"));
        };
        let (lo, hi) = (k as f64 / bins as f64, (k + 1) as f64 / bins as f64);
        let pts = 16;
        let mut sum = 0.0;
        for (i, x) in prep.data.covariates.rows().enumerate() {
            for p in 0..pts {
                let s = lo + (hi - lo) * (p as f64 + 0.5) / pts as f64;
                sum += prep
                    .truth
                    .true_cadr(s, x, prep.data.protected[i])
                    .expect("truth");
            }
        }
        let target = sum / (pts * prep.data.len()) as f64;
        worst = worst.max((mean - target).abs());
    }
    outcome(
        mae < PROBE_MAE && worst < STRATUM_ERR,
        format!("rf probe MAE {mae:.4} (n 2000; {mae_all:.4} with every feature per split), binned max stratum error {worst:.4} over {bins} strata (n 20000)"),
    )
}

fn scalability() -> Outcome {
    let cfg = ExperimentConfig {
        scalability_factors: vec![1, 8],
        exact_max_n: 1000,
        time_limit_secs: Some(300.0),
        ..ExperimentConfig::default()
    };
    let rows = match exp::run_scalability(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("error: {e}")),
    };
    let big = rows.iter().find(|r| r.factor == 8).expect("factor 8");
    let small = rows.iter().find(|r| r.factor == 1).expect("factor 1");
    let greedy_ok = big.greedy_ms < 5000.0;
    let (bnb_ok, bnb_note) = match &small.bnb {
        Some((ms, status, value, gap)) => {
            let ok = match status {
                SolveStatus::Optimal => *ms < 300_000.0,
                SolveStatus::Limit => gap.is_some_and(f64::is_finite),
                _ => false,
            };
            (
                ok,
                format!(
                    "bnb n {} {:.0} ms {} value {value:.4} gap {gap:?}",
                    small.n,
                    ms,
                    status.as_str()
                ),
            )
        }
        None => (false, "bnb skipped".to_string()),
    };
    outcome(
        greedy_ok && bnb_ok,
        format!(
            "greedy n {} ({} unique rows) {:.1} ms; {bnb_note}",
            big.n, big.unique_rows, big.greedy_ms
        ),
    )
}

fn lp_engine() -> Outcome {
    let mut r = rng(31);
    let mut worst_obj: f64 = 0.0;
    let mut worst_feas: f64 = 0.0;
    let mut mismatched = 0;
    for _ in 0..50 {
        let p = random_lp(&mut r);
        let ours = solve_lp(&p).expect("lp");
        match tableau_simplex(&p) {
            Reference::Optimal { objective, .. } if ours.status == LpStatus::Optimal => {
                worst_obj = worst_obj.max((ours.objective - objective).abs());
                worst_feas = worst_feas.max(p.max_violation(&ours.x));
            }
            Reference::Infeasible if ours.status == LpStatus::Infeasible => {}
            _ => mismatched += 1,
        }
    }
    outcome(
        mismatched == 0 && worst_obj <= LP_TOL && worst_feas <= LP_FEAS_TOL,
        format!("50 LPs, {mismatched} status mismatches, max objective diff {worst_obj:.2e}, max violation {worst_feas:.2e}"),
    )
}

fn main() {
    let results = [
        run(1, "oracle closure", oracle_closure),
        run(2, "solver cross-validation", solver_cross_validation),
        run(3, "feasibility suite", feasibility_suite),
        run(4, "structural curve properties", structural_curve),
        run(5, "fairness trade-off monotonicity", fairness_monotonicity),
        run(6, "cost-sensitivity dominance", cost_sensitivity),
        run(7, "learned-estimator sanity", estimator_sanity),
        run(8, "scalability", scalability),
        run(9, "lp engine", lp_engine),
    ];
    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria pass", results.len());
}
