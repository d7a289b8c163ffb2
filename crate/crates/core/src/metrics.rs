//! Policy evaluation: regret, value curves, normalized curve areas and
//! group disparity reports.

use rayon::prelude::*;

use crate::alloc::{policy_value, AllocationProblem, Policy, Solver};
use crate::error::{Error, Result};
use crate::estimators::CadeMatrix;

pub fn regret(v_opt: f64, v_presc: f64) -> f64 {
    v_opt - v_presc
}

/// Regret relative to the optimal value. Undefined when `v_opt` is zero.
pub fn regret_norm(v_opt: f64, v_presc: f64) -> Result<f64> {
    if v_opt.abs() < 1e-12 {
        return Err(Error::Undefined(
            "normalized regret with an optimal value of zero".into(),
        ));
    }
    Ok((v_opt - v_presc) / v_opt)
}

/// Objective values over an ascending budget grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueCurve {
    pub budgets: Vec<f64>,
    pub values: Vec<f64>,
    /// Free-form description of which matrices produced the curve.
    pub label: String,
}

impl ValueCurve {
    pub fn new(budgets: Vec<f64>, values: Vec<f64>, label: impl Into<String>) -> Result<Self> {
        if budgets.len() != values.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} budgets but {} values",
                budgets.len(),
                values.len()
            )));
        }
        check_grid(&budgets)?;
        Ok(Self {
            budgets,
            values,
            label: label.into(),
        })
    }

    /// Keeps grid points with budget at most `cap`.
    pub fn truncate(&self, cap: f64) -> ValueCurve {
        let k = self
            .budgets
            .iter()
            .take_while(|&&b| b <= cap + 1e-9)
            .count();
        ValueCurve {
            budgets: self.budgets[..k].to_vec(),
            values: self.values[..k].to_vec(),
            label: self.label.clone(),
        }
    }

    /// Trapezoid area, anchored at `(0, 0)` when the grid starts above 0.
    pub fn area(&self) -> f64 {
        let mut pts: Vec<(f64, f64)> = Vec::with_capacity(self.budgets.len() + 1);
        if self.budgets.first().is_none_or(|&b| b > 0.0) {
            pts.push((0.0, 0.0));
        }
        pts.extend(
            self.budgets
                .iter()
                .copied()
                .zip(self.values.iter().copied()),
        );
        pts.windows(2)
            .map(|p| 0.5 * (p[1].0 - p[0].0) * (p[0].1 + p[1].1))
            .sum()
    }
}

fn check_grid(budgets: &[f64]) -> Result<()> {
    if budgets.iter().any(|b| !(b.is_finite() && *b >= 0.0)) {
        return Err(Error::InvalidArgument(
            "budgets must be finite and >= 0".into(),
        ));
    }
    if budgets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidArgument(
            "budget grid must be strictly ascending".into(),
        ));
    }
    Ok(())
}

/// `start, start + step, ...` up to and including `end` (within rounding).
pub fn budget_grid(start: f64, end: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || end < start {
        return Err(Error::InvalidArgument(format!(
            "bad budget grid {start}..{end} step {step}"
        )));
    }
    let count = ((end - start) / step + 1e-9).floor() as usize;
    Ok((0..=count).map(|k| start + k as f64 * step).collect())
}

/// Solves `prob` at every budget with its own effect matrix, then scores each
/// policy against `t_eval` (with the problem's benefits).
pub fn value_curve(
    prob: &AllocationProblem,
    budgets: &[f64],
    solver: Solver,
    t_eval: &CadeMatrix,
) -> Result<ValueCurve> {
    Ok(solve_curve(prob, budgets, solver, &[t_eval])?.remove(0))
}

/// Like [`value_curve`] but scores each solved policy on several matrices.
/// Returns one curve per matrix, in order.
pub fn solve_curve(
    prob: &AllocationProblem,
    budgets: &[f64],
    solver: Solver,
    t_evals: &[&CadeMatrix],
) -> Result<Vec<ValueCurve>> {
    check_grid(budgets)?;
    let policies: Vec<Policy> = budgets
        .par_iter()
        .map(|&b| {
            let report = prob
                .with_budget(b)
                .and_then(|p| solver.solve(&p))
                .map_err(|e| Error::SolverAtBudget {
                    budget: b,
                    message: e.to_string(),
                })?;
            Ok(report.policy)
        })
        .collect::<Result<_>>()?;
    t_evals
        .iter()
        .map(|t| {
            let values = policies
                .iter()
                .map(|p| policy_value(p, t, &prob.benefits))
                .collect::<Result<Vec<_>>>()?;
            ValueCurve::new(budgets.to_vec(), values, solver.name())
        })
        .collect()
}

/// Values of several policies under one effect matrix.
pub fn policy_values(policies: &[Policy], t: &CadeMatrix, benefits: &[f64]) -> Result<Vec<f64>> {
    policies
        .iter()
        .map(|p| policy_value(p, t, benefits))
        .collect()
}

/// Smallest budget at which the budget-only optimum stops improving: every
/// entity takes its cheapest best dose. Above it the value curve is flat.
pub fn flattening_budget(prob: &AllocationProblem) -> f64 {
    (0..prob.n_entities())
        .map(|i| {
            let best = (0..prob.n_doses())
                .map(|d| prob.value(i, d))
                .fold(f64::NEG_INFINITY, f64::max);
            (0..prob.n_doses())
                .filter(|&d| prob.value(i, d) == best)
                .map(|d| prob.costs.get(i, d))
                .fold(f64::INFINITY, f64::min)
        })
        .sum()
}

/// Area under `curve` divided by the area under `optimal`.
pub fn auuc(curve: &ValueCurve, optimal: &ValueCurve) -> Result<f64> {
    if curve.budgets != optimal.budgets {
        return Err(Error::DimensionMismatch(
            "curves are on different budget grids".into(),
        ));
    }
    let denom = optimal.area();
    if denom.abs() < 1e-12 {
        return Err(Error::Undefined("optimal curve has zero area".into()));
    }
    Ok(curve.area() / denom)
}

/// Per-group means for a policy.
#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub mean_dose: [f64; 2],
    pub mean_outcome: [f64; 2],
    /// Group 0 over group 1; `None` when group 1's mean is zero.
    pub treatment_ratio: Option<f64>,
    pub outcome_ratio: Option<f64>,
}

pub fn fairness_report(policy: &Policy, t: &CadeMatrix, groups: &[u8]) -> Result<FairnessReport> {
    if policy.n_rows() != t.n_rows()
        || groups.len() != t.n_rows()
        || policy.n_doses() != t.n_doses()
    {
        return Err(Error::DimensionMismatch(
            "policy, effect matrix and groups differ in shape".into(),
        ));
    }
    let levels = policy.dose_levels();
    let mut count = [0usize; 2];
    let mut dose = [0.0; 2];
    let mut outcome = [0.0; 2];
    for (i, &g) in groups.iter().enumerate() {
        let g = usize::from(g);
        if g > 1 {
            return Err(Error::Validation("group labels must be 0 or 1".into()));
        }
        count[g] += 1;
        dose[g] += levels[i];
        outcome[g] += t.get(i, policy.dose(i));
    }
    if count.contains(&0) {
        return Err(Error::Validation(format!(
            "fairness report needs both groups; sizes are {}/{}",
            count[0], count[1]
        )));
    }
    let mean_dose = [dose[0] / count[0] as f64, dose[1] / count[1] as f64];
    let mean_outcome = [outcome[0] / count[0] as f64, outcome[1] / count[1] as f64];
    let ratio = |a: f64, b: f64| (b != 0.0).then(|| a / b);
    Ok(FairnessReport {
        mean_dose,
        mean_outcome,
        treatment_ratio: ratio(mean_dose[0], mean_dose[1]),
        outcome_ratio: ratio(mean_outcome[0], mean_outcome[1]),
    })
}
