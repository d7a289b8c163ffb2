//! The dose-allocation problem and its solvers.
//!
//! Decision variables are one-hot rows: entity `i` receives exactly one dose
//! index `d` in `0..=delta`. The objective is `sum_i T[i][d_i] * b_i`,
//! subject to a budget on `sum_i C[i][d_i]` and optional group fairness
//! constraints on mean dose (`eps_dt`) and mean expected effect (`eps_do`).

mod bnb;
mod brute;
mod dp;
mod greedy;
mod io;

use std::io::Write;
use std::path::Path;
use std::time::Duration;

pub use bnb::{solve_bnb, BnbOptions};
pub use brute::{brute_force, BRUTE_FORCE_LIMIT};
pub use dp::solve_dp;
pub use greedy::solve_greedy;
pub use io::{load_problem, save_problem};

use crate::datagen::dose_grid;
use crate::error::{Error, Result};
use crate::estimators::{cade, CadeMatrix};

/// Slack used when checking budget and fairness feasibility of a policy.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Nonnegative per-entity dose costs with zero cost at dose 0.
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    n_rows: usize,
    n_doses: usize,
    values: Vec<f64>,
}

impl CostMatrix {
    /// Costs equal to the dose level: `c[i][d] = d / delta`.
    pub fn proportional(n_rows: usize, delta: usize) -> Self {
        let grid = dose_grid(delta);
        let mut values = Vec::with_capacity(n_rows * grid.len());
        for _ in 0..n_rows {
            values.extend_from_slice(&grid);
        }
        Self {
            n_rows,
            n_doses: grid.len(),
            values,
        }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = rows.len();
        let n_doses = rows.first().map_or(0, Vec::len);
        if n_doses < 2 {
            return Err(Error::DimensionMismatch(
                "cost rows need at least two doses".into(),
            ));
        }
        let mut values = Vec::with_capacity(n_rows * n_doses);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() != n_doses {
                return Err(Error::DimensionMismatch(format!(
                    "cost row {i} has {} entries, expected {n_doses}",
                    row.len()
                )));
            }
            if row[0] != 0.0 {
                return Err(Error::Validation(format!(
                    "cost row {i}: dose 0 must cost 0"
                )));
            }
            if let Some(c) = row.iter().find(|c| !(c.is_finite() && **c >= 0.0)) {
                return Err(Error::Validation(format!("cost row {i}: invalid cost {c}")));
            }
            values.extend(row);
        }
        Ok(Self {
            n_rows,
            n_doses,
            values,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_doses(&self) -> usize {
        self.n_doses
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_doses..(i + 1) * self.n_doses]
    }

    pub fn get(&self, i: usize, d: usize) -> f64 {
        self.values[i * self.n_doses + d]
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> = dose_grid(self.n_doses - 1)
            .iter()
            .map(|d| format!("dose_{d:?}"))
            .collect();
        writeln!(w, "entity,{}", header.join(","))?;
        for i in 0..self.n_rows {
            let cells: Vec<String> = self.row(i).iter().map(|v| v.to_string()).collect();
            writeln!(w, "{i},{}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        cade::write_matrix_file(path.as_ref(), |w| self.write_csv(w))
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_rows(cade::read_entity_matrix(path.as_ref())?)
    }
}

/// Fairness slacks. `None` disables a constraint pair.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Fairness {
    /// Slack on the ratio of group mean doses.
    pub eps_dt: Option<f64>,
    /// Slack on the ratio of group mean expected effects.
    pub eps_do: Option<f64>,
    /// Keep a constraint pair even when its slack is at least 1.
    /// By default a slack of 1 or more removes the pair.
    pub strict: bool,
}

impl Fairness {
    pub fn none() -> Self {
        Self::default()
    }

    pub fn new(eps_dt: Option<f64>, eps_do: Option<f64>) -> Self {
        Self {
            eps_dt,
            eps_do,
            strict: false,
        }
    }

    fn effective(&self, eps: Option<f64>) -> Option<f64> {
        eps.filter(|&e| self.strict || e < 1.0)
    }

    pub fn dt(&self) -> Option<f64> {
        self.effective(self.eps_dt)
    }

    pub fn do_(&self) -> Option<f64> {
        self.effective(self.eps_do)
    }

    pub fn is_active(&self) -> bool {
        self.dt().is_some() || self.do_().is_some()
    }

    fn validate(&self) -> Result<()> {
        for e in [self.eps_dt, self.eps_do].into_iter().flatten() {
            if !(e.is_finite() && e >= 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "fairness slack {e} must be >= 0"
                )));
            }
        }
        Ok(())
    }
}

/// One linear fairness row over the assignment variables:
/// `sum_{i,d} coef[i][d] * x[i][d]  (>= or <=)  0`.
#[derive(Debug, Clone)]
pub(crate) struct FairnessRow {
    pub coef: Vec<f64>,
    pub at_least: bool,
}

/// An allocation instance.
#[derive(Debug, Clone, PartialEq)]
pub struct AllocationProblem {
    pub cade: CadeMatrix,
    pub costs: CostMatrix,
    pub benefits: Vec<f64>,
    pub budget: f64,
    pub groups: Vec<u8>,
    pub fairness: Fairness,
}

impl AllocationProblem {
    pub fn new(
        cade: CadeMatrix,
        costs: CostMatrix,
        benefits: Vec<f64>,
        budget: f64,
        groups: Vec<u8>,
        fairness: Fairness,
    ) -> Result<Self> {
        let n = cade.n_rows();
        if costs.n_rows() != n || costs.n_doses() != cade.n_doses() {
            return Err(Error::DimensionMismatch(format!(
                "cost matrix is {} x {}, effects are {} x {}",
                costs.n_rows(),
                costs.n_doses(),
                n,
                cade.n_doses()
            )));
        }
        if benefits.len() != n || groups.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "{} benefits and {} group labels for {n} entities",
                benefits.len(),
                groups.len()
            )));
        }
        if benefits.iter().any(|b| !b.is_finite()) {
            return Err(Error::Validation("benefits must be finite".into()));
        }
        if groups.iter().any(|&g| g > 1) {
            return Err(Error::Validation("group labels must be 0 or 1".into()));
        }
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "budget {budget} must be >= 0"
            )));
        }
        fairness.validate()?;
        Ok(Self {
            cade,
            costs,
            benefits,
            budget,
            groups,
            fairness,
        })
    }

    /// Budget-only uplift problem: proportional costs, unit benefits.
    pub fn uplift(cade: CadeMatrix, budget: f64) -> Result<Self> {
        let n = cade.n_rows();
        let costs = CostMatrix::proportional(n, cade.delta());
        Self::new(
            cade,
            costs,
            vec![1.0; n],
            budget,
            vec![0; n],
            Fairness::none(),
        )
    }

    pub fn with_budget(&self, budget: f64) -> Result<Self> {
        if !(budget.is_finite() && budget >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "budget {budget} must be >= 0"
            )));
        }
        Ok(Self {
            budget,
            ..self.clone()
        })
    }

    pub fn n_entities(&self) -> usize {
        self.cade.n_rows()
    }

    pub fn n_doses(&self) -> usize {
        self.cade.n_doses()
    }

    /// Objective contribution of giving dose `d` to entity `i`.
    pub fn value(&self, i: usize, d: usize) -> f64 {
        self.cade.get(i, d) * self.benefits[i]
    }

    pub fn group_sizes(&self) -> [usize; 2] {
        let ones = self.groups.iter().filter(|&&g| g == 1).count();
        [self.groups.len() - ones, ones]
    }

    /// Fairness constraints that actually apply: both groups must be
    /// non-empty, otherwise they are skipped with a warning.
    pub(crate) fn fairness_rows(&self) -> (Vec<FairnessRow>, Vec<String>) {
        let mut warnings = Vec::new();
        if !self.fairness.is_active() {
            return (Vec::new(), warnings);
        }
        let [n0, n1] = self.group_sizes();
        if n0 == 0 || n1 == 0 {
            let msg = format!("group sizes {n0}/{n1}: fairness constraints skipped");
            log::warn!("{msg}");
            warnings.push(msg);
            return (Vec::new(), warnings);
        }
        let grid = self.cade.doses();
        let w = self.n_doses();
        let mut rows = Vec::new();
        let mut push_pair = |eps: f64, weight: &dyn Fn(usize, usize) -> f64| {
            for (at_least, factor) in [(true, 1.0 - eps), (false, 1.0 + eps)] {
                let mut coef = vec![0.0; self.n_entities() * w];
                for i in 0..self.n_entities() {
                    let scale = if self.groups[i] == 0 {
                        1.0 / n0 as f64
                    } else {
                        -factor / n1 as f64
                    };
                    for d in 0..w {
                        coef[i * w + d] = scale * weight(i, d);
                    }
                }
                rows.push(FairnessRow { coef, at_least });
            }
        };
        if let Some(eps) = self.fairness.dt() {
            push_pair(eps, &|_, d| grid[d]);
        }
        if let Some(eps) = self.fairness.do_() {
            push_pair(eps, &|i, d| self.cade.get(i, d));
        }
        (rows, warnings)
    }

    /// Checks budget and fairness for `policy` with slack `tol`.
    pub fn is_feasible(&self, policy: &Policy, tol: f64) -> Result<bool> {
        self.check_shape(policy)?;
        if policy_cost(policy, &self.costs)? > self.budget + tol {
            return Ok(false);
        }
        let (rows, _) = self.fairness_rows();
        Ok(rows
            .iter()
            .all(|r| row_satisfied(r, policy, self.n_doses(), tol)))
    }

    fn check_shape(&self, policy: &Policy) -> Result<()> {
        if policy.n_rows() != self.n_entities() || policy.n_doses() != self.n_doses() {
            return Err(Error::DimensionMismatch(format!(
                "policy is {} x {}, problem is {} x {}",
                policy.n_rows(),
                policy.n_doses(),
                self.n_entities(),
                self.n_doses()
            )));
        }
        Ok(())
    }

    /// Objective value of `policy` on this problem's effects and benefits.
    pub fn objective(&self, policy: &Policy) -> Result<f64> {
        policy_value(policy, &self.cade, &self.benefits)
    }
}

pub(crate) fn row_satisfied(r: &FairnessRow, policy: &Policy, w: usize, tol: f64) -> bool {
    let lhs: f64 = policy
        .doses()
        .iter()
        .enumerate()
        .map(|(i, &d)| r.coef[i * w + d])
        .sum();
    if r.at_least {
        lhs >= -tol
    } else {
        lhs <= tol
    }
}

/// One dose index per entity: the one-hot assignment matrix in compact form.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Policy {
    n_doses: usize,
    doses: Vec<usize>,
}

impl Policy {
    pub fn all_zero(n_rows: usize, n_doses: usize) -> Self {
        Self {
            n_doses,
            doses: vec![0; n_rows],
        }
    }

    pub fn from_doses(doses: Vec<usize>, n_doses: usize) -> Result<Self> {
        if let Some(&d) = doses.iter().find(|&&d| d >= n_doses) {
            return Err(Error::InvalidArgument(format!(
                "dose index {d} out of range for {n_doses} doses"
            )));
        }
        Ok(Self { n_doses, doses })
    }

    /// Reads a 0/1 assignment matrix; every row must contain exactly one 1.
    pub fn from_matrix(rows: &[Vec<f64>]) -> Result<Self> {
        let n_doses = rows.first().map_or(0, Vec::len);
        let mut doses = Vec::with_capacity(rows.len());
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n_doses {
                return Err(Error::DimensionMismatch(format!(
                    "policy row {i} is ragged"
                )));
            }
            if row.iter().any(|&v| v != 0.0 && v != 1.0) {
                return Err(Error::Validation(format!("policy row {i} is not binary")));
            }
            let ones: Vec<usize> = (0..n_doses).filter(|&d| row[d] == 1.0).collect();
            if ones.len() != 1 {
                return Err(Error::Validation(format!(
                    "policy row {i} assigns {} doses",
                    ones.len()
                )));
            }
            doses.push(ones[0]);
        }
        Ok(Self { n_doses, doses })
    }

    pub fn to_matrix(&self) -> Vec<Vec<f64>> {
        self.doses
            .iter()
            .map(|&d| {
                let mut row = vec![0.0; self.n_doses];
                row[d] = 1.0;
                row
            })
            .collect()
    }

    pub fn n_rows(&self) -> usize {
        self.doses.len()
    }

    pub fn n_doses(&self) -> usize {
        self.n_doses
    }

    pub fn doses(&self) -> &[usize] {
        &self.doses
    }

    pub fn dose(&self, i: usize) -> usize {
        self.doses[i]
    }

    /// Dose levels on the grid `{0, 1/delta, ..., 1}`.
    pub fn dose_levels(&self) -> Vec<f64> {
        let grid = dose_grid(self.n_doses - 1);
        self.doses.iter().map(|&d| grid[d]).collect()
    }

    /// `entity,dose_index,dose`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "entity,dose_index,dose")?;
        for (i, (&d, s)) in self.doses.iter().zip(self.dose_levels()).enumerate() {
            writeln!(w, "{i},{d},{s}")?;
        }
        Ok(())
    }
}

pub fn policy_cost(p: &Policy, costs: &CostMatrix) -> Result<f64> {
    if p.n_rows() != costs.n_rows() || p.n_doses() != costs.n_doses() {
        return Err(Error::DimensionMismatch(
            "policy and cost matrix differ in shape".into(),
        ));
    }
    Ok(p.doses
        .iter()
        .enumerate()
        .map(|(i, &d)| costs.get(i, d))
        .sum())
}

pub fn policy_value(p: &Policy, cade: &CadeMatrix, benefits: &[f64]) -> Result<f64> {
    if p.n_rows() != cade.n_rows() || p.n_doses() != cade.n_doses() || benefits.len() != p.n_rows()
    {
        return Err(Error::DimensionMismatch(
            "policy, effect matrix and benefits differ in shape".into(),
        ));
    }
    Ok(p.doses
        .iter()
        .enumerate()
        .map(|(i, &d)| cade.get(i, d) * benefits[i])
        .sum())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    Heuristic,
    /// Stopped at the node or time limit; the incumbent is reported.
    Limit,
}

impl SolveStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Optimal => "optimal",
            SolveStatus::Infeasible => "infeasible",
            SolveStatus::Heuristic => "heuristic",
            SolveStatus::Limit => "limit",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub status: SolveStatus,
    pub objective: f64,
    pub cost: f64,
    pub policy: Policy,
    pub nodes: usize,
    /// LP relaxation value at the root, when one was solved.
    pub root_bound: Option<f64>,
    /// Best bound minus incumbent when stopped at a limit.
    pub gap: Option<f64>,
    pub wall_time: Duration,
    pub warnings: Vec<String>,
}

impl SolveReport {
    pub(crate) fn finish(
        prob: &AllocationProblem,
        status: SolveStatus,
        policy: Policy,
        started: std::time::Instant,
    ) -> Result<Self> {
        Ok(Self {
            status,
            objective: prob.objective(&policy)?,
            cost: policy_cost(&policy, &prob.costs)?,
            policy,
            nodes: 0,
            root_bound: None,
            gap: None,
            wall_time: started.elapsed(),
            warnings: Vec::new(),
        })
    }

    pub const CSV_HEADER: &'static str = "status,objective,cost,nodes,bound,wall_ms";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{:.3}",
            self.status.as_str(),
            self.objective,
            self.cost,
            self.nodes,
            self.root_bound.map_or(String::new(), |b| b.to_string()),
            self.wall_time.as_secs_f64() * 1e3
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Solver {
    Greedy,
    Dp,
    BranchAndBound,
    /// DP when the instance allows it, branch-and-bound otherwise.
    Exact,
}

impl std::str::FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(Solver::Greedy),
            "dp" => Ok(Solver::Dp),
            "bnb" | "ilp" => Ok(Solver::BranchAndBound),
            "exact" => Ok(Solver::Exact),
            other => Err(Error::InvalidArgument(format!(
                "unknown solver '{other}' (expected greedy, dp, bnb or exact)"
            ))),
        }
    }
}

impl Solver {
    pub fn name(self) -> &'static str {
        match self {
            Solver::Greedy => "greedy",
            Solver::Dp => "dp",
            Solver::BranchAndBound => "bnb",
            Solver::Exact => "exact",
        }
    }

    pub fn solve(self, prob: &AllocationProblem) -> Result<SolveReport> {
        match self {
            Solver::Greedy => solve_greedy(prob),
            Solver::Dp => solve_dp(prob, None),
            Solver::BranchAndBound => solve_bnb(prob, &BnbOptions::default()),
            Solver::Exact => {
                if prob.fairness_rows().0.is_empty() {
                    match solve_dp(prob, None) {
                        Err(Error::NonRepresentableCosts { .. }) | Err(Error::TooLarge { .. }) => {}
                        other => return other,
                    }
                }
                solve_bnb(prob, &BnbOptions::default())
            }
        }
    }
}
