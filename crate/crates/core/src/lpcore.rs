//! Bounded-variable primal simplex for dense LPs.
//!
//! Problems are maximizations over box-bounded variables with `<=`, `>=`
//! and `=` rows. The solver keeps an explicit basis inverse updated by
//! rank-one eta steps and refactored periodically. Columns are stored
//! sparse internally, so the relaxations built by the allocation module
//! (one assignment row per entity, a handful of coupling rows) price
//! cheaply even though the public problem type is dense.
//!
//! Phase I starts from a crash basis: each row takes a singleton column
//! when one can absorb the row residual within its bounds, otherwise the
//! row slack; rows still infeasible get an artificial variable.

use crate::error::{Error, Result};

/// Smallest pivot element accepted in the ratio test.
pub const PIVOT_TOL: f64 = 1e-9;
/// Primal feasibility tolerance.
pub const FEAS_TOL: f64 = 1e-7;
/// Reduced-cost tolerance for optimality.
pub const OPT_TOL: f64 = 1e-9;
/// Consecutive degenerate pivots before switching to Bland's rule.
pub const STALL_THRESHOLD: usize = 50;
/// Pivots between basis refactorizations.
pub const REFACTOR_INTERVAL: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RowSense {
    Le,
    Ge,
    Eq,
}

/// `max c'x  s.t.  A x (<=|>=|=) b,  lower <= x <= upper`.
#[derive(Debug, Clone, PartialEq)]
pub struct LpProblem {
    pub objective: Vec<f64>,
    /// Row-major, `rhs.len() x objective.len()`.
    pub matrix: Vec<f64>,
    pub senses: Vec<RowSense>,
    pub rhs: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LpStatus {
    Optimal,
    Infeasible,
    Unbounded,
    IterationLimit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LpSolution {
    pub status: LpStatus,
    pub objective: f64,
    pub x: Vec<f64>,
    pub iterations: usize,
    /// Final basis of an optimal solve, usable as a warm start.
    pub basis: Option<Basis>,
    /// Reduced costs of the structural variables at an optimum (zero for
    /// basic ones); empty for any other status.
    pub reduced_costs: Vec<f64>,
}

/// A simplex basis: the basic variable of each row (structural indices
/// first, then one slack per row) and the nonbasic variables held at their
/// upper bound.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Basis {
    basic: Vec<usize>,
    at_upper: Vec<usize>,
}

impl LpProblem {
    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_rows(&self) -> usize {
        self.rhs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let (m, n) = (self.n_rows(), self.n_vars());
        if self.matrix.len() != m * n {
            return Err(Error::DimensionMismatch(format!(
                "matrix has {} entries, expected {m} x {n}",
                self.matrix.len()
            )));
        }
        if self.senses.len() != m {
            return Err(Error::DimensionMismatch(format!(
                "{} row senses for {m} rows",
                self.senses.len()
            )));
        }
        if self.lower.len() != n || self.upper.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "bounds have lengths {} / {}, expected {n}",
                self.lower.len(),
                self.upper.len()
            )));
        }
        let all_finite = self
            .objective
            .iter()
            .chain(&self.matrix)
            .chain(&self.rhs)
            .chain(&self.lower)
            .chain(&self.upper)
            .all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("LP data must be finite".into()));
        }
        if let Some(j) = (0..n).find(|&j| self.lower[j] > self.upper[j]) {
            return Err(Error::InvalidArgument(format!(
                "variable {j} has lower bound {} above upper bound {}",
                self.lower[j], self.upper[j]
            )));
        }
        Ok(())
    }

    /// Converts to the sparse column form used by the solver.
    pub fn prepare(&self) -> Result<PreparedLp> {
        self.validate()?;
        let (m, n) = (self.n_rows(), self.n_vars());
        let mut col_start = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_start.push(0);
        for j in 0..n {
            for i in 0..m {
                let a = self.matrix[i * n + j];
                if a != 0.0 {
                    row_idx.push(i);
                    vals.push(a);
                }
            }
            col_start.push(row_idx.len());
        }
        Ok(PreparedLp {
            n,
            m,
            col_start,
            row_idx,
            vals,
            objective: self.objective.clone(),
            senses: self.senses.clone(),
            rhs: self.rhs.clone(),
            lower: self.lower.clone(),
            upper: self.upper.clone(),
        })
    }

    /// Maximum constraint violation of `x`, bounds included.
    pub fn max_violation(&self, x: &[f64]) -> f64 {
        let n = self.n_vars();
        let mut worst: f64 = 0.0;
        for (i, row) in self
            .matrix
            .chunks_exact(n.max(1))
            .enumerate()
            .take(self.n_rows())
        {
            let lhs: f64 = row.iter().zip(x).map(|(a, v)| a * v).sum();
            let v = match self.senses[i] {
                RowSense::Le => lhs - self.rhs[i],
                RowSense::Ge => self.rhs[i] - lhs,
                RowSense::Eq => (lhs - self.rhs[i]).abs(),
            };
            worst = worst.max(v);
        }
        for j in 0..n {
            worst = worst.max(self.lower[j] - x[j]).max(x[j] - self.upper[j]);
        }
        worst
    }
}

/// Solves `p` from scratch.
pub fn solve_lp(p: &LpProblem) -> Result<LpSolution> {
    p.prepare()?.solve()
}

/// An LP in sparse column form. Bounds can be overridden per solve, which
/// is how branch-and-bound nodes reuse one prepared relaxation.
#[derive(Debug, Clone)]
pub struct PreparedLp {
    n: usize,
    m: usize,
    col_start: Vec<usize>,
    row_idx: Vec<usize>,
    vals: Vec<f64>,
    objective: Vec<f64>,
    senses: Vec<RowSense>,
    rhs: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl PreparedLp {
    /// Builds the solver form directly from sparse columns, skipping the
    /// dense matrix. Each column lists `(row, coefficient)` pairs.
    pub fn from_columns(
        columns: &[Vec<(usize, f64)>],
        objective: Vec<f64>,
        senses: Vec<RowSense>,
        rhs: Vec<f64>,
        lower: Vec<f64>,
        upper: Vec<f64>,
    ) -> Result<Self> {
        let (m, n) = (rhs.len(), columns.len());
        if objective.len() != n || lower.len() != n || upper.len() != n || senses.len() != m {
            return Err(Error::DimensionMismatch(
                "sparse LP parts disagree in size".into(),
            ));
        }
        let mut col_start = Vec::with_capacity(n + 1);
        let mut row_idx = Vec::new();
        let mut vals = Vec::new();
        col_start.push(0);
        for col in columns {
            for &(i, a) in col {
                if i >= m || !a.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "bad entry ({i}, {a}) in column"
                    )));
                }
                if a != 0.0 {
                    row_idx.push(i);
                    vals.push(a);
                }
            }
            col_start.push(row_idx.len());
        }
        let finite = objective
            .iter()
            .chain(&rhs)
            .chain(&lower)
            .chain(&upper)
            .all(|v| v.is_finite());
        if !finite {
            return Err(Error::InvalidArgument("LP data must be finite".into()));
        }
        Ok(PreparedLp {
            n,
            m,
            col_start,
            row_idx,
            vals,
            objective,
            senses,
            rhs,
            lower,
            upper,
        })
    }

    pub fn n_vars(&self) -> usize {
        self.n
    }

    pub fn n_rows(&self) -> usize {
        self.m
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn solve(&self) -> Result<LpSolution> {
        self.solve_with_bounds(&self.lower, &self.upper)
    }

    pub fn solve_with_bounds(&self, lower: &[f64], upper: &[f64]) -> Result<LpSolution> {
        let limit = 100 * (self.m + self.n).max(1);
        self.solve_with_limit(lower, upper, limit)
    }

    pub fn solve_with_limit(
        &self,
        lower: &[f64],
        upper: &[f64],
        iteration_limit: usize,
    ) -> Result<LpSolution> {
        if lower.len() != self.n || upper.len() != self.n {
            return Err(Error::DimensionMismatch(
                "bound vectors do not match LP".into(),
            ));
        }
        if let Some(j) = (0..self.n).find(|&j| !(lower[j] <= upper[j])) {
            log::debug!("variable {j} has crossed bounds");
            return Ok(LpSolution {
                status: LpStatus::Infeasible,
                objective: f64::NEG_INFINITY,
                x: vec![0.0; self.n],
                iterations: 0,
                basis: None,
                reduced_costs: Vec::new(),
            });
        }
        Simplex::new(self, lower, upper, iteration_limit).run()
    }

    /// Re-solves from `basis` (typically the optimum of the same LP under
    /// looser bounds) with the dual simplex. Falls back to a cold start when
    /// the basis does not fit or is not dual feasible.
    pub fn solve_warm(
        &self,
        lower: &[f64],
        upper: &[f64],
        basis: &Basis,
        iteration_limit: usize,
    ) -> Result<LpSolution> {
        if lower.len() != self.n || upper.len() != self.n {
            return Err(Error::DimensionMismatch(
                "bound vectors do not match LP".into(),
            ));
        }
        if (0..self.n).any(|j| !(lower[j] <= upper[j])) {
            return self.solve_with_limit(lower, upper, iteration_limit);
        }
        let valid = basis.basic.len() == self.m
            && basis
                .basic
                .iter()
                .chain(&basis.at_upper)
                .all(|&j| j < self.n + self.m);
        if valid {
            if let Some(mut sx) = Simplex::warm(self, lower, upper, basis, iteration_limit) {
                if let Some(sol) = sx.dual_run()? {
                    return Ok(sol);
                }
            }
        }
        log::debug!("warm start rejected; solving from scratch");
        self.solve_with_limit(lower, upper, iteration_limit)
    }
}

#[derive(Debug, Clone, Copy)]
enum Outcome {
    Optimal,
    Unbounded,
    IterationLimit,
}

struct Simplex<'a> {
    lp: &'a PreparedLp,
    m: usize,
    /// Structural, then one slack per row, then artificials.
    n_total: usize,
    artificials: Vec<(usize, f64)>,
    lo: Vec<f64>,
    hi: Vec<f64>,
    x: Vec<f64>,
    cost: Vec<f64>,
    basis: Vec<usize>,
    /// Basis row of each variable, `usize::MAX` when nonbasic.
    position: Vec<usize>,
    at_upper: Vec<bool>,
    binv: Vec<f64>,
    y: Vec<f64>,
    iterations: usize,
    iteration_limit: usize,
    since_refactor: usize,
}

const NONBASIC: usize = usize::MAX;

impl<'a> Simplex<'a> {
    fn new(lp: &'a PreparedLp, lower: &[f64], upper: &[f64], iteration_limit: usize) -> Self {
        let (n, m) = (lp.n, lp.m);
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        for sense in &lp.senses {
            let (l, h) = match sense {
                RowSense::Le => (0.0, f64::INFINITY),
                RowSense::Ge => (f64::NEG_INFINITY, 0.0),
                RowSense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }
        let mut x = vec![0.0; n + m];
        x[..n].copy_from_slice(&lo[..n]);
        let mut residual = lp.rhs.clone();
        for j in 0..n {
            if x[j] != 0.0 {
                for k in lp.col_start[j]..lp.col_start[j + 1] {
                    residual[lp.row_idx[k]] -= lp.vals[k] * x[j];
                }
            }
        }

        let mut singletons: Vec<Vec<usize>> = vec![Vec::new(); m];
        for j in 0..n {
            if lp.col_start[j + 1] - lp.col_start[j] == 1 {
                let k = lp.col_start[j];
                if lp.vals[k].abs() > PIVOT_TOL {
                    singletons[lp.row_idx[k]].push(j);
                }
            }
        }

        let mut basis = vec![NONBASIC; m];
        let mut position = vec![NONBASIC; n + m];
        let mut diag = vec![1.0; m];
        let mut artificials = Vec::new();
        for i in 0..m {
            let crash = singletons[i].iter().copied().find(|&j| {
                let a = lp.vals[lp.col_start[j]];
                let v = x[j] + residual[i] / a;
                v >= lo[j] - FEAS_TOL && v <= hi[j] + FEAS_TOL && position[j] == NONBASIC
            });
            if let Some(j) = crash {
                let a = lp.vals[lp.col_start[j]];
                x[j] = (x[j] + residual[i] / a).clamp(lo[j], hi[j]);
                basis[i] = j;
                position[j] = i;
                diag[i] = a;
                continue;
            }
            let s = n + i;
            let r = residual[i];
            if r >= lo[s] - FEAS_TOL && r <= hi[s] + FEAS_TOL {
                x[s] = r;
                basis[i] = s;
                position[s] = i;
            } else {
                // Slack parks at its violated bound; an artificial covers the rest.
                let bound = if r < lo[s] { lo[s] } else { hi[s] };
                x[s] = bound;
                let sign = if r - bound >= 0.0 { 1.0 } else { -1.0 };
                artificials.push((i, sign));
                basis[i] = usize::MAX - 1; // patched below
                diag[i] = sign;
            }
        }
        let n_total = n + m + artificials.len();
        position.resize(n_total, NONBASIC);
        for (k, &(row, sign)) in artificials.iter().enumerate() {
            let j = n + m + k;
            let s = n + row;
            let value = (residual[row] - x[s]) * sign;
            lo.push(0.0);
            hi.push(f64::INFINITY);
            x.push(value);
            basis[row] = j;
            position[j] = row;
        }
        let mut at_upper = vec![false; n_total];
        for j in 0..n_total {
            if position[j] == NONBASIC && hi[j].is_finite() && x[j] == hi[j] && lo[j] != hi[j] {
                at_upper[j] = true;
            }
        }
        let mut binv = vec![0.0; m * m];
        for i in 0..m {
            binv[i * m + i] = 1.0 / diag[i];
        }

        Self {
            lp,
            m,
            n_total,
            artificials,
            lo,
            hi,
            x,
            cost: vec![0.0; n_total],
            basis,
            position,
            at_upper,
            binv,
            y: vec![0.0; m],
            iterations: 0,
            iteration_limit,
            since_refactor: 0,
        }
    }

    fn warm(
        lp: &'a PreparedLp,
        lower: &[f64],
        upper: &[f64],
        start: &Basis,
        iteration_limit: usize,
    ) -> Option<Self> {
        let (n, m) = (lp.n, lp.m);
        let mut lo = lower.to_vec();
        let mut hi = upper.to_vec();
        for sense in &lp.senses {
            let (l, h) = match sense {
                RowSense::Le => (0.0, f64::INFINITY),
                RowSense::Ge => (f64::NEG_INFINITY, 0.0),
                RowSense::Eq => (0.0, 0.0),
            };
            lo.push(l);
            hi.push(h);
        }
        let n_total = n + m;
        let mut position = vec![NONBASIC; n_total];
        for (r, &j) in start.basic.iter().enumerate() {
            if position[j] != NONBASIC {
                return None;
            }
            position[j] = r;
        }
        let mut upper_flag = vec![false; n_total];
        for &j in &start.at_upper {
            upper_flag[j] = true;
        }
        let mut x = vec![0.0; n_total];
        let mut at_upper = vec![false; n_total];
        for j in 0..n_total {
            if position[j] != NONBASIC {
                continue;
            }
            let (l, h) = (lo[j], hi[j]);
            let v = if (upper_flag[j] && h.is_finite()) || !l.is_finite() {
                h
            } else {
                l
            };
            if !v.is_finite() {
                return None;
            }
            x[j] = v;
            at_upper[j] = v == h && l != h;
        }
        let mut cost = vec![0.0; n_total];
        cost[..n].copy_from_slice(&lp.objective);
        let mut sx = Self {
            lp,
            m,
            n_total,
            artificials: Vec::new(),
            lo,
            hi,
            x,
            cost,
            basis: start.basic.clone(),
            position,
            at_upper,
            binv: vec![0.0; m * m],
            y: vec![0.0; m],
            iterations: 0,
            iteration_limit,
            since_refactor: 0,
        };
        sx.refactor().ok()?;
        // Restore dual feasibility by bound flips where the box allows it.
        for j in 0..n_total {
            if sx.position[j] != NONBASIC || sx.lo[j] == sx.hi[j] {
                continue;
            }
            let d = sx.reduced_cost(j);
            let wrong = if sx.at_upper[j] {
                d < -OPT_TOL
            } else {
                d > OPT_TOL
            };
            if wrong {
                if !(sx.lo[j].is_finite() && sx.hi[j].is_finite()) {
                    return None;
                }
                sx.at_upper[j] = !sx.at_upper[j];
                sx.x[j] = if sx.at_upper[j] { sx.hi[j] } else { sx.lo[j] };
            }
        }
        sx.refactor().ok()?;
        Some(sx)
    }

    /// Dual simplex from a dual-feasible basis, then a primal clean-up pass.
    /// `None` means the warm start broke down and a cold solve is needed.
    fn dual_run(&mut self) -> Result<Option<LpSolution>> {
        let m = self.m;
        let n_total = self.n_total;
        let mut alpha = vec![0.0; m];
        let mut row_alpha = vec![0.0; n_total];
        loop {
            if self.iterations >= self.iteration_limit {
                return Ok(Some(self.finish(LpStatus::IterationLimit)));
            }
            // Leaving row: largest bound violation.
            let mut leave: Option<(usize, f64)> = None;
            for r in 0..m {
                let b = self.basis[r];
                let viol = if self.x[b] < self.lo[b] - FEAS_TOL {
                    self.lo[b] - self.x[b]
                } else if self.x[b] > self.hi[b] + FEAS_TOL {
                    self.x[b] - self.hi[b]
                } else {
                    0.0
                };
                if viol > 0.0 && leave.is_none_or(|(_, v)| viol > v) {
                    leave = Some((r, viol));
                }
            }
            let Some((r, _)) = leave else {
                break;
            };
            self.iterations += 1;
            let b = self.basis[r];
            let below = self.x[b] < self.lo[b];
            let rho = &self.binv[r * m..(r + 1) * m];
            let mut best: Option<(usize, f64, f64)> = None;
            for j in 0..n_total {
                row_alpha[j] = 0.0;
                if self.position[j] != NONBASIC || self.lo[j] == self.hi[j] {
                    continue;
                }
                let mut a = 0.0;
                self.for_column(j, |i, v| a += rho[i] * v);
                row_alpha[j] = a;
                // x_b moves by -a per unit increase of x_j.
                let eligible = match (below, self.at_upper[j]) {
                    (true, false) => a < -PIVOT_TOL,
                    (true, true) => a > PIVOT_TOL,
                    (false, false) => a > PIVOT_TOL,
                    (false, true) => a < -PIVOT_TOL,
                };
                if !eligible {
                    continue;
                }
                let ratio = (self.reduced_cost(j) / a).abs();
                let better = match best {
                    None => true,
                    Some((_, br, ba)) => {
                        ratio < br - 1e-12 || (ratio <= br + 1e-12 && a.abs() > ba)
                    }
                };
                if better {
                    best = Some((j, ratio, a.abs()));
                }
            }
            let Some((q, _, _)) = best else {
                return Ok(Some(self.finish(LpStatus::Infeasible)));
            };
            alpha.iter_mut().for_each(|v| *v = 0.0);
            self.for_column(q, |k, a| {
                for (i, al) in alpha.iter_mut().enumerate() {
                    *al += self.binv[i * m + k] * a;
                }
            });
            if (alpha[r] - row_alpha[q]).abs() > 1e-6 * (1.0 + alpha[r].abs()) {
                log::debug!("dual simplex: inconsistent pivot, refactoring");
                self.refactor()?;
                continue;
            }
            let target = if below { self.lo[b] } else { self.hi[b] };
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };
            let t = (self.x[b] - target) / (dir * alpha[r]);
            let dq = self.reduced_cost(q);
            self.step(q, dir, t, &alpha);
            self.x[b] = target;
            self.position[b] = NONBASIC;
            self.at_upper[b] = !below && self.lo[b] != self.hi[b];
            self.basis[r] = q;
            self.position[q] = r;
            self.at_upper[q] = false;
            self.pivot_update(r, &alpha, dq);
            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_INTERVAL {
                self.refactor()?;
            }
        }
        // Primal pass mops up reduced costs that drifted past tolerance.
        let status = match self.optimize()? {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Unbounded => return Ok(None),
            Outcome::IterationLimit => LpStatus::IterationLimit,
        };
        Ok(Some(self.finish(status)))
    }

    /// Basis-inverse and dual update after row `r` takes the column `alpha`.
    fn pivot_update(&mut self, r: usize, alpha: &[f64], dq: f64) {
        let m = self.m;
        let piv = alpha[r];
        {
            let (before, rest) = self.binv.split_at_mut(r * m);
            let (row_r, after) = rest.split_at_mut(m);
            row_r.iter_mut().for_each(|v| *v /= piv);
            for (i, &al) in alpha.iter().enumerate() {
                if i == r || al == 0.0 {
                    continue;
                }
                let row_i = if i < r {
                    &mut before[i * m..(i + 1) * m]
                } else {
                    let off = (i - r - 1) * m;
                    &mut after[off..off + m]
                };
                for (v, p) in row_i.iter_mut().zip(row_r.iter()) {
                    *v -= al * p;
                }
            }
        }
        for (yk, p) in self.y.iter_mut().zip(&self.binv[r * m..(r + 1) * m]) {
            *yk += dq * p;
        }
    }

    fn for_column(&self, j: usize, mut f: impl FnMut(usize, f64)) {
        let n = self.lp.n;
        if j < n {
            for k in self.lp.col_start[j]..self.lp.col_start[j + 1] {
                f(self.lp.row_idx[k], self.lp.vals[k]);
            }
        } else if j < n + self.m {
            f(j - n, 1.0);
        } else {
            let (row, sign) = self.artificials[j - n - self.m];
            f(row, sign);
        }
    }

    fn run(mut self) -> Result<LpSolution> {
        let n = self.lp.n;
        let n_art = self.artificials.len();
        if n_art > 0 {
            for j in n + self.m..self.n_total {
                self.cost[j] = -1.0;
            }
            self.recompute_duals();
            let outcome = self.optimize()?;
            if let Outcome::IterationLimit = outcome {
                return Ok(self.finish(LpStatus::IterationLimit));
            }
            let infeasibility: f64 = (n + self.m..self.n_total).map(|j| self.x[j]).sum();
            if infeasibility > FEAS_TOL {
                return Ok(self.finish(LpStatus::Infeasible));
            }
            for j in n + self.m..self.n_total {
                self.cost[j] = 0.0;
                self.hi[j] = 0.0;
                if self.position[j] == NONBASIC {
                    self.x[j] = 0.0;
                    self.at_upper[j] = false;
                }
            }
        }
        self.cost[..n].copy_from_slice(&self.lp.objective);
        self.recompute_duals();
        let status = match self.optimize()? {
            Outcome::Optimal => LpStatus::Optimal,
            Outcome::Unbounded => LpStatus::Unbounded,
            Outcome::IterationLimit => LpStatus::IterationLimit,
        };
        Ok(self.finish(status))
    }

    fn finish(&self, status: LpStatus) -> LpSolution {
        let n = self.lp.n;
        let x = self.x[..n].to_vec();
        let objective = match status {
            LpStatus::Infeasible => f64::NEG_INFINITY,
            LpStatus::Unbounded => f64::INFINITY,
            _ => self.lp.objective.iter().zip(&x).map(|(c, v)| c * v).sum(),
        };
        log::debug!(
            "simplex finished: {status:?}, {} rows, {} columns, {} iterations",
            self.m,
            n,
            self.iterations
        );
        let structural = n + self.m;
        let basis = (status == LpStatus::Optimal && self.basis.iter().all(|&j| j < structural))
            .then(|| Basis {
                basic: self.basis.clone(),
                at_upper: (0..structural)
                    .filter(|&j| self.position[j] == NONBASIC && self.at_upper[j])
                    .collect(),
            });
        let reduced_costs = if status == LpStatus::Optimal {
            let m = self.m;
            let mut y = vec![0.0; m];
            for r in 0..m {
                let c = self.cost[self.basis[r]];
                if c != 0.0 {
                    for (yk, b) in y.iter_mut().zip(&self.binv[r * m..(r + 1) * m]) {
                        *yk += c * b;
                    }
                }
            }
            (0..n)
                .map(|j| {
                    if self.position[j] != NONBASIC {
                        return 0.0;
                    }
                    let mut d = self.cost[j];
                    self.for_column(j, |i, a| d -= y[i] * a);
                    d
                })
                .collect()
        } else {
            Vec::new()
        };
        LpSolution {
            status,
            objective,
            x,
            iterations: self.iterations,
            basis,
            reduced_costs,
        }
    }

    fn recompute_duals(&mut self) {
        let m = self.m;
        self.y.iter_mut().for_each(|v| *v = 0.0);
        for r in 0..m {
            let c = self.cost[self.basis[r]];
            if c != 0.0 {
                let row = &self.binv[r * m..(r + 1) * m];
                for (yk, b) in self.y.iter_mut().zip(row) {
                    *yk += c * b;
                }
            }
        }
    }

    fn reduced_cost(&self, j: usize) -> f64 {
        let mut d = self.cost[j];
        self.for_column(j, |i, a| d -= self.y[i] * a);
        d
    }

    fn price(&self, bland: bool) -> Option<(usize, f64)> {
        let mut best: Option<(usize, f64)> = None;
        for j in 0..self.n_total {
            if self.position[j] != NONBASIC || self.lo[j] == self.hi[j] {
                continue;
            }
            let d = self.reduced_cost(j);
            let eligible = if self.at_upper[j] {
                d < -OPT_TOL
            } else {
                d > OPT_TOL
            };
            if !eligible {
                continue;
            }
            if bland {
                return Some((j, d));
            }
            if best.is_none_or(|(_, bd)| d.abs() > bd.abs()) {
                best = Some((j, d));
            }
        }
        best
    }

    fn optimize(&mut self) -> Result<Outcome> {
        let m = self.m;
        let mut degenerate_run = 0usize;
        let mut alpha = vec![0.0; m];
        loop {
            if self.iterations >= self.iteration_limit {
                return Ok(Outcome::IterationLimit);
            }
            let bland = degenerate_run >= STALL_THRESHOLD;
            let Some((q, dq)) = self.price(bland) else {
                return Ok(Outcome::Optimal);
            };
            self.iterations += 1;

            alpha.iter_mut().for_each(|v| *v = 0.0);
            self.for_column(q, |k, a| {
                for (i, al) in alpha.iter_mut().enumerate() {
                    *al += self.binv[i * m + k] * a;
                }
            });
            let dir = if self.at_upper[q] { -1.0 } else { 1.0 };

            let mut t_min = f64::INFINITY;
            for (i, &al) in alpha.iter().enumerate() {
                if let Some(t) = self.row_limit(i, dir * al) {
                    t_min = t_min.min(t);
                }
            }
            let flip = self.hi[q] - self.lo[q];
            if flip <= t_min {
                if !flip.is_finite() {
                    return Ok(Outcome::Unbounded);
                }
                // Bound flip; the basis is unchanged.
                self.step(q, dir, flip, &alpha);
                self.at_upper[q] = !self.at_upper[q];
                self.x[q] = if self.at_upper[q] {
                    self.hi[q]
                } else {
                    self.lo[q]
                };
                degenerate_run = 0;
                continue;
            }
            // Among near-ties prefer the largest pivot, or the lowest index under Bland.
            let mut r = usize::MAX;
            for (i, &al) in alpha.iter().enumerate() {
                let Some(t) = self.row_limit(i, dir * al) else {
                    continue;
                };
                if t > t_min + 1e-12 {
                    continue;
                }
                if r == usize::MAX {
                    r = i;
                } else if bland {
                    if self.basis[i] < self.basis[r] {
                        r = i;
                    }
                } else if al.abs() > alpha[r].abs() {
                    r = i;
                }
            }
            let t = t_min.max(0.0);
            degenerate_run = if t <= 1e-12 { degenerate_run + 1 } else { 0 };

            self.step(q, dir, t, &alpha);
            let leaving = self.basis[r];
            let rate = dir * alpha[r];
            if rate > 0.0 {
                self.x[leaving] = self.lo[leaving];
                self.at_upper[leaving] = false;
            } else {
                self.x[leaving] = self.hi[leaving];
                self.at_upper[leaving] = self.lo[leaving] != self.hi[leaving];
            }
            self.position[leaving] = NONBASIC;
            self.basis[r] = q;
            self.position[q] = r;
            self.at_upper[q] = false;

            self.pivot_update(r, &alpha, dq);

            self.since_refactor += 1;
            if self.since_refactor >= REFACTOR_INTERVAL {
                self.refactor()?;
            }
        }
    }

    /// Step length at which basic row `i` hits a bound when it moves at `-rate` per unit.
    fn row_limit(&self, i: usize, rate: f64) -> Option<f64> {
        let b = self.basis[i];
        if rate > PIVOT_TOL && self.lo[b].is_finite() {
            Some(((self.x[b] - self.lo[b]) / rate).max(0.0))
        } else if rate < -PIVOT_TOL && self.hi[b].is_finite() {
            Some(((self.hi[b] - self.x[b]) / -rate).max(0.0))
        } else {
            None
        }
    }

    fn step(&mut self, q: usize, dir: f64, t: f64, alpha: &[f64]) {
        if t == 0.0 {
            return;
        }
        self.x[q] += dir * t;
        for (i, &al) in alpha.iter().enumerate() {
            if al != 0.0 {
                self.x[self.basis[i]] -= dir * t * al;
            }
        }
    }

    /// Rebuilds the basis inverse by Gauss-Jordan elimination, then the
    /// basic values and duals from it.
    fn refactor(&mut self) -> Result<()> {
        let m = self.m;
        let w = 2 * m;
        let mut aug = vec![0.0; m * w];
        for r in 0..m {
            let j = self.basis[r];
            self.for_column(j, |i, a| aug[i * w + r] = a);
            aug[r * w + m + r] = 1.0;
        }
        for c in 0..m {
            let p = (c..m)
                .max_by(|&a, &b| aug[a * w + c].abs().total_cmp(&aug[b * w + c].abs()))
                .expect("non-empty range");
            let piv = aug[p * w + c];
            if piv.abs() < 1e-12 {
                return Err(Error::Undefined(
                    "numerically singular simplex basis".into(),
                ));
            }
            if p != c {
                for k in 0..w {
                    aug.swap(p * w + k, c * w + k);
                }
            }
            for k in 0..w {
                aug[c * w + k] /= piv;
            }
            let pivot_row: Vec<(usize, f64)> = (0..w)
                .filter_map(|k| {
                    let v = aug[c * w + k];
                    (v != 0.0).then_some((k, v))
                })
                .collect();
            for i in 0..m {
                if i == c {
                    continue;
                }
                let f = aug[i * w + c];
                if f == 0.0 {
                    continue;
                }
                for &(k, v) in &pivot_row {
                    aug[i * w + k] -= f * v;
                }
            }
        }
        for i in 0..m {
            self.binv[i * m..(i + 1) * m].copy_from_slice(&aug[i * w + m..(i + 1) * w]);
        }

        let mut rhs = self.lp.rhs.clone();
        for j in 0..self.n_total {
            if self.position[j] == NONBASIC && self.x[j] != 0.0 {
                let v = self.x[j];
                self.for_column(j, |i, a| rhs[i] -= a * v);
            }
        }
        for r in 0..m {
            let row = &self.binv[r * m..(r + 1) * m];
            self.x[self.basis[r]] = row.iter().zip(&rhs).map(|(b, v)| b * v).sum();
        }
        self.recompute_duals();
        self.since_refactor = 0;
        Ok(())
    }
}
