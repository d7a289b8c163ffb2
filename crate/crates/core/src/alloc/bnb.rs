use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::time::{Duration, Instant};

use super::{
    solve_greedy, AllocationProblem, Fairness, FairnessRow, Policy, SolveReport, SolveStatus,
    FEASIBILITY_TOL,
};
use crate::error::Result;
use crate::lpcore::{Basis, LpProblem, LpStatus, PreparedLp, RowSense};

/// Distance from 0 or 1 below which an LP value counts as integral.
pub const INTEGRALITY_TOL: f64 = 1e-6;
/// Nodes whose bound does not beat the incumbent by this much are pruned.
const PRUNE_TOL: f64 = 1e-9;
/// Safety margin on reduced-cost fixing against round-off in the duals.
const FIXING_MARGIN: f64 = 1e-7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BnbOptions {
    pub node_limit: usize,
    pub time_limit: Option<Duration>,
    /// Relative optimality gap at which a node counts as no better than the
    /// incumbent. Zero proves optimality up to round-off; a positive value
    /// trades exactness for speed and the remaining gap is reported.
    pub rel_gap: f64,
}

impl Default for BnbOptions {
    fn default() -> Self {
        Self {
            node_limit: 1_000_000,
            time_limit: None,
            rel_gap: 0.0,
        }
    }
}

struct Node {
    bound: f64,
    id: usize,
    /// `(variable, fixed to one)` decisions from the root.
    fixings: Vec<(u32, bool)>,
    /// Fractional variables to branch on, most fractional first.
    candidates: Vec<usize>,
    basis: Option<Basis>,
}

impl PartialEq for Node {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Node {}
impl PartialOrd for Node {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Node {
    /// Higher bound first, then the newer node, so ties dive instead of
    /// sweeping a level at a time.
    fn cmp(&self, other: &Self) -> Ordering {
        self.bound
            .total_cmp(&other.bound)
            .then(self.id.cmp(&other.id))
    }
}

/// Assembles the relaxation in sparse form. Variable `i * w + d` is the
/// indicator that entity `i` gets dose `d`.
fn relaxation_parts(
    prob: &AllocationProblem,
) -> (Vec<Vec<(usize, f64)>>, Vec<f64>, Vec<RowSense>, Vec<f64>) {
    let n = prob.n_entities();
    let w = prob.n_doses();
    let (rows, _) = prob.fairness_rows();
    let mut columns = Vec::with_capacity(n * w);
    let mut objective = Vec::with_capacity(n * w);
    for i in 0..n {
        for d in 0..w {
            let mut col = vec![(i, 1.0)];
            let c = prob.costs.get(i, d);
            if c != 0.0 {
                col.push((n, c));
            }
            for (k, r) in rows.iter().enumerate() {
                let a = r.coef[i * w + d];
                if a != 0.0 {
                    col.push((n + 1 + k, a));
                }
            }
            columns.push(col);
            objective.push(prob.value(i, d));
        }
    }
    let mut senses = vec![RowSense::Eq; n];
    let mut rhs = vec![1.0; n];
    senses.push(RowSense::Le);
    rhs.push(prob.budget);
    for r in &rows {
        senses.push(if r.at_least {
            RowSense::Ge
        } else {
            RowSense::Le
        });
        rhs.push(0.0);
    }
    (columns, objective, senses, rhs)
}

impl AllocationProblem {
    /// The LP relaxation as a dense problem, mainly for inspection and tests.
    pub fn relaxation(&self) -> LpProblem {
        let (columns, objective, senses, rhs) = relaxation_parts(self);
        let nv = columns.len();
        let mut matrix = vec![0.0; rhs.len() * nv];
        for (j, col) in columns.iter().enumerate() {
            for &(i, a) in col {
                matrix[i * nv + j] = a;
            }
        }
        LpProblem {
            objective,
            matrix,
            senses,
            rhs,
            lower: vec![0.0; nv],
            upper: vec![1.0; nv],
        }
    }
}

struct Search<'a> {
    prob: &'a AllocationProblem,
    lp: PreparedLp,
    w: usize,
    incumbent: Policy,
    incumbent_value: f64,
    /// Bounds of nodes that could not be resolved (LP iteration limit).
    unresolved: Vec<f64>,
    rows: Vec<FairnessRow>,
    rel_gap: f64,
    /// Best bound among nodes closed only thanks to `rel_gap`.
    tolerated: f64,
}

/// Fractional variables scored per node by strong branching.
const STRONG_CANDIDATES: usize = 8;
/// Largest number of roundings the enumeration heuristic tries per node.
const ROUNDING_COMBINATIONS: usize = 4096;

enum Evaluated {
    Pruned,
    Open {
        bound: f64,
        candidates: Vec<usize>,
        basis: Option<Basis>,
        /// Variables the reduced costs prove cannot differ from their LP
        /// value in any solution that beats the incumbent.
        fixed: Vec<(u32, bool)>,
    },
}

impl Search<'_> {
    fn prunable(&mut self, bound: f64) -> bool {
        if bound <= self.incumbent_value + PRUNE_TOL {
            return true;
        }
        if bound <= self.incumbent_value + self.rel_gap * self.incumbent_value.abs() {
            self.tolerated = self.tolerated.max(bound);
            return true;
        }
        false
    }

    fn bounds_for(&self, fixings: &[(u32, bool)]) -> (Vec<f64>, Vec<f64>) {
        let nv = self.lp.n_vars();
        let mut lower = vec![0.0; nv];
        let mut upper = vec![1.0; nv];
        for &(j, one) in fixings {
            let j = j as usize;
            if one {
                let i = j / self.w;
                for k in i * self.w..(i + 1) * self.w {
                    upper[k] = 0.0;
                }
                upper[j] = 1.0;
                lower[j] = 1.0;
            } else {
                upper[j] = 0.0;
            }
        }
        (lower, upper)
    }

    fn offer(&mut self, doses: Vec<usize>) -> Result<()> {
        let policy = Policy::from_doses(doses, self.w)?;
        if self.prob.is_feasible(&policy, FEASIBILITY_TOL)? {
            let v = self.prob.objective(&policy)?;
            if v > self.incumbent_value {
                log::debug!("incumbent {v}");
                self.incumbent_value = v;
                self.incumbent = policy;
            }
        }
        Ok(())
    }

    /// Keeps integral entities at their LP dose and tries every combination
    /// of support doses (plus dose 0) for the fractional ones.
    fn enumerate_roundings(&mut self, x: &[f64], argmax: &[usize]) -> Result<()> {
        let w = self.w;
        let prob = self.prob;
        let mut options: Vec<(usize, Vec<usize>)> = Vec::new();
        let mut combos = 1usize;
        for (i, row) in x.chunks(w).enumerate() {
            if row.iter().any(|&v| v >= 1.0 - INTEGRALITY_TOL) {
                continue;
            }
            let mut opts: Vec<usize> = (0..w)
                .filter(|&d| d == 0 || row[d] > INTEGRALITY_TOL)
                .collect();
            opts.sort_by(|&a, &b| prob.value(i, b).total_cmp(&prob.value(i, a)));
            combos = combos.saturating_mul(opts.len());
            options.push((i, opts));
        }
        if options.is_empty() || combos > ROUNDING_COMBINATIONS {
            return Ok(());
        }
        let mut doses = argmax.to_vec();
        for (i, _) in &options {
            doses[*i] = 0;
        }
        let mut cost = 0.0;
        let mut value = 0.0;
        let mut lhs = vec![0.0; self.rows.len()];
        for (i, &d) in doses.iter().enumerate() {
            cost += prob.costs.get(i, d);
            value += prob.value(i, d);
            for (l, r) in lhs.iter_mut().zip(&self.rows) {
                *l += r.coef[i * w + d];
            }
        }
        let mut best: Option<(f64, Vec<usize>)> = None;
        let mut pick = vec![0usize; options.len()];
        loop {
            let mut c = cost;
            let mut v = value;
            let mut l = lhs.clone();
            for (k, (i, opts)) in options.iter().enumerate() {
                let d = opts[pick[k]];
                c += prob.costs.get(*i, d);
                v += prob.value(*i, d);
                for (lk, r) in l.iter_mut().zip(&self.rows) {
                    *lk += r.coef[i * w + d] - r.coef[i * w];
                }
            }
            let feasible = c <= prob.budget + FEASIBILITY_TOL
                && l.iter().zip(&self.rows).all(|(&lk, r)| {
                    if r.at_least {
                        lk >= -FEASIBILITY_TOL
                    } else {
                        lk <= FEASIBILITY_TOL
                    }
                });
            if feasible && v > self.incumbent_value && best.as_ref().is_none_or(|(bv, _)| v > *bv) {
                let mut ds = doses.clone();
                for (k, (i, opts)) in options.iter().enumerate() {
                    ds[*i] = opts[pick[k]];
                }
                best = Some((v, ds));
            }
            // Odometer step.
            let mut k = 0;
            loop {
                if k == pick.len() {
                    if let Some((_, ds)) = best {
                        self.offer(ds)?;
                    }
                    return Ok(());
                }
                pick[k] += 1;
                if pick[k] < options[k].1.len() {
                    break;
                }
                pick[k] = 0;
                k += 1;
            }
        }
    }

    /// Solves the node relaxation, updates the incumbent and picks the
    /// branching variable.
    fn evaluate(
        &mut self,
        fixings: &[(u32, bool)],
        parent_bound: f64,
        warm: Option<&Basis>,
    ) -> Result<(Evaluated, Option<f64>)> {
        let (lower, upper) = self.bounds_for(fixings);
        let nv = self.lp.n_vars();
        let limit = 100 * (self.lp.n_rows() + nv);
        let mut sol = match warm {
            Some(b) => self.lp.solve_warm(&lower, &upper, b, limit)?,
            None => self.lp.solve_with_bounds(&lower, &upper)?,
        };
        if sol.status == LpStatus::IterationLimit {
            let limit = 1000 * (self.lp.n_rows() + nv);
            sol = self.lp.solve_with_limit(&lower, &upper, limit)?;
        }
        match sol.status {
            LpStatus::Optimal => {}
            LpStatus::Infeasible => return Ok((Evaluated::Pruned, None)),
            LpStatus::Unbounded | LpStatus::IterationLimit => {
                log::warn!(
                    "node relaxation unresolved ({:?}); keeping its parent bound",
                    sol.status
                );
                self.unresolved.push(parent_bound);
                return Ok((Evaluated::Pruned, None));
            }
        }
        let bound = sol.objective;
        let basis = sol.basis.take();
        let x = &sol.x;

        // Rounding heuristics: per-entity argmax, and the lowest dose in support.
        let n = self.prob.n_entities();
        let w = self.w;
        let mut argmax = Vec::with_capacity(n);
        let mut lowest = Vec::with_capacity(n);
        for i in 0..n {
            let row = &x[i * w..(i + 1) * w];
            let mut a = 0;
            for d in 1..w {
                if row[d] > row[a] + INTEGRALITY_TOL {
                    a = d;
                }
            }
            argmax.push(a);
            lowest.push((0..w).find(|&d| row[d] > INTEGRALITY_TOL).unwrap_or(0));
        }
        let integral = x
            .iter()
            .all(|&v| v <= INTEGRALITY_TOL || v >= 1.0 - INTEGRALITY_TOL);
        let same = argmax == lowest;
        self.offer(argmax.clone())?;
        if !same {
            self.offer(lowest)?;
        }
        if !integral {
            self.enumerate_roundings(x, &argmax)?;
        }
        if self.prunable(bound) {
            return Ok((Evaluated::Pruned, Some(bound)));
        }

        let candidates: Vec<usize> = if integral {
            // The LP point is integral yet the exact check rejected it (or it
            // is worse than claimed). Exclude it by branching on its most
            // expensive positive dose.
            let candidate = (0..n)
                .filter(|&i| argmax[i] > 0 && lower[i * w + argmax[i]] < 1.0)
                .max_by(|&a, &b| {
                    self.prob
                        .costs
                        .get(a, argmax[a])
                        .total_cmp(&self.prob.costs.get(b, argmax[b]))
                        .then(b.cmp(&a))
                });
            match candidate {
                Some(i) => vec![i * w + argmax[i]],
                None => return Ok((Evaluated::Pruned, Some(bound))),
            }
        } else {
            let mut frac: Vec<(usize, f64)> = x
                .iter()
                .enumerate()
                .map(|(j, &v)| (j, v.min(1.0 - v)))
                .filter(|&(_, f)| f > INTEGRALITY_TOL)
                .collect();
            frac.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
            frac.truncate(STRONG_CANDIDATES);
            frac.into_iter().map(|(j, _)| j).collect()
        };
        let cutoff = self.incumbent_value - FIXING_MARGIN;
        let mut fixed = Vec::new();
        for (j, &d) in sol.reduced_costs.iter().enumerate() {
            if upper[j] <= lower[j] || candidates.contains(&j) {
                continue;
            }
            if x[j] <= INTEGRALITY_TOL && d < 0.0 && bound + d < cutoff {
                fixed.push((j as u32, false));
            } else if x[j] >= 1.0 - INTEGRALITY_TOL && d > 0.0 && bound - d < cutoff {
                fixed.push((j as u32, true));
            }
        }
        Ok((
            Evaluated::Open {
                bound,
                candidates,
                basis,
                fixed,
            },
            Some(bound),
        ))
    }
}

/// Exact branch-and-bound with LP relaxations and best-bound search.
pub fn solve_bnb(prob: &AllocationProblem, opts: &BnbOptions) -> Result<SolveReport> {
    let started = Instant::now();
    let (rows, warnings) = prob.fairness_rows();
    let n = prob.n_entities();
    let w = prob.n_doses();
    let (columns, objective, senses, rhs) = relaxation_parts(prob);
    let nv = columns.len();
    let lp = PreparedLp::from_columns(
        &columns,
        objective,
        senses,
        rhs,
        vec![0.0; nv],
        vec![1.0; nv],
    )?;

    let (incumbent, incumbent_value) = if rows.is_empty() {
        let relaxed = AllocationProblem {
            fairness: Fairness::none(),
            ..prob.clone()
        };
        let g = solve_greedy(&relaxed)?;
        (g.policy, g.objective)
    } else {
        (Policy::all_zero(n, w), 0.0)
    };
    let mut search = Search {
        prob,
        lp,
        w,
        incumbent,
        incumbent_value,
        unresolved: Vec::new(),
        rows,
        rel_gap: opts.rel_gap,
        tolerated: f64::NEG_INFINITY,
    };

    let mut heap = BinaryHeap::new();
    let mut next_id = 0usize;
    let mut nodes = 1usize;
    let (root, root_bound) = search.evaluate(&[], f64::INFINITY, None)?;
    if let Evaluated::Open {
        bound,
        candidates,
        basis,
        fixed,
    } = root
    {
        heap.push(Node {
            bound,
            id: next_id,
            fixings: fixed,
            candidates,
            basis,
        });
        next_id += 1;
    }

    let mut hit_limit = false;
    while let Some(node) = heap.pop() {
        if search.prunable(node.bound) {
            heap.clear();
            break;
        }
        let out_of_time = opts.time_limit.is_some_and(|t| started.elapsed() >= t);
        if nodes >= opts.node_limit || out_of_time {
            heap.push(node);
            hit_limit = true;
            break;
        }
        // Strong branching: try each candidate's two children and keep
        // the pair whose bounds drop the most.
        let mut best: Option<(f64, Vec<(Vec<(u32, bool)>, Evaluated)>)> = None;
        for &var in &node.candidates {
            let mut children = Vec::with_capacity(2);
            let mut score = 1.0;
            for one in [true, false] {
                let mut fixings = node.fixings.clone();
                fixings.push((var as u32, one));
                nodes += 1;
                let (child, child_bound) =
                    search.evaluate(&fixings, node.bound, node.basis.as_ref())?;
                let floor = child_bound
                    .unwrap_or(f64::NEG_INFINITY)
                    .max(search.incumbent_value);
                score *= (node.bound - floor).max(1e-9);
                children.push((fixings, child));
            }
            let done = children.iter().all(|(_, c)| matches!(c, Evaluated::Pruned));
            if best.as_ref().is_none_or(|(s, _)| score > *s) {
                best = Some((score, children));
            }
            if done || node.candidates.len() == 1 {
                break;
            }
        }
        for (mut fixings, child) in best.map(|(_, c)| c).unwrap_or_default() {
            if let Evaluated::Open {
                bound,
                candidates,
                basis,
                fixed,
            } = child
            {
                if search.prunable(bound) {
                    continue;
                }
                fixings.extend(fixed);
                heap.push(Node {
                    bound,
                    id: next_id,
                    fixings,
                    candidates,
                    basis,
                });
                next_id += 1;
            }
        }
    }

    let open_bound = heap
        .iter()
        .map(|nd| nd.bound)
        .chain(search.unresolved.iter().copied())
        .fold(f64::NEG_INFINITY, f64::max);
    let limited = hit_limit || !search.unresolved.is_empty();
    let status = if limited {
        SolveStatus::Limit
    } else {
        SolveStatus::Optimal
    };
    let mut report = SolveReport::finish(prob, status, search.incumbent, started)?;
    report.nodes = nodes;
    report.root_bound = root_bound;
    if limited {
        report.gap = Some((open_bound - report.objective).max(0.0));
        log::warn!(
            "branch-and-bound stopped after {nodes} nodes with gap {:?}",
            report.gap
        );
    } else if search.tolerated > report.objective + PRUNE_TOL {
        report.gap = Some(search.tolerated - report.objective);
    }
    report.warnings = warnings;
    Ok(report)
}
