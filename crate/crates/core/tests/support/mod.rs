//! Shared helpers for the integration tests: an independent dense tableau
//! simplex and random instance generators.
#![allow(dead_code)]

use dosealloc::alloc::CostMatrix;
use dosealloc::estimators::{CadeMatrix, Provenance};
use dosealloc::lpcore::{LpProblem, RowSense};
use dosealloc::{AllocationProblem, Fairness, Policy};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const EPS: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub enum Reference {
    Optimal { objective: f64, x: Vec<f64> },
    Infeasible,
    Unbounded,
}

/// Textbook two-phase tableau simplex with Bland's rule. Slow and simple on
/// purpose: it shares no code with the library solver.
pub fn tableau_simplex(p: &LpProblem) -> Reference {
    let n = p.objective.len();
    let m0 = p.rhs.len();
    // Shift x = y + lower so y >= 0; finite upper bounds become rows.
    let mut rows: Vec<(Vec<f64>, RowSense, f64)> = Vec::new();
    for i in 0..m0 {
        let a = p.matrix[i * n..(i + 1) * n].to_vec();
        let shift: f64 = a.iter().zip(&p.lower).map(|(x, l)| x * l).sum();
        rows.push((a, p.senses[i], p.rhs[i] - shift));
    }
    for j in 0..n {
        if p.upper[j].is_finite() {
            let mut a = vec![0.0; n];
            a[j] = 1.0;
            rows.push((a, RowSense::Le, p.upper[j] - p.lower[j]));
        }
    }
    for r in rows.iter_mut() {
        if r.2 < 0.0 {
            r.0.iter_mut().for_each(|v| *v = -*v);
            r.2 = -r.2;
            r.1 = match r.1 {
                RowSense::Le => RowSense::Ge,
                RowSense::Ge => RowSense::Le,
                RowSense::Eq => RowSense::Eq,
            };
        }
    }
    let m = rows.len();
    let n_slack = rows.iter().filter(|r| r.1 != RowSense::Eq).count();
    let n_art = rows.iter().filter(|r| r.1 != RowSense::Le).count();
    let cols = n + n_slack + n_art;
    // Tableau rows: constraint coefficients with the rhs in the last column.
    let mut t = vec![vec![0.0; cols + 1]; m];
    let mut basis = vec![0usize; m];
    let (mut s, mut a) = (n, n + n_slack);
    for (i, (coef, sense, b)) in rows.iter().enumerate() {
        t[i][..n].copy_from_slice(coef);
        t[i][cols] = *b;
        match sense {
            RowSense::Le => {
                t[i][s] = 1.0;
                basis[i] = s;
                s += 1;
            }
            RowSense::Ge => {
                t[i][s] = -1.0;
                s += 1;
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
            RowSense::Eq => {
                t[i][a] = 1.0;
                basis[i] = a;
                a += 1;
            }
        }
    }

    // Phase I maximizes minus the artificial sum.
    let mut cost = vec![0.0; cols];
    for c in cost.iter_mut().skip(n + n_slack) {
        *c = -1.0;
    }
    if !run_phase(&mut t, &mut basis, &cost, cols, usize::MAX) {
        unreachable!("phase one is bounded");
    }
    let infeas: f64 = (0..m)
        .filter(|&i| basis[i] >= n + n_slack)
        .map(|i| t[i][cols])
        .sum();
    if infeas > 1e-7 {
        return Reference::Infeasible;
    }
    // Drive zero-level artificials out of the basis where possible.
    for i in 0..m {
        if basis[i] >= n + n_slack {
            if let Some(q) = (0..n + n_slack).find(|&j| t[i][j].abs() > 1e-7) {
                pivot(&mut t, &mut basis, i, q);
            }
        }
    }
    let mut cost = vec![0.0; cols];
    cost[..n].copy_from_slice(&p.objective);
    if !run_phase(&mut t, &mut basis, &cost, cols, n + n_slack) {
        return Reference::Unbounded;
    }
    let mut y = vec![0.0; n];
    for i in 0..m {
        if basis[i] < n {
            y[basis[i]] = t[i][cols];
        }
    }
    let x: Vec<f64> = y.iter().zip(&p.lower).map(|(v, l)| v + l).collect();
    let objective = x.iter().zip(&p.objective).map(|(v, c)| v * c).sum();
    Reference::Optimal { objective, x }
}

/// Maximizes `cost` over the tableau; columns at or past `forbid` may not
/// enter. Returns false when unbounded.
fn run_phase(
    t: &mut [Vec<f64>],
    basis: &mut [usize],
    cost: &[f64],
    cols: usize,
    forbid: usize,
) -> bool {
    loop {
        let reduced = |j: usize, t: &[Vec<f64>]| {
            cost[j] - (0..t.len()).map(|i| cost[basis[i]] * t[i][j]).sum::<f64>()
        };
        let Some(q) = (0..cols.min(forbid)).find(|&j| !basis.contains(&j) && reduced(j, t) > EPS)
        else {
            return true;
        };
        let mut leave: Option<(usize, f64)> = None;
        for i in 0..t.len() {
            if t[i][q] > EPS {
                let ratio = t[i][cols] / t[i][q];
                let better = match leave {
                    None => true,
                    Some((r, best)) => {
                        ratio < best - 1e-12 || (ratio <= best + 1e-12 && basis[i] < basis[r])
                    }
                };
                if better {
                    leave = Some((i, ratio));
                }
            }
        }
        match leave {
            Some((r, _)) => pivot(t, basis, r, q),
            None => return false,
        }
    }
}

fn pivot(t: &mut [Vec<f64>], basis: &mut [usize], r: usize, q: usize) {
    let pv = t[r][q];
    t[r].iter_mut().for_each(|v| *v /= pv);
    let pivot_row = t[r].clone();
    for (i, row) in t.iter_mut().enumerate() {
        if i != r && row[q] != 0.0 {
            let f = row[q];
            row.iter_mut()
                .zip(&pivot_row)
                .for_each(|(v, p)| *v -= f * p);
        }
    }
    basis[r] = q;
}

/// A random bounded LP with a few rows of each sense. Bounds are finite so
/// every problem is either infeasible or has an optimum.
pub fn random_lp(rng: &mut ChaCha8Rng) -> LpProblem {
    let (n, m) = if rng.random_bool(0.5) {
        (rng.random_range(1..=6), rng.random_range(1..=5))
    } else {
        (rng.random_range(1..=20), rng.random_range(1..=20))
    };
    let matrix: Vec<f64> = (0..m * n)
        .map(|_| {
            if rng.random_bool(0.25) {
                0.0
            } else {
                rng.random_range(-5..=5) as f64
            }
        })
        .collect();
    let senses = (0..m)
        .map(|_| match rng.random_range(0..4) {
            0 => RowSense::Ge,
            1 => RowSense::Eq,
            _ => RowSense::Le,
        })
        .collect();
    let rhs = (0..m).map(|_| rng.random_range(-4..=10) as f64).collect();
    let lower: Vec<f64> = (0..n).map(|_| rng.random_range(-3..=1) as f64).collect();
    let upper = lower
        .iter()
        .map(|l| l + rng.random_range(0..=6) as f64)
        .collect();
    LpProblem {
        objective: (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
        matrix,
        senses,
        rhs,
        lower,
        upper,
    }
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Random effect matrix: row entry 0 is exactly zero, the rest in [-0.5, 1).
pub fn random_cade(rng: &mut ChaCha8Rng, n: usize, delta: usize) -> CadeMatrix {
    let rows = (0..n)
        .map(|_| {
            let mut r = vec![0.0];
            r.extend((0..delta).map(|_| rng.random_range(-0.5..1.0)));
            r
        })
        .collect();
    CadeMatrix::from_rows(rows, Provenance::Estimated).unwrap()
}

fn random_eps(rng: &mut ChaCha8Rng) -> Option<f64> {
    match rng.random_range(0..5) {
        0 => None,
        1 => Some(1.0),
        _ => Some(rng.random_range(0.0..0.8)),
    }
}

/// Small instance with random costs, benefits, groups and fairness slacks.
pub fn random_problem(rng: &mut ChaCha8Rng, max_n: usize, max_delta: usize) -> AllocationProblem {
    let n = rng.random_range(1..=max_n);
    let delta = rng.random_range(1..=max_delta);
    let t = random_cade(rng, n, delta);
    let costs = if rng.random_bool(0.5) {
        CostMatrix::proportional(n, delta)
    } else {
        let rows = (0..n)
            .map(|_| {
                let mut r = vec![0.0];
                let mut c = 0.0;
                for _ in 0..delta {
                    c += rng.random_range(0.05..1.0);
                    r.push(c);
                }
                r
            })
            .collect();
        CostMatrix::from_rows(rows).unwrap()
    };
    let benefits = (0..n).map(|_| rng.random_range(0.5..1.5)).collect();
    let groups: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.5))).collect();
    let max_cost: f64 = (0..n).map(|i| costs.get(i, delta)).sum();
    let budget = rng.random_range(0.0..=max_cost);
    let fairness = Fairness::new(random_eps(rng), random_eps(rng));
    AllocationProblem::new(t, costs, benefits, budget, groups, fairness).unwrap()
}

/// Budget-only instance with proportional costs and unit benefits.
pub fn random_budget_problem(
    rng: &mut ChaCha8Rng,
    max_n: usize,
    max_delta: usize,
) -> AllocationProblem {
    let n = rng.random_range(1..=max_n);
    let delta = rng.random_range(1..=max_delta);
    let t = random_cade(rng, n, delta);
    let budget = (rng.random_range(0.0..=n as f64) * 10.0).round() / 10.0;
    AllocationProblem::uplift(t, budget).unwrap()
}

/// Recomputes every constraint from scratch and returns the worst violation
/// of the fairness inequalities (zero when all hold).
pub fn check_policy(prob: &AllocationProblem, p: &Policy) -> f64 {
    let n = prob.n_entities();
    let w = prob.n_doses();
    let m = p.to_matrix();
    assert_eq!(m.len(), n);
    for row in &m {
        assert_eq!(row.len(), w);
        assert!(
            row.iter().all(|&v| v == 0.0 || v == 1.0),
            "non-binary row {row:?}"
        );
        assert_eq!(row.iter().sum::<f64>(), 1.0);
    }
    let cost: f64 = (0..n).map(|i| prob.costs.get(i, p.dose(i))).sum();
    assert!(
        cost <= prob.budget + 1e-9,
        "cost {cost} over budget {}",
        prob.budget
    );

    let n1 = prob.groups.iter().filter(|&&g| g == 1).count();
    let n0 = n - n1;
    if n0 == 0 || n1 == 0 {
        return 0.0;
    }
    let delta = (w - 1) as f64;
    let mut worst: f64 = 0.0;
    let pairs: [(Option<f64>, Box<dyn Fn(usize) -> f64>); 2] = [
        (prob.fairness.eps_dt, Box::new(|i| p.dose(i) as f64 / delta)),
        (
            prob.fairness.eps_do,
            Box::new(|i| prob.cade.get(i, p.dose(i))),
        ),
    ];
    for (eps, weight) in pairs {
        let Some(eps) = eps.filter(|&e| e < 1.0) else {
            continue;
        };
        let mean = |g: u8| {
            (0..n)
                .filter(|&i| prob.groups[i] == g)
                .map(&weight)
                .sum::<f64>()
                / if g == 0 { n0 } else { n1 } as f64
        };
        let (m0, m1) = (mean(0), mean(1));
        worst = worst.max((1.0 - eps) * m1 - m0).max(m0 - (1.0 + eps) * m1);
    }
    worst
}
