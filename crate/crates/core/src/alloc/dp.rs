use std::time::Instant;

use super::{AllocationProblem, Policy, SolveReport, SolveStatus};
use crate::error::{Error, Result};

/// Largest choice table the DP will allocate, in entries.
const MAX_TABLE: f64 = 4e8;

fn scaled_cost(c: f64, resolution: u32) -> Option<usize> {
    let v = c * f64::from(resolution);
    let r = v.round();
    ((v - r).abs() <= 1e-9 * r.max(1.0)).then_some(r as usize)
}

/// Exact multiple-choice knapsack over integer-scaled costs.
///
/// `resolution` defaults to `delta`, which makes proportional costs integral.
/// Costs that do not scale to integers are refused rather than rounded.
pub fn solve_dp(prob: &AllocationProblem, resolution: Option<u32>) -> Result<SolveReport> {
    if prob.fairness.is_active() {
        return Err(Error::UnsupportedConstraint(
            "the dynamic program handles budget constraints only; use branch-and-bound".into(),
        ));
    }
    let started = Instant::now();
    let res = resolution.unwrap_or(prob.cade.delta() as u32);
    if res == 0 {
        return Err(Error::InvalidArgument(
            "cost resolution must be >= 1".into(),
        ));
    }
    let n = prob.n_entities();
    let w = prob.n_doses();
    let mut cost = Vec::with_capacity(n * w);
    for i in 0..n {
        for d in 0..w {
            cost.push(
                scaled_cost(prob.costs.get(i, d), res)
                    .ok_or(Error::NonRepresentableCosts { resolution: res })?,
            );
        }
    }
    // Capacity beyond the total of every row's largest cost is never binding.
    let full: usize = (0..n)
        .map(|i| cost[i * w..(i + 1) * w].iter().max().copied().unwrap_or(0))
        .sum();
    let cap = ((prob.budget * f64::from(res) + 1e-9).floor() as usize).min(full);
    let entries = n as f64 * (cap + 1) as f64;
    if entries > MAX_TABLE {
        return Err(Error::TooLarge {
            combinations: entries,
        });
    }

    let mut table = vec![0.0f64; cap + 1];
    let mut next = vec![0.0f64; cap + 1];
    let mut choice = vec![0u16; n * (cap + 1)];
    for i in 0..n {
        let ch = &mut choice[i * (cap + 1)..(i + 1) * (cap + 1)];
        for b in 0..=cap {
            let mut best = table[b] + prob.value(i, 0);
            let mut arg = 0u16;
            for d in 1..w {
                let c = cost[i * w + d];
                if c <= b {
                    let v = table[b - c] + prob.value(i, d);
                    if v > best {
                        best = v;
                        arg = d as u16;
                    }
                }
            }
            next[b] = best;
            ch[b] = arg;
        }
        std::mem::swap(&mut table, &mut next);
    }

    let mut doses = vec![0; n];
    let mut b = cap;
    for i in (0..n).rev() {
        let d = choice[i * (cap + 1) + b] as usize;
        doses[i] = d;
        b -= cost[i * w + d];
    }
    let policy = Policy::from_doses(doses, w)?;
    SolveReport::finish(prob, SolveStatus::Optimal, policy, started)
}

#[cfg(test)]
mod tests {
    use super::super::tests::two_entity;
    use super::*;
    use crate::alloc::{AllocationProblem, CostMatrix, Fairness};

    #[test]
    fn two_entity_optimum() {
        let r = solve_dp(&two_entity(1.5), None).unwrap();
        assert_eq!(r.status, SolveStatus::Optimal);
        assert!((r.objective - 0.9).abs() < 1e-12);
        let r = solve_dp(&two_entity(1.0), None).unwrap();
        assert!((r.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn slack_budget_takes_every_best_dose() {
        let r = solve_dp(&two_entity(10.0), None).unwrap();
        assert_eq!(r.policy.doses(), &[1, 2]);
    }

    #[test]
    fn refuses_unrepresentable_costs() {
        let base = two_entity(1.0);
        let costs = CostMatrix::from_rows(vec![vec![0.0, 0.33, 1.0], vec![0.0, 0.5, 1.0]]).unwrap();
        let p = AllocationProblem::new(
            base.cade,
            costs,
            vec![1.0; 2],
            1.0,
            vec![0; 2],
            Fairness::none(),
        )
        .unwrap();
        assert!(matches!(
            solve_dp(&p, None),
            Err(Error::NonRepresentableCosts { .. })
        ));
        assert!(solve_dp(&p, Some(100)).is_ok());
    }
}
