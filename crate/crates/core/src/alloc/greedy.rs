use std::time::Instant;

use super::{AllocationProblem, Policy, SolveReport, SolveStatus, FEASIBILITY_TOL};
use crate::error::{Error, Result};

/// Ranks entities by the value of their best dose and assigns best doses in
/// that order while the budget lasts. Fairness constraints are rejected.
pub fn solve_greedy(prob: &AllocationProblem) -> Result<SolveReport> {
    if prob.fairness.is_active() {
        return Err(Error::UnsupportedConstraint(
            "the greedy heuristic cannot enforce fairness constraints".into(),
        ));
    }
    let started = Instant::now();
    let n = prob.n_entities();
    let best: Vec<(usize, f64)> = (0..n)
        .map(|i| {
            let mut arg = (0, prob.value(i, 0));
            for d in 1..prob.n_doses() {
                let v = prob.value(i, d);
                if v > arg.1 {
                    arg = (d, v);
                }
            }
            arg
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| best[b].1.total_cmp(&best[a].1).then(a.cmp(&b)));

    let mut remaining = prob.budget;
    let mut doses = vec![0; n];
    for i in order {
        let (d, v) = best[i];
        if v <= 0.0 || d == 0 {
            continue;
        }
        let c = prob.costs.get(i, d);
        if c <= remaining + FEASIBILITY_TOL {
            doses[i] = d;
            remaining -= c;
        }
    }
    let policy = Policy::from_doses(doses, prob.n_doses())?;
    SolveReport::finish(prob, SolveStatus::Heuristic, policy, started)
}

#[cfg(test)]
mod tests {
    use super::super::tests::two_entity;
    use super::*;
    use crate::alloc::Fairness;

    #[test]
    fn two_entity_traces() {
        let r = solve_greedy(&two_entity(1.5)).unwrap();
        assert_eq!(r.policy.doses(), &[1, 2]);
        assert!((r.objective - 0.9).abs() < 1e-12);

        let r = solve_greedy(&two_entity(1.0)).unwrap();
        assert_eq!(r.policy.doses(), &[0, 2]);
        assert!((r.objective - 0.5).abs() < 1e-12);

        let r = solve_greedy(&two_entity(0.0)).unwrap();
        assert_eq!(r.policy.doses(), &[0, 0]);
        assert_eq!(r.objective, 0.0);
    }

    #[test]
    fn rejects_fairness() {
        let mut p = two_entity(1.0);
        p.groups = vec![0, 1];
        p.fairness = Fairness::new(Some(0.1), None);
        assert!(matches!(
            solve_greedy(&p),
            Err(Error::UnsupportedConstraint(_))
        ));
    }
}
