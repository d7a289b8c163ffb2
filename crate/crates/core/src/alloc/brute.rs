use std::time::Instant;

use super::{row_satisfied, AllocationProblem, Policy, SolveReport, SolveStatus, FEASIBILITY_TOL};
use crate::error::{Error, Result};

/// Largest number of assignments [`brute_force`] will enumerate.
pub const BRUTE_FORCE_LIMIT: f64 = 1e7;

/// Enumerates every assignment. Ties keep the lexicographically smallest
/// dose vector. A test oracle for the other solvers.
pub fn brute_force(prob: &AllocationProblem) -> Result<SolveReport> {
    let n = prob.n_entities();
    let w = prob.n_doses();
    let combinations = (w as f64).powi(n as i32);
    if combinations > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { combinations });
    }
    let started = Instant::now();
    let (rows, warnings) = prob.fairness_rows();
    let mut doses = vec![0usize; n];
    let mut best: Option<(f64, Vec<usize>)> = None;
    let mut count = 0usize;
    loop {
        count += 1;
        let cost: f64 = doses
            .iter()
            .enumerate()
            .map(|(i, &d)| prob.costs.get(i, d))
            .sum();
        if cost <= prob.budget + FEASIBILITY_TOL {
            let policy = Policy {
                n_doses: w,
                doses: doses.clone(),
            };
            if rows
                .iter()
                .all(|r| row_satisfied(r, &policy, w, FEASIBILITY_TOL))
            {
                let v: f64 = doses
                    .iter()
                    .enumerate()
                    .map(|(i, &d)| prob.value(i, d))
                    .sum();
                if best.as_ref().is_none_or(|(b, _)| v > *b) {
                    best = Some((v, doses.clone()));
                }
            }
        }
        if !advance(&mut doses, w) {
            break;
        }
    }
    let (status, policy) = match best {
        Some((_, d)) => (SolveStatus::Optimal, Policy::from_doses(d, w)?),
        None => (SolveStatus::Infeasible, Policy::all_zero(n, w)),
    };
    let mut report = SolveReport::finish(prob, status, policy, started)?;
    report.nodes = count;
    report.warnings = warnings;
    Ok(report)
}

/// Odometer step with the last entity fastest, so visits are in
/// lexicographic order. Returns false after the last assignment.
fn advance(doses: &mut [usize], w: usize) -> bool {
    for k in (0..doses.len()).rev() {
        doses[k] += 1;
        if doses[k] < w {
            return true;
        }
        doses[k] = 0;
    }
    false
}

#[cfg(test)]
mod tests {
    use super::super::tests::two_entity;
    use super::*;
    use crate::alloc::Fairness;
    use crate::estimators::{CadeMatrix, Provenance};

    fn single(budget: f64) -> AllocationProblem {
        let t = CadeMatrix::from_rows(vec![vec![0.0, 0.2]], Provenance::Estimated).unwrap();
        AllocationProblem::uplift(t, budget).unwrap()
    }

    #[test]
    fn single_entity() {
        let r = brute_force(&single(0.0)).unwrap();
        assert_eq!(r.policy.doses(), &[0]);
        assert_eq!(r.objective, 0.0);
        let r = brute_force(&single(1.0)).unwrap();
        assert_eq!(r.policy.doses(), &[1]);
        assert!((r.objective - 0.2).abs() < 1e-15);
        assert_eq!(r.nodes, 2);
    }

    #[test]
    fn two_entity_with_and_without_fairness() {
        let r = brute_force(&two_entity(1.5)).unwrap();
        assert!((r.objective - 0.9).abs() < 1e-12);
        assert_eq!(r.nodes, 9);

        let mut p = two_entity(1.5);
        p.groups = vec![0, 1];
        p.fairness = Fairness::new(Some(0.0), None);
        let r = brute_force(&p).unwrap();
        assert_eq!(r.policy.doses(), &[1, 1]);
        assert!((r.objective - 0.5).abs() < 1e-12);
    }

    #[test]
    fn too_large() {
        let t = CadeMatrix::from_rows(vec![vec![0.0; 11]; 8], Provenance::Estimated).unwrap();
        let p = AllocationProblem::uplift(t, 1.0).unwrap();
        assert!(matches!(brute_force(&p), Err(Error::TooLarge { .. })));
    }
}
