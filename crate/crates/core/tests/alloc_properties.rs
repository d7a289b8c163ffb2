mod support;

use dosealloc::alloc::{brute_force, solve_bnb, solve_dp, solve_greedy, BnbOptions};
use dosealloc::{AllocationProblem, Fairness, Policy, SolveStatus};
use proptest::prelude::*;
use support::{check_policy, random_budget_problem, random_problem, rng};

#[test]
fn bnb_matches_brute_force_on_small_instances() {
    let mut r = rng(2);
    for k in 0..300 {
        let prob = random_problem(&mut r, 6, 3);
        let exact = brute_force(&prob).unwrap();
        let bnb = solve_bnb(&prob, &BnbOptions::default()).unwrap();
        assert_eq!(bnb.status, SolveStatus::Optimal, "instance {k}");
        assert!(
            (bnb.objective - exact.objective).abs() <= 1e-9,
            "instance {k}: bnb {} brute {}",
            bnb.objective,
            exact.objective
        );
        assert!(check_policy(&prob, &bnb.policy) <= 1e-7);
    }
}

#[test]
fn dp_matches_bnb_on_budget_only_instances() {
    let mut r = rng(3);
    for k in 0..100 {
        let prob = random_budget_problem(&mut r, 50, 5);
        let dp = solve_dp(&prob, None).unwrap();
        let bnb = solve_bnb(&prob, &BnbOptions::default()).unwrap();
        assert_eq!(dp.status, SolveStatus::Optimal);
        assert_eq!(bnb.status, SolveStatus::Optimal, "instance {k}");
        assert!((dp.objective - bnb.objective).abs() <= 1e-9, "instance {k}");
    }
}

#[test]
fn every_solver_returns_feasible_policies() {
    let mut r = rng(4);
    for _ in 0..500 {
        let prob = random_problem(&mut r, 8, 4);
        let mut reports = vec![
            brute_force(&prob).unwrap(),
            solve_bnb(&prob, &BnbOptions::default()).unwrap(),
        ];
        if !prob.fairness.is_active() {
            reports.push(solve_greedy(&prob).unwrap());
            // Random real costs have no integer grid; dp rejects those.
            reports.extend(solve_dp(&prob, None).ok());
        }
        for rep in reports {
            assert!(check_policy(&prob, &rep.policy) <= 1e-7);
        }
    }
}

#[test]
fn greedy_refuses_active_fairness() {
    let mut r = rng(5);
    let mut prob = random_problem(&mut r, 6, 3);
    prob.groups = (0..prob.n_entities()).map(|i| (i % 2) as u8).collect();
    prob.fairness = Fairness::new(Some(0.1), None);
    if prob.n_entities() >= 2 {
        assert!(solve_greedy(&prob).is_err());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn value_is_monotone_in_budget(seed in any::<u64>(), extra in 0.0f64..3.0) {
        let prob = random_problem(&mut rng(seed), 6, 3);
        let a = solve_bnb(&prob, &BnbOptions::default()).unwrap();
        let b = solve_bnb(&prob.with_budget(prob.budget + extra).unwrap(), &BnbOptions::default()).unwrap();
        prop_assert!(b.objective >= a.objective - 1e-9);
    }

    #[test]
    fn value_is_monotone_in_slack(seed in any::<u64>(), e in 0.0f64..0.9, step in 0.0f64..0.5) {
        let mut prob = random_problem(&mut rng(seed), 6, 3);
        let mut tight = prob.clone();
        tight.fairness = Fairness::new(Some(e), prob.fairness.eps_do);
        prob.fairness = Fairness::new(Some(e + step), prob.fairness.eps_do);
        let a = brute_force(&tight).unwrap();
        let b = brute_force(&prob).unwrap();
        prop_assert!(b.objective >= a.objective - 1e-12);
        let mut tight = prob.clone();
        tight.fairness = Fairness::new(prob.fairness.eps_dt, Some(e));
        prob.fairness = Fairness::new(prob.fairness.eps_dt, Some(e + step));
        let a = solve_bnb(&tight, &BnbOptions::default()).unwrap();
        let b = solve_bnb(&prob, &BnbOptions::default()).unwrap();
        prop_assert!(b.objective >= a.objective - 1e-9);
    }

    #[test]
    fn exact_solvers_dominate_greedy(seed in any::<u64>()) {
        let prob = random_budget_problem(&mut rng(seed), 30, 5);
        let g = solve_greedy(&prob).unwrap();
        let d = solve_dp(&prob, None).unwrap();
        prop_assert!(d.objective >= g.objective - 1e-9);
        prop_assert!(check_policy(&prob, &g.policy) <= 1e-7);
    }

    #[test]
    fn cost_sensitive_optimum_dominates(seed in any::<u64>()) {
        let mut r = rng(seed);
        let prob = random_problem(&mut r, 6, 3);
        let u_prob = AllocationProblem { benefits: vec![1.0; prob.n_entities()], ..prob.clone() };
        let v_opt = brute_force(&prob).unwrap().policy;
        let u_opt = brute_force(&u_prob).unwrap().policy;
        let v = |p: &Policy| prob.objective(p).unwrap();
        let u = |p: &Policy| u_prob.objective(p).unwrap();
        prop_assert!(v(&v_opt) >= v(&u_opt) - 1e-12);
        prop_assert!(u(&u_opt) >= u(&v_opt) - 1e-12);
    }

    #[test]
    fn slack_budget_takes_every_row_maximum(seed in any::<u64>()) {
        let prob = random_budget_problem(&mut rng(seed), 20, 4);
        let n = prob.n_entities();
        let w = prob.n_doses();
        let full: f64 = (0..n).map(|i| prob.costs.get(i, w - 1)).sum();
        let prob = prob.with_budget(full).unwrap();
        let best: f64 = (0..n)
            .map(|i| (0..w).map(|d| prob.value(i, d)).fold(f64::NEG_INFINITY, f64::max))
            .sum();
        for rep in [solve_greedy(&prob).unwrap(), solve_dp(&prob, None).unwrap()] {
            prop_assert!((rep.objective - best).abs() <= 1e-9);
        }
    }

    #[test]
    fn root_bound_is_an_upper_bound(seed in any::<u64>()) {
        let prob = random_problem(&mut rng(seed), 6, 3);
        let r = solve_bnb(&prob, &BnbOptions::default()).unwrap();
        prop_assert!(r.root_bound.unwrap_or(f64::INFINITY) >= r.objective - 1e-9);
    }

    #[test]
    fn relative_gap_stays_within_tolerance(seed in any::<u64>()) {
        let prob = random_problem(&mut rng(seed), 6, 3);
        let exact = brute_force(&prob).unwrap().objective;
        let opts = BnbOptions { rel_gap: 1e-3, ..BnbOptions::default() };
        let r = solve_bnb(&prob, &opts).unwrap();
        prop_assert!(r.objective >= exact - 1e-3 * exact.abs() - 1e-9);
        prop_assert!(r.objective + r.gap.unwrap_or(0.0) >= exact - 1e-9);
    }
}
