mod common;

use cohort_explain::solver::exact::{compactness_lower_bound, descriptiveness_upper_bound, solve_exact};
use cohort_explain::{solve, SolveMode, SolverOptions};
use common::{brute_force, check_constraints, direct_compactness, direct_descriptiveness, for_each_partition, random_instance, rng};
use proptest::prelude::*;
use rand::Rng;

fn small_instance(seed: u64) -> common::Instance {
    random_instance(&mut rng(seed), 4..=9, 1..=3, 2..=7, 1..=3)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(96))]

    #[test]
    fn exact_matches_enumeration(seed in any::<u64>()) {
        let inst = small_instance(seed);
        let bf = brute_force(&inst);
        let res = solve(&inst.importances(), &inst.tags(), inst.k, &SolverOptions::exact()).unwrap();
        prop_assert!(res.proven_optimal);
        prop_assert_eq!(res.phase1_descriptiveness, bf.q);
        prop_assert!(res.model.descriptiveness >= bf.q);
        prop_assert!((res.model.compactness - bf.cost).abs() <= 1e-9, "{} vs {}", res.model.compactness, bf.cost);
        prop_assert_eq!(check_constraints(&inst, &res.model), Ok(()));
    }

    #[test]
    fn exact_tie_break_is_lexicographic(seed in any::<u64>()) {
        // Integer importances make exact ties common.
        let mut inst = small_instance(seed);
        for row in &mut inst.w {
            for v in row.iter_mut() {
                *v = v.round();
            }
        }
        let (p, q) = solve_exact(&inst.importances(), &inst.tags(), inst.k, 1e-9).unwrap();
        let bf = brute_force(&inst);
        prop_assert_eq!(q, bf.q);
        let mut first = None;
        for_each_partition(inst.n(), inst.k, |labels| {
            if first.is_none()
                && direct_descriptiveness(&inst.d, labels, inst.k) >= q
                && (direct_compactness(&inst.w, labels) - bf.cost).abs() <= 1e-9
            {
                first = Some(labels.to_vec());
            }
        });
        prop_assert_eq!(Some(p.labels().to_vec()), first);
    }

    #[test]
    fn heuristic_output_is_valid(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 3..=40, 1..=4, 1..=10, 1..=6);
        let res = solve(&inst.importances(), &inst.tags(), inst.k, &SolverOptions::heuristic()).unwrap();
        prop_assert_eq!(check_constraints(&inst, &res.model), Ok(()));
        prop_assert!(res.model.descriptiveness >= res.phase1_descriptiveness);
    }

    #[test]
    fn heuristic_never_beats_the_optimum(seed in any::<u64>()) {
        let inst = small_instance(seed);
        let bf = brute_force(&inst);
        let h = solve(&inst.importances(), &inst.tags(), inst.k, &SolverOptions::heuristic()).unwrap();
        prop_assert!(h.model.descriptiveness <= bf.q);
        if h.model.descriptiveness == bf.q {
            prop_assert!(h.model.compactness >= bf.cost - 1e-9);
        }
    }

    #[test]
    fn auto_mode_is_proven_on_small_inputs(seed in any::<u64>()) {
        let inst = small_instance(seed);
        let bf = brute_force(&inst);
        let res = solve(&inst.importances(), &inst.tags(), inst.k, &SolverOptions::default()).unwrap();
        prop_assert!(res.proven_optimal);
        prop_assert_eq!(res.engine, SolveMode::Exact);
        prop_assert_eq!(res.phase1_descriptiveness, bf.q);
        prop_assert!((res.model.compactness - bf.cost).abs() <= 1e-9);
    }

    #[test]
    fn search_bounds_are_sound(seed in any::<u64>()) {
        let inst = small_instance(seed);
        let mut r = rng(seed ^ 0x5eed);
        let mut all = Vec::new();
        for_each_partition(inst.n(), inst.k, |l| all.push(l.to_vec()));
        let pick = &all[r.random_range(0..all.len())];
        let len = r.random_range(0..=inst.n());
        let prefix = &pick[..len];
        let completions: Vec<&Vec<usize>> = all.iter().filter(|l| l.starts_with(prefix)).collect();

        let best_desc = completions
            .iter()
            .map(|l| direct_descriptiveness(&inst.d, l, inst.k))
            .max()
            .unwrap();
        let ub = descriptiveness_upper_bound(&inst.tags(), prefix, inst.k).unwrap();
        prop_assert!(ub >= best_desc, "bound {} below reachable {}", ub, best_desc);

        let r_tags = inst.d[0].len();
        let q = r.random_range(0..=r_tags);
        let best_cost = completions
            .iter()
            .filter(|l| direct_descriptiveness(&inst.d, l, inst.k) >= q)
            .map(|l| direct_compactness(&inst.w, l))
            .min_by(f64::total_cmp);
        let lb = compactness_lower_bound(&inst.importances(), &inst.tags(), prefix, inst.k, q).unwrap();
        match (lb, best_cost) {
            (None, Some(c)) => prop_assert!(false, "pruned a feasible node with cost {}", c),
            (Some(lb), Some(c)) => prop_assert!(lb <= c + 1e-9, "bound {} above reachable {}", lb, c),
            _ => {}
        }
    }

    #[test]
    fn solve_is_deterministic(seed in any::<u64>()) {
        let inst = random_instance(&mut rng(seed), 10..=40, 2..=3, 3..=8, 2..=4);
        let opts = SolverOptions { rng_seed: seed, ..SolverOptions::heuristic() };
        let a = solve(&inst.importances(), &inst.tags(), inst.k, &opts).unwrap();
        let b = solve(&inst.importances(), &inst.tags(), inst.k, &opts).unwrap();
        prop_assert_eq!(a.model, b.model);
    }
}

#[test]
fn k_equals_n_and_one() {
    let inst = random_instance(&mut rng(11), 7..=7, 2..=2, 5..=5, 1..=1);
    let (w, d) = (inst.importances(), inst.tags());
    let all = solve(&w, &d, 7, &SolverOptions::default()).unwrap();
    assert_eq!(all.model.compactness, 0.0);
    let min_row = inst.d.iter().map(|r| r.iter().filter(|&&b| b == 1).count()).min().unwrap();
    assert_eq!(all.model.descriptiveness, min_row);
    let one = solve(&w, &d, 1, &SolverOptions::default()).unwrap();
    assert!((one.model.compactness - direct_compactness(&inst.w, &[0; 7])).abs() < 1e-9);
    assert!(one.proven_optimal);
}

#[test]
fn infeasible_k() {
    let inst = random_instance(&mut rng(2), 5..=5, 2..=2, 3..=3, 1..=1);
    let err = solve(&inst.importances(), &inst.tags(), 6, &SolverOptions::default()).unwrap_err();
    assert_eq!(err, cohort_explain::Error::InfeasibleK { k: 6, n: 5 });
}

#[test]
fn tiny_time_limit_in_exact_mode() {
    // Large enough that the search cannot finish in a microsecond; either a
    // best-effort partition or a timeout error is acceptable, never a panic.
    let inst = random_instance(&mut rng(5), 60..=60, 3..=3, 12..=12, 4..=4);
    let opts = SolverOptions { time_limit: Some(1e-6), ..SolverOptions::exact() };
    match solve(&inst.importances(), &inst.tags(), inst.k, &opts) {
        Ok(res) => {
            assert!(res.timed_out && !res.proven_optimal);
            assert_eq!(check_constraints(&inst, &res.model), Ok(()));
        }
        Err(e) => assert_eq!(e, cohort_explain::Error::Timeout),
    }
}

#[test]
fn heuristic_respects_time_limit() {
    let inst = random_instance(&mut rng(8), 400..=400, 3..=3, 12..=12, 5..=5);
    let opts = SolverOptions { time_limit: Some(0.05), ..SolverOptions::heuristic() };
    let res = solve(&inst.importances(), &inst.tags(), inst.k, &opts).unwrap();
    assert_eq!(check_constraints(&inst, &res.model), Ok(()));
    assert!(res.wall_time.as_secs_f64() < 5.0);
}
