use proptest::prelude::*;
use tempfair_core::domains::nsp::{is_evening, DAYS, SHIFTS};
use tempfair_core::domains::*;
use tempfair_core::fairness::entity_names;
use tempfair_core::instance_gen::{gen_nsp, gen_tap, gen_vrp};
use tempfair_core::{solve, CoreError, FormulationSpec, History, IpObjective, MetricKind, SolverChoice};
use tempfair_milp::branch_and_bound;

fn cap(nl: usize, nc: usize) -> CapInstance {
    CapInstance::uniform(entity_names("l", nl), entity_names("c", nc), vec![vec![1.0; nc]; nl], nc as f64, 1).unwrap()
}

#[test]
fn cap_enumeration_counts() {
    let two = cap_enumerate(&cap(2, 1), 0).unwrap();
    let loads: Vec<Vec<f64>> = two.iter().map(|s| s.loads()).collect();
    assert_eq!(loads.len(), 3);
    for want in [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]] {
        assert!(loads.contains(&want));
    }
    assert_eq!(cap_enumerate(&cap(3, 2), 0).unwrap().len(), 36);

    let inst = CapInstance::new(entity_names("l", 2), entity_names("c", 2), vec![vec![1.0; 2]; 2], 2.0, vec![vec![0]]).unwrap();
    let only = cap_enumerate(&inst, 0).unwrap();
    assert_eq!(only.len(), 1);
    assert_eq!(only[0].loads(), vec![0.0, 2.0]);
}

#[test]
fn cap_fully_unavailable_step_is_infeasible() {
    let inst = CapInstance::new(entity_names("l", 2), entity_names("c", 1), vec![vec![1.0]; 2], 1.0, vec![vec![0, 1]]).unwrap();
    assert!(matches!(cap_enumerate(&inst, 0), Err(CoreError::Infeasible(_))));
}

#[test]
fn cap_quality_examples() {
    let inst = CapInstance::uniform(
        entity_names("l", 3),
        entity_names("c", 2),
        vec![vec![2.0; 2], vec![1.5; 2], vec![0.0; 2]],
        4.0,
        1,
    )
    .unwrap();
    let sol = |load: Vec<Vec<f64>>| CapSolution { load };
    assert_eq!(cap_quality(&inst, &sol(vec![vec![1.0, 1.0], vec![0.0, 0.0], vec![0.0, 0.0]])), 1.0);
    assert_eq!(cap_quality(&inst, &sol(vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.0, 0.0]])), 0.875);
    assert_eq!(cap_quality(&inst, &sol(vec![vec![0.0, 0.0], vec![0.0, 0.0], vec![1.0, 1.0]])), 0.0);
}

#[test]
fn cap_utilities_and_checks() {
    let inst = cap(2, 2);
    let s = CapSolution {
        load: vec![vec![1.0, 0.5], vec![0.0, 0.5]],
    };
    assert_eq!(cap_utilities(&inst, &s).unwrap(), vec![1.5, 0.5]);
    cap_check(&inst, 0, &s).unwrap();
    let empty = CapSolution {
        load: vec![vec![0.0; 2]; 2],
    };
    assert!(matches!(cap_check(&inst, 0, &empty), Err(CoreError::ConstraintViolation { .. })));
    let running = cap(2, 3);
    let balanced = CapSolution {
        load: vec![vec![1.0, 0.5, 0.0], vec![0.0, 0.5, 1.0]],
    };
    assert_eq!(cap_utilities(&running, &balanced).unwrap(), vec![1.5, 1.5]);
}

#[test]
fn cap_text_round_trip() {
    let inst = CapInstance::new(
        entity_names("l", 3),
        entity_names("c", 2),
        vec![vec![2.0, 0.25], vec![1.5, 1.0], vec![0.0, 3.0]],
        4.5,
        vec![vec![], vec![1], vec![0, 2]],
    )
    .unwrap();
    assert_eq!(CapInstance::parse(&inst.to_text()).unwrap(), inst);
    assert!(CapInstance::parse("vrp v1\n").is_err());
}

// ---------------------------------------------------------------- vrp

fn unit_square() -> VrpInstance {
    // depot at the centre of a 2x2 square
    VrpInstance::new(vec![(1, 1), (0, 0), (2, 0), (2, 2), (0, 2)], 0, entity_names("v", 1)).unwrap()
}

#[test]
fn vrp_single_vehicle_tour() {
    let inst = unit_square();
    let best = vrp_enumerate(&inst)
        .unwrap()
        .iter()
        .map(|s| vrp_route_lengths(&inst, s)[0])
        .fold(f64::INFINITY, f64::min);
    assert!((best - (6.0 + 2.0 * 2f64.sqrt())).abs() < 1e-12);
    let (sol, _) = vrp_partition_search(&inst, 0.0, RouteFairness::None, &[0.0]).unwrap();
    assert!((vrp_route_lengths(&inst, &sol)[0] - best).abs() < 1e-12);
}

#[test]
fn vrp_route_length_examples() {
    let inst = VrpInstance::new(vec![(0, 0), (3, 0), (3, 4)], 0, entity_names("v", 1)).unwrap();
    let sol = VrpSolution { routes: vec![vec![1, 2]] };
    assert_eq!(vrp_route_lengths(&inst, &sol), vec![3.0 + 4.0 + 5.0]);
    let two = VrpInstance::new(vec![(0, 0), (3, 0), (0, 4)], 0, entity_names("v", 2)).unwrap();
    let sols = vrp_enumerate(&two).unwrap();
    for s in &sols {
        let mut l = vrp_route_lengths(&two, s);
        l.sort_by(f64::total_cmp);
        assert_eq!(l, vec![6.0, 8.0]);
    }
}

#[test]
fn vrp_too_few_points_is_infeasible() {
    let inst = VrpInstance::new(vec![(0, 0), (1, 0)], 0, entity_names("v", 2)).unwrap();
    assert!(matches!(vrp_enumerate(&inst), Err(CoreError::Infeasible(_))));
    assert!(matches!(
        vrp_build_ip(std::slice::from_ref(&inst), &IpObjective::quality_only()),
        Err(CoreError::Infeasible(_))
    ));
}

#[test]
fn vrp_check_rejects_bad_routes() {
    let inst = unit_square();
    let missing = VrpSolution { routes: vec![vec![1, 2, 3]] };
    assert!(vrp_check(&inst, 0, &missing).is_err());
    let twice = VrpSolution { routes: vec![vec![1, 2, 3, 4, 1]] };
    assert!(vrp_check(&inst, 0, &twice).is_err());
    let depot = VrpSolution { routes: vec![vec![0, 1, 2, 3, 4]] };
    assert!(vrp_check(&inst, 0, &depot).is_err());
}

#[test]
fn vrp_ip_matches_enumeration() {
    for seed in 0..8u64 {
        let inst = gen_vrp(5, 3 + (seed % 4) as usize, 1 + (seed % 2) as usize, seed).unwrap();
        let want = vrp_enumerate(&inst)
            .unwrap()
            .iter()
            .map(|s| vrp_route_lengths(&inst, s).iter().sum::<f64>())
            .fold(f64::INFINITY, f64::min);
        let ip = vrp_build_ip(std::slice::from_ref(&inst), &IpObjective::quality_only()).unwrap();
        let mut sep = ip.separator();
        let res = branch_and_bound(&ip.model, Some(&mut sep)).unwrap();
        let sol = ip.decode(&res.assignment).unwrap().remove(0);
        vrp_check(&inst, 0, &sol).unwrap();
        let got: f64 = vrp_route_lengths(&inst, &sol).iter().sum();
        assert!((got - want).abs() < 1e-6, "seed {seed}: {got} vs {want}");
    }
}

#[test]
fn vrp_text_round_trip() {
    let inst = gen_vrp(11, 12, 4, 9).unwrap();
    assert_eq!(VrpInstance::parse(&inst.to_text()).unwrap(), inst);
}

// ---------------------------------------------------------------- tap

#[test]
fn tap_small_examples() {
    let inst = TapInstance::from_costs(vec![vec![1.0, 10.0], vec![10.0, 1.0]]).unwrap();
    let (sol, cost) = tap_hungarian(&inst);
    assert_eq!(cost, 2.0);
    assert_eq!(sol.task_of_agent, vec![0, 1]);
    let perm = TapInstance::from_costs(vec![vec![1.0, 0.0, 1.0], vec![0.0, 1.0, 1.0], vec![1.0, 1.0, 0.0]]).unwrap();
    assert_eq!(tap_hungarian(&perm).1, 0.0);
    assert!(TapInstance::from_costs(vec![vec![1.0, 2.0]]).is_err());
}

#[test]
fn tap_minimax_differs_from_min_sum() {
    // agent 0 is expensive everywhere except task 0, which is also best for agent 1
    let inst = TapInstance::from_costs(vec![vec![5.0, 9.0, 9.0], vec![0.0, 6.0, 6.0], vec![0.0, 0.0, 0.0]]).unwrap();
    let all = tap_enumerate(&inst).unwrap();
    assert_eq!(all.len(), 6);
    let sum = |s: &TapSolution| tap_utilities(&inst, s).iter().sum::<f64>();
    let max = |s: &TapSolution| tap_utilities(&inst, s).iter().copied().fold(0.0, f64::max);
    let min_sum = all.iter().min_by(|a, b| sum(a).total_cmp(&sum(b))).unwrap();
    let min_max = all.iter().min_by(|a, b| max(a).total_cmp(&max(b))).unwrap();
    assert_ne!(min_sum, min_max);
    assert!(max(min_max) < max(min_sum));
    let cands = tap_threshold_candidates(&inst, Some(MetricKind::MinimaxCost), &[0.0; 3]).unwrap();
    let best = cands.iter().map(|s| max(s)).fold(f64::INFINITY, f64::min);
    assert_eq!(best, max(min_max));
}

#[test]
fn tap_ip_matches_hungarian() {
    for seed in 0..10u64 {
        let inst = gen_tap(8, &[0, 3], seed).unwrap();
        let (_, want) = tap_hungarian(&inst);
        let ip = tap_build_ip(std::slice::from_ref(&inst), &IpObjective::quality_only()).unwrap();
        let res = branch_and_bound(&ip.model, None).unwrap();
        let sol = ip.decode(&res.assignment).unwrap().remove(0);
        tap_check(&inst, 0, &sol).unwrap();
        assert_eq!(tap_utilities(&inst, &sol).iter().sum::<f64>(), want);
    }
}

#[test]
fn tap_text_round_trip_and_check() {
    let inst = gen_tap(6, &[1], 4).unwrap();
    assert_eq!(TapInstance::parse(&inst.to_text()).unwrap(), inst);
    let dup = TapSolution {
        task_of_agent: vec![0, 0, 1, 2, 3, 4],
    };
    assert!(tap_check(&inst, 0, &dup).is_err());
}

// ---------------------------------------------------------------- nsp

fn valid_roster(sol: &NspSolution) -> bool {
    (0..DAYS).all(|d| sol.nurse_of_shift[2 * d] != sol.nurse_of_shift[2 * d + 1])
}

#[test]
fn nsp_two_nurses_one_day_pairs() {
    let inst = NspInstance::new(entity_names("n", 2), vec![1.0, 0.0], vec![[1; SHIFTS]; 2], 5.0).unwrap();
    let all: Vec<NspSolution> = nsp_enumerate(&inst).collect();
    // each day independently picks one of the two ordered pairs
    assert_eq!(all.len(), 1 << DAYS);
    for s in &all {
        assert!(valid_roster(s));
        nsp_check(&inst, 0, s).unwrap();
    }
    assert_eq!(all[0].nurse_of_shift[..2], [0, 1]);
    assert_eq!(all[1].nurse_of_shift[..2], [0, 1]);
}

#[test]
fn nsp_five_nurse_count() {
    let inst = NspInstance::weekly_reference();
    assert_eq!(nsp_enumerate(&inst).count(), 20usize.pow(5));
}

#[test]
fn nsp_quality_and_utilities() {
    let inst = NspInstance::weekly_reference();
    let mut shifts = [0usize; SHIFTS];
    for d in 0..DAYS {
        shifts[2 * d] = 1;
        shifts[2 * d + 1] = 0;
    }
    let senior_evenings = NspSolution { nurse_of_shift: shifts };
    assert_eq!(nsp_quality(&inst, &senior_evenings), 1.0);
    let u = nsp_utilities(&inst, &senior_evenings);
    // n1 works evenings (preference 0); n2 works mornings (3 each)
    assert_eq!(u, vec![0.0, 15.0, 0.0, 0.0, 0.0]);

    for d in 0..DAYS {
        shifts[2 * d] = 0;
        shifts[2 * d + 1] = 1;
    }
    let n2_evenings = NspSolution { nurse_of_shift: shifts };
    assert!((nsp_quality(&inst, &n2_evenings) - 10.0 / 15.0).abs() < 1e-12);
    assert_eq!(nsp_utilities(&inst, &n2_evenings)[0], 15.0);

    for d in 0..DAYS {
        shifts[2 * d] = 3;
        shifts[2 * d + 1] = 4;
    }
    let juniors = NspSolution { nurse_of_shift: shifts };
    assert_eq!(nsp_quality(&inst, &juniors), 0.0);
    let u = nsp_utilities(&inst, &juniors);
    assert_eq!(u, vec![0.0, 0.0, 0.0, 0.0, 15.0]);
}

#[test]
fn nsp_identical_preferences_tie_to_first() {
    // no seniority and equal preferences: every roster has the same quality
    let inst = NspInstance::new(entity_names("n", 3), vec![0.0; 3], vec![[2; SHIFTS]; 3], 15.0).unwrap();
    let first = nsp_enumerate(&inst).next().unwrap();
    let spec = FormulationSpec::op(MetricKind::MaximinRatio);
    let p = solve(&spec, &History::empty(), &[DomainInstance::Nsp(inst)], &SolverChoice::Auto).unwrap();
    assert_eq!(p.plan, vec![Solution::Nsp(first)]);
    assert!(valid_roster(&first));
}

#[test]
fn nsp_text_round_trip_and_validation() {
    let inst = gen_nsp(6, 3).unwrap();
    assert_eq!(NspInstance::parse(&inst.to_text()).unwrap(), inst);
    let mut bad = [0u8; SHIFTS];
    bad[3] = 4;
    assert!(NspInstance::new(entity_names("n", 1), vec![0.0], vec![bad], 1.0).is_err());
    assert!(is_evening(1) && !is_evening(2));
}

// ---------------------------------------------------------------- invariants

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cap_candidates_conserve_course_load(nl in 1usize..=4, nc in 1usize..=3) {
        for s in cap_enumerate(&cap(nl, nc), 0).unwrap() {
            for c in 0..nc {
                let total: f64 = (0..nl).map(|l| s.load[l][c]).sum();
                prop_assert_eq!(total, 1.0);
                let halves = (0..nl).filter(|&l| s.load[l][c] == 0.5).count();
                prop_assert!(halves == 0 || halves == 2);
            }
        }
    }

    #[test]
    fn vrp_candidates_are_valid_tours(seed in 0u64..200, n in 2usize..=5, k in 1usize..=2) {
        prop_assume!(n >= k);
        let inst = gen_vrp(4, n, k, seed).unwrap();
        for s in vrp_enumerate(&inst).unwrap() {
            vrp_check(&inst, 0, &s).unwrap();
            let mut seen: Vec<usize> = s.routes.concat();
            seen.sort_unstable();
            prop_assert_eq!(seen, inst.customers());
            prop_assert!(s.routes.iter().all(|r| !r.is_empty()));
        }
    }

    #[test]
    fn vrp_partition_search_is_optimal(seed in 0u64..500, n in 2usize..=6, k in 1usize..=2, beta in 0.0f64..5.0, gap in any::<bool>()) {
        prop_assume!(n >= k);
        let inst = gen_vrp(5, n, k, seed).unwrap();
        let offsets: Vec<f64> = (0..k).map(|v| ((seed as usize + 3 * v) % 7) as f64).collect();
        let fairness = if gap { RouteFairness::Gap } else { RouteFairness::Minimax };
        let objective = |s: &VrpSolution| {
            let l = vrp_route_lengths(&inst, s);
            let tot: Vec<f64> = l.iter().zip(&offsets).map(|(a, b)| a + b).collect();
            let max = tot.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let min = tot.iter().copied().fold(f64::INFINITY, f64::min);
            let f = if gap { max - min } else { max };
            -l.iter().sum::<f64>() - beta * f
        };
        let want = vrp_enumerate(&inst).unwrap().iter().map(&objective).fold(f64::NEG_INFINITY, f64::max);
        let (sol, _) = vrp_partition_search(&inst, beta, fairness, &offsets).unwrap();
        prop_assert!((objective(&sol) - want).abs() < 1e-9);
    }

    #[test]
    fn tap_candidates_are_permutations(seed in 0u64..300, n in 1usize..=6) {
        let inst = gen_tap(n.max(4), &[], seed).unwrap();
        for s in tap_enumerate(&inst).unwrap().into_iter().take(50) {
            let mut t = s.task_of_agent.clone();
            t.sort_unstable();
            prop_assert_eq!(t, (0..inst.size()).collect::<Vec<_>>());
        }
    }

    #[test]
    fn nsp_random_rosters_valid(seed in 0u64..100) {
        let inst = gen_nsp(5, seed).unwrap();
        for s in nsp_enumerate(&inst).step_by(997).take(50) {
            prop_assert!(valid_roster(&s));
            nsp_check(&inst, 0, &s).unwrap();
        }
    }
}
