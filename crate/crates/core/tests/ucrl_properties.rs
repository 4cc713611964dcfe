mod common;

use common::{grid_optimum, random_model_class, sampled_member_optimum, sup_gap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucrl_core::confidence::{confidence_radius, ConfidenceQuery};
use ucrl_core::lowerbound::{build_hard_mdp, HardMdpSpec};
use ucrl_core::mdp::{TabularMdp, Transition, TwoSupportTransition};
use ucrl_core::ucrl::{
    derive_constants, extended_value_iteration, extended_value_iteration_over, feasible_interval,
    knownness, model_membership_check, AgentState, ModelClass, VisitCounts,
};

const TOL: f64 = 1e-8;

#[test]
fn optimism_over_sampled_members() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for _ in 0..20 {
        let n = rng.gen_range(2..=5);
        let a = rng.gen_range(1..=3);
        let (skeleton, model) = random_model_class(&mut rng, n, a, 0.9, 25, 3.0);
        let plan = extended_value_iteration(&model, &skeleton, TOL).unwrap();
        let intervals = model.intervals();
        for _ in 0..200 {
            let member = sampled_member_optimum(&mut rng, &skeleton, &intervals);
            for s in 0..n {
                assert!(plan.values[s] >= member[s] - 10.0 * TOL);
            }
        }
    }
}

#[test]
fn matches_the_grid_search_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..20 {
        let (skeleton, model) = random_model_class(&mut rng, 4, 2, 0.9, 25, 3.0);
        let plan = extended_value_iteration(&model, &skeleton, TOL).unwrap();
        let grid = grid_optimum(&skeleton, &model.intervals(), 41);
        // the grid contains both interval ends, where the optimum lies
        assert!(sup_gap(plan.values.as_slice(), &grid) <= 1e-6);
    }
}

#[test]
fn wider_intervals_never_lower_the_optimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    for _ in 0..50 {
        let (skeleton, model) = random_model_class(&mut rng, 5, 2, 0.8, 40, 2.0);
        let narrow = model.intervals();
        let wide: Vec<(f64, f64)> = narrow
            .iter()
            .map(|&(lo, hi)| {
                (
                    (lo - rng.gen::<f64>() * 0.2).max(0.0),
                    (hi + rng.gen::<f64>() * 0.2).min(1.0),
                )
            })
            .collect();
        let small = extended_value_iteration_over(&skeleton, &narrow, TOL).unwrap();
        let large = extended_value_iteration_over(&skeleton, &wide, TOL).unwrap();
        for s in 0..5 {
            assert!(large.values[s] >= small.values[s] - 2.0 * TOL);
        }
    }
}

#[test]
fn empirical_model_when_counts_are_huge() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let (skeleton, model) = random_model_class(&mut rng, 4, 2, 0.9, 1 << 62, 3.0);
    let plan = extended_value_iteration(&model, &skeleton, TOL).unwrap();
    for (t, &p_hat) in plan
        .mdp
        .two_support_pairs()
        .unwrap()
        .iter()
        .zip(&model.p_hat)
    {
        assert!((t.plus_prob - p_hat).abs() <= 1e-9);
    }
}

#[test]
fn updates_stay_below_the_bound_on_the_hard_instance() {
    let spec = HardMdpSpec::new(2, 0.1, 0.8, 0).unwrap();
    let env = build_hard_mdp(&spec).unwrap();
    let constants = derive_constants(4, 2, 0.2, 0.2, 0.8).unwrap();
    let u_max = constants.u_max;
    let mut agent = AgentState::new(constants, &env, 0, Some(50.0), 1e-6).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..100_000 {
        agent.step(&env, &mut rng).unwrap();
    }
    assert!(agent.update_count() <= u_max);
    assert!(agent.episode() <= u_max + 1);
    let completed = &agent.episodes()[..agent.episodes().len() - 1];
    assert!(completed
        .iter()
        .all(|e| e.delay_steps == agent.constants().horizon));
}

#[test]
fn membership_failures_are_rare() {
    // one pair per state, success probabilities 0.2 and 0.7
    let pair = |p| Transition::TwoSupport(TwoSupportTransition::new(0, 1, p));
    let truth = TabularMdp::new(
        2,
        1,
        vec![0.0, 1.0],
        0.9,
        vec![vec![pair(0.2)], vec![pair(0.7)]],
    )
    .unwrap();
    let constants = derive_constants(2, 1, 0.1, 0.1, 0.9).unwrap();
    let (delta1, l1) = (constants.delta1, constants.l1);
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let runs = 10_000;
    let samples = 30;
    let mut failures = 0;
    for _ in 0..runs {
        let mut counts = VisitCounts::new(2, 1);
        for (s, p) in [(0, 0.2), (1, 0.7)] {
            for _ in 0..samples {
                counts.record(s, 0, if rng.gen::<f64>() < p { 0 } else { 1 });
            }
        }
        counts.fold();
        let model = ModelClass::new(&truth, &counts, l1).unwrap();
        failures += usize::from(!model_membership_check(&truth, &model).unwrap());
    }
    let rate = failures as f64 / runs as f64;
    assert!(
        rate <= 2.0 * delta1 + 3.0 * (2.0 * delta1 / runs as f64).sqrt(),
        "{rate}"
    );
}

#[test]
fn feasible_ends_satisfy_the_constraint() {
    for &(p_hat, n) in &[(0.0, 1u64), (0.3, 10), (0.5, 100), (0.97, 1000), (1.0, 5)] {
        let (lo, hi) = feasible_interval(p_hat, n, 2.5);
        for x in [lo, hi] {
            let r = confidence_radius(&ConfidenceQuery::new(x, n, 2.5).unwrap());
            assert!((x - p_hat).abs() <= r + 1e-12);
        }
        assert!(lo <= p_hat && p_hat <= hi);
    }
}

proptest! {
    #[test]
    fn knownness_is_monotone(n in 0u64..1_000_000, extra in 0u64..10_000, iota in 0u32..16, m in 1.0f64..1e4) {
        let c = derive_constants(4, 2, 0.1, 0.1, 0.9).unwrap();
        let k = knownness(iota, n, &c, Some(m));
        prop_assert!(c.kappa_set.contains(&k));
        prop_assert!(knownness(iota, n + extra, &c, Some(m)) >= k);
    }

    #[test]
    fn updates_never_exceed_the_bound(seed in 0u64..1_000, m in 1.0f64..60.0) {
        let spec = HardMdpSpec::new(3, 0.05, 0.8, (seed % 3) as usize).unwrap();
        let env = build_hard_mdp(&spec).unwrap();
        let constants = derive_constants(4, 3, 0.2, 0.2, 0.8).unwrap();
        let u_max = constants.u_max;
        let mut agent = AgentState::new(constants, &env, 0, Some(m), 1e-6).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for _ in 0..5_000 {
            agent.step(&env, &mut rng).unwrap();
        }
        prop_assert!(agent.update_count() <= u_max);
    }
}
