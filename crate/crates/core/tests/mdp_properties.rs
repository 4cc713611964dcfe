mod common;

use common::{random_mdp, random_policy, random_row, sup_gap};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ucrl_core::mdp::{
    evaluate_policy, local_variance, moment_values, occupancy_weights, solve_optimal,
    split_to_two_support, value_difference_decomposition, StationaryPolicy, TabularMdp, Transition,
};

const DISCOUNTS: [f64; 3] = [0.5, 0.9, 0.99];

fn instance(
    seed: u64,
    max_states: usize,
    max_actions: usize,
) -> (TabularMdp, StationaryPolicy, ChaCha8Rng) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=max_states);
    let a = rng.gen_range(1..=max_actions);
    let gamma = DISCOUNTS[rng.gen_range(0..DISCOUNTS.len())];
    let mdp = random_mdp(&mut rng, n, a, gamma);
    let policy = random_policy(&mut rng, n, a);
    (mdp, policy, rng)
}

fn bellman_residual(mdp: &TabularMdp, policy: &StationaryPolicy, values: &[f64]) -> f64 {
    (0..mdp.num_states())
        .map(|s| {
            let backup =
                mdp.reward(s) + mdp.discount() * mdp.transition(s, policy.action(s)).expect(values);
            (backup - values[s]).abs()
        })
        .fold(0.0, f64::max)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn evaluation_is_a_fixed_point(seed in any::<u64>()) {
        let (mdp, policy, _) = instance(seed, 10, 4);
        let v = evaluate_policy(&mdp, &policy, None, 0).unwrap();
        prop_assert!(bellman_residual(&mdp, &policy, v.as_slice()) <= 1e-10);
    }

    #[test]
    fn occupancy_totals_the_horizon(seed in any::<u64>()) {
        let (mdp, policy, _) = instance(seed, 10, 4);
        let horizon = 1.0 / (1.0 - mdp.discount());
        for start in 0..mdp.num_states() {
            let w = occupancy_weights(&mdp, &policy, start).unwrap();
            prop_assert!((w.total() - horizon).abs() <= 1e-9 * horizon.max(1.0));
            prop_assert!(w.get(start) >= 1.0 - 1e-12);
            prop_assert!(w.weights.iter().all(|&x| x >= -1e-12));
            // the defining recursion, read column-wise
            for s in 0..mdp.num_states() {
                let inflow: f64 = (0..mdp.num_states())
                    .map(|u| w.get(u) * mdp.transition(u, policy.action(u)).prob(s))
                    .sum();
                let direct = if s == start { 1.0 } else { 0.0 };
                prop_assert!((w.get(s) - direct - mdp.discount() * inflow).abs() <= 1e-10 * horizon);
            }
        }
    }

    #[test]
    fn value_difference_identity(seed in any::<u64>()) {
        let (a, policy, mut rng) = instance(seed, 6, 3);
        let rows = common::random_dense_rows(&mut rng, a.num_states(), a.num_actions(), a.num_states());
        let b = TabularMdp::new(a.num_states(), a.num_actions(), a.rewards().to_vec(), a.discount(), rows).unwrap();
        let start = rng.gen_range(0..a.num_states());
        let (lhs, rhs) = value_difference_decomposition(&a, &b, &policy, start).unwrap();
        prop_assert!((lhs - rhs).abs() <= 1e-8, "{} vs {}", lhs, rhs);
    }

    #[test]
    fn discounted_variance_total_is_bounded(seed in any::<u64>()) {
        let (mdp, policy, _) = instance(seed, 10, 4);
        let g = mdp.discount();
        let v = evaluate_policy(&mdp, &policy, None, 0).unwrap();
        let sigma = local_variance(&mdp, &policy, &v).unwrap();
        for start in 0..mdp.num_states() {
            let w = occupancy_weights(&mdp, &policy, start).unwrap();
            let total: f64 = sigma.iter().enumerate().map(|(s, x)| w.get(s) * x).sum();
            prop_assert!(total <= 1.0 / (g * g * (1.0 - g) * (1.0 - g)));
        }
    }

    #[test]
    fn local_variance_matches_direct_summation(seed in any::<u64>()) {
        let (mdp, policy, _) = instance(seed, 8, 3);
        let v = evaluate_policy(&mdp, &policy, None, 0).unwrap();
        let sigma = local_variance(&mdp, &policy, &v).unwrap();
        for s in 0..mdp.num_states() {
            let row = mdp.transition(s, policy.action(s)).to_dense(mdp.num_states());
            let mean: f64 = row.iter().zip(v.as_slice()).map(|(p, x)| p * x).sum();
            let square: f64 = row.iter().zip(v.as_slice()).map(|(p, x)| p * x * x).sum();
            prop_assert!((sigma[s] - (square - mean * mean).max(0.0)).abs() <= 1e-9 * (1.0 + square));
        }
    }

    #[test]
    fn moments_respect_their_ranges(seed in any::<u64>()) {
        let (mdp, policy, _) = instance(seed, 8, 3);
        let h = 1.0 / (1.0 - mdp.discount());
        let stack = moment_values(&mdp, &policy, &[0, 2, 6]).unwrap();
        for &d in &[0u32, 2, 6] {
            let vd = stack.values(d).unwrap();
            let bound = h.powi(d as i32 + 1);
            prop_assert!(vd.values.iter().all(|&x| x >= -1e-12 && x <= bound * (1.0 + 1e-9)));
            let var_bound = h.powi(2 * d as i32 + 2);
            prop_assert!(stack.variances(d).unwrap().iter().all(|&x| (0.0..=var_bound * (1.0 + 1e-9)).contains(&x)));
        }
        let base = evaluate_policy(&mdp, &policy, None, 0).unwrap();
        prop_assert!(sup_gap(stack.values(0).unwrap().as_slice(), base.as_slice()) <= 1e-12);
    }

    #[test]
    fn optimal_value_matches_enumeration(seed in any::<u64>()) {
        let (mdp, _, _) = instance(seed, 5, 3);
        let tol = 1e-8;
        let (v, _) = solve_optimal(&mdp, tol).unwrap();
        let mut best = vec![f64::NEG_INFINITY; mdp.num_states()];
        for policy in StationaryPolicy::enumerate(mdp.num_states(), mdp.num_actions()) {
            let vp = evaluate_policy(&mdp, &policy, None, 0).unwrap();
            for (b, x) in best.iter_mut().zip(vp.as_slice()) {
                *b = b.max(*x);
            }
        }
        for s in 0..mdp.num_states() {
            prop_assert!(v[s] <= best[s] + 1e-9);
            prop_assert!(best[s] - v[s] <= tol);
        }
    }

    #[test]
    fn split_preserves_values(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = rng.gen_range(2..=6);
        let a = rng.gen_range(1..=3);
        let gamma = DISCOUNTS[rng.gen_range(0..DISCOUNTS.len())];
        let rows = common::random_dense_rows(&mut rng, n, a, 5);
        let mdp = TabularMdp::new(n, a, common::random_rewards(&mut rng, n), gamma, rows).unwrap();
        let (split, map) = split_to_two_support(&mdp).unwrap();
        prop_assert!(split.is_two_support());
        let policy = random_policy(&mut rng, n, a);
        let mut extended = policy.actions().to_vec();
        extended.resize(split.num_states(), 0);
        let v = evaluate_policy(&mdp, &policy, None, 0).unwrap();
        let w = evaluate_policy(&split, &StationaryPolicy::new(extended), None, 0).unwrap();
        for s in 0..n {
            prop_assert!((v[s] - w[map[s]]).abs() <= 1e-6);
        }
        let (v_opt, _) = solve_optimal(&mdp, 1e-9).unwrap();
        let (w_opt, _) = solve_optimal(&split, 1e-9).unwrap();
        for s in 0..n {
            prop_assert!((v_opt[s] - w_opt[map[s]]).abs() <= 1e-6);
        }
    }
}

#[test]
fn absorbing_start_keeps_all_weight() {
    let mdp = TabularMdp::new(
        2,
        1,
        vec![1.0, 0.0],
        0.5,
        vec![
            vec![Transition::Dense(vec![1.0, 0.0])],
            vec![Transition::Dense(vec![0.5, 0.5])],
        ],
    )
    .unwrap();
    let policy = StationaryPolicy::constant(2, 0);
    let w = occupancy_weights(&mdp, &policy, 0).unwrap();
    assert_eq!(w.weights, vec![2.0, 0.0]);
    assert!((evaluate_policy(&mdp, &policy, None, 0).unwrap()[0] - 2.0).abs() < 1e-15);
    let zero = evaluate_policy(&mdp, &policy, Some(&[0.0, 0.0]), 0).unwrap();
    assert_eq!(zero.values, vec![0.0, 0.0]);
}

#[test]
fn deterministic_dynamics_have_no_higher_moments() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let n = 5;
    let rows = (0..n)
        .map(|_| vec![Transition::Dense(random_row(&mut rng, n, 1))])
        .collect();
    let mdp = TabularMdp::new(n, 1, common::random_rewards(&mut rng, n), 0.9, rows).unwrap();
    let stack = moment_values(&mdp, &StationaryPolicy::constant(n, 0), &[0, 2, 6]).unwrap();
    for d in [0, 2, 6] {
        assert!(stack.variances(d).unwrap().iter().all(|&x| x == 0.0));
    }
    assert!(stack.values(2).unwrap().values.iter().all(|&x| x == 0.0));
}
