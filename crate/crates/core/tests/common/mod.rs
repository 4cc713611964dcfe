#![allow(dead_code)]

use rand::seq::SliceRandom;
use rand::Rng;
use ucrl_core::mdp::{StationaryPolicy, TabularMdp, Transition, TwoSupportTransition};

/// A distribution over `num_states` with between 1 and `max_support`
/// successors, chosen at random.
pub fn random_row<R: Rng>(rng: &mut R, num_states: usize, max_support: usize) -> Vec<f64> {
    let support = rng.gen_range(1..=max_support.min(num_states));
    let mut states: Vec<usize> = (0..num_states).collect();
    states.shuffle(rng);
    let mut row = vec![0.0; num_states];
    let raw: Vec<f64> = (0..support).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = raw.iter().sum();
    for (&s, &x) in states.iter().zip(&raw) {
        row[s] = x / total;
    }
    row
}

pub fn random_rewards<R: Rng>(rng: &mut R, num_states: usize) -> Vec<f64> {
    (0..num_states).map(|_| rng.gen::<f64>()).collect()
}

pub fn random_dense_rows<R: Rng>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    max_support: usize,
) -> Vec<Vec<Transition>> {
    (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| Transition::Dense(random_row(rng, num_states, max_support)))
                .collect()
        })
        .collect()
}

pub fn random_mdp<R: Rng>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    discount: f64,
) -> TabularMdp {
    let rewards = random_rewards(rng, num_states);
    let rows = random_dense_rows(rng, num_states, num_actions, num_states);
    TabularMdp::new(num_states, num_actions, rewards, discount, rows).unwrap()
}

pub fn random_two_support<R: Rng>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    discount: f64,
) -> TabularMdp {
    let rewards = random_rewards(rng, num_states);
    let rows = (0..num_states)
        .map(|_| {
            (0..num_actions)
                .map(|_| {
                    let plus = rng.gen_range(0..num_states);
                    let minus = (plus + rng.gen_range(1..num_states.max(2))) % num_states;
                    Transition::TwoSupport(TwoSupportTransition::new(plus, minus, rng.gen()))
                })
                .collect()
        })
        .collect();
    TabularMdp::new(num_states, num_actions, rewards, discount, rows).unwrap()
}

pub fn random_policy<R: Rng>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
) -> StationaryPolicy {
    StationaryPolicy::new(
        (0..num_states)
            .map(|_| rng.gen_range(0..num_actions))
            .collect(),
    )
}

/// `max_s |a_s - b_s|`.
pub fn sup_gap(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// A two-support skeleton with random counts folded in, as used for
/// optimistic-planning checks.
pub fn random_model_class<R: Rng>(
    rng: &mut R,
    num_states: usize,
    num_actions: usize,
    discount: f64,
    count: u64,
    l1: f64,
) -> (TabularMdp, ucrl_core::ucrl::ModelClass) {
    let skeleton = random_two_support(rng, num_states, num_actions, discount);
    let mut counts = ucrl_core::ucrl::VisitCounts::new(num_states, num_actions);
    for (i, t) in skeleton.two_support_pairs().unwrap().iter().enumerate() {
        let plus_count = rng.gen_range(0..=count);
        counts.set_folded(
            i / num_actions,
            i % num_actions,
            t.plus_state,
            t.minus_state,
            count,
            plus_count,
        );
    }
    let model = ucrl_core::ucrl::ModelClass::new(&skeleton, &counts, l1).unwrap();
    (skeleton, model)
}

/// Best value over models whose plus-probabilities sit on an evenly spaced
/// grid of `points` values inside each interval. Every grid combination is
/// covered by solving one MDP whose actions are (action, grid point).
pub fn grid_optimum(skeleton: &TabularMdp, intervals: &[(f64, f64)], points: usize) -> Vec<f64> {
    let a_count = skeleton.num_actions();
    let pairs = skeleton.two_support_pairs().unwrap();
    let rows = (0..skeleton.num_states())
        .map(|s| {
            (0..a_count)
                .flat_map(|a| {
                    let i = s * a_count + a;
                    let (lo, hi) = intervals[i];
                    let t = pairs[i];
                    (0..points).map(move |j| {
                        let p = lo + (hi - lo) * j as f64 / (points - 1) as f64;
                        Transition::TwoSupport(TwoSupportTransition::new(
                            t.plus_state,
                            t.minus_state,
                            p.clamp(0.0, 1.0),
                        ))
                    })
                })
                .collect()
        })
        .collect();
    let grid = TabularMdp::new(
        skeleton.num_states(),
        a_count * points,
        skeleton.rewards().to_vec(),
        skeleton.discount(),
        rows,
    )
    .unwrap();
    ucrl_core::mdp::solve_optimal(&grid, 1e-9).unwrap().0.values
}

/// Optimal values of a model drawn uniformly from the intervals.
pub fn sampled_member_optimum<R: Rng>(
    rng: &mut R,
    skeleton: &TabularMdp,
    intervals: &[(f64, f64)],
) -> Vec<f64> {
    let pairs = skeleton.two_support_pairs().unwrap();
    let transitions = pairs
        .iter()
        .zip(intervals)
        .map(|(t, &(lo, hi))| {
            Transition::TwoSupport(t.with_plus_prob(lo + (hi - lo) * rng.gen::<f64>()))
        })
        .collect();
    let member = skeleton.with_transitions(transitions).unwrap();
    ucrl_core::mdp::solve_optimal(&member, 1e-9)
        .unwrap()
        .0
        .values
}
