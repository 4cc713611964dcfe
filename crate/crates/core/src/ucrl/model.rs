use serde::{Deserialize, Serialize};

use crate::confidence::{confidence_radius, ConfidenceQuery};
use crate::error::{Error, Result};
use crate::mdp::{
    evaluate_policy, greedy_policy, stopping_threshold, Action, State, StationaryPolicy,
    TabularMdp, Transition, TwoSupportTransition, ValueVector,
};

/// Width at which interval bisection stops.
const BISECTION_WIDTH: f64 = 1e-12;

/// Folded counts `n` and the counts `v` gathered since the last update.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VisitCounts {
    num_states: usize,
    num_actions: usize,
    n: Vec<u64>,
    n_triple: Vec<u64>,
    v: Vec<u64>,
    v_triple: Vec<u64>,
}

impl VisitCounts {
    pub fn new(num_states: usize, num_actions: usize) -> Self {
        let pairs = num_states * num_actions;
        Self {
            num_states,
            num_actions,
            n: vec![0; pairs],
            n_triple: vec![0; pairs * num_states],
            v: vec![0; pairs],
            v_triple: vec![0; pairs * num_states],
        }
    }

    fn pair(&self, s: State, a: Action) -> usize {
        s * self.num_actions + a
    }

    fn triple(&self, s: State, a: Action, next: State) -> usize {
        self.pair(s, a) * self.num_states + next
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn n(&self, s: State, a: Action) -> u64 {
        self.n[self.pair(s, a)]
    }

    pub fn n_triple(&self, s: State, a: Action, next: State) -> u64 {
        self.n_triple[self.triple(s, a, next)]
    }

    pub fn v(&self, s: State, a: Action) -> u64 {
        self.v[self.pair(s, a)]
    }

    pub fn v_triple(&self, s: State, a: Action, next: State) -> u64 {
        self.v_triple[self.triple(s, a, next)]
    }

    /// Records `s --a--> next` in the pending counts.
    pub fn record(&mut self, s: State, a: Action, next: State) {
        let p = self.pair(s, a);
        let t = self.triple(s, a, next);
        self.v[p] += 1;
        self.v_triple[t] += 1;
    }

    /// `n += v`, then `v = 0`.
    pub fn fold(&mut self) {
        for (n, v) in self.n.iter_mut().zip(self.v.iter_mut()) {
            *n += std::mem::take(v);
        }
        for (n, v) in self.n_triple.iter_mut().zip(self.v_triple.iter_mut()) {
            *n += std::mem::take(v);
        }
    }

    /// Sets folded counts directly, as if `count` visits had been folded in
    /// with `plus_count` of them landing on `plus`.
    pub fn set_folded(
        &mut self,
        s: State,
        a: Action,
        plus: State,
        minus: State,
        count: u64,
        plus_count: u64,
    ) {
        let p = self.pair(s, a);
        self.n[p] = count;
        for next in 0..self.num_states {
            let t = self.triple(s, a, next);
            self.n_triple[t] = 0;
        }
        let tp = self.triple(s, a, plus);
        let tm = self.triple(s, a, minus);
        self.n_triple[tp] += plus_count;
        self.n_triple[tm] += count - plus_count;
    }
}

/// The confidence set around the empirical plus-probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelClass {
    /// `(plus, minus)` per pair, in `state * A + action` order.
    pub pairs: Vec<(State, State)>,
    /// `p̂ = n(s, a, plus) / max(1, n(s, a))`.
    pub p_hat: Vec<f64>,
    pub counts: VisitCounts,
    pub l1: f64,
}

impl ModelClass {
    /// Builds the class from the folded counts. `skeleton` supplies the
    /// plus/minus successors; its probabilities are ignored.
    pub fn new(skeleton: &TabularMdp, counts: &VisitCounts, l1: f64) -> Result<Self> {
        if counts.num_states() != skeleton.num_states()
            || counts.num_actions() != skeleton.num_actions()
        {
            return Err(Error::DimensionMismatch(
                "counts do not match the skeleton".into(),
            ));
        }
        let pairs: Vec<(State, State)> = skeleton
            .two_support_pairs()?
            .into_iter()
            .map(|t| (t.plus_state, t.minus_state))
            .collect();
        let a_count = skeleton.num_actions();
        let p_hat = pairs
            .iter()
            .enumerate()
            .map(|(i, &(plus, _))| {
                let (s, a) = (i / a_count, i % a_count);
                counts.n_triple(s, a, plus) as f64 / counts.n(s, a).max(1) as f64
            })
            .collect();
        Ok(Self {
            pairs,
            p_hat,
            counts: counts.clone(),
            l1,
        })
    }

    pub fn count(&self, index: usize) -> u64 {
        let a_count = self.counts.num_actions();
        self.counts.n(index / a_count, index % a_count)
    }

    /// Feasible plus-probability interval of every pair.
    pub fn intervals(&self) -> Vec<(f64, f64)> {
        (0..self.pairs.len())
            .map(|i| feasible_interval(self.p_hat[i], self.count(i), self.l1))
            .collect()
    }
}

/// `{p̃ : |p̃ - p̂| ≤ confidence_radius(p̃, n)}` as an interval.
///
/// The radius is concave in `p̃`, so the feasible set is an interval around
/// `p̂`; each end is found by bisection to `1e-12` and the returned ends
/// are feasible.
pub fn feasible_interval(p_hat: f64, n: u64, l1: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let radius = |x: f64| {
        confidence_radius(&ConfidenceQuery {
            prob: x,
            count: n,
            log_term: l1,
        })
    };
    let upper_ok = |x: f64| x - p_hat <= radius(x);
    let lower_ok = |x: f64| p_hat - x <= radius(x);
    let hi = if upper_ok(1.0) {
        1.0
    } else {
        bisect(p_hat, 1.0, upper_ok)
    };
    let lo = if lower_ok(0.0) {
        0.0
    } else {
        bisect(p_hat, 0.0, lower_ok)
    };
    (lo, hi)
}

/// Boundary between a feasible `inside` and an infeasible `outside`;
/// returns the feasible end of the final bracket.
fn bisect(mut inside: f64, mut outside: f64, feasible: impl Fn(f64) -> bool) -> f64 {
    while (outside - inside).abs() > BISECTION_WIDTH {
        let mid = 0.5 * (inside + outside);
        if feasible(mid) {
            inside = mid;
        } else {
            outside = mid;
        }
    }
    inside
}

/// Result of planning over a confidence set.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimisticPlan {
    /// The optimistic member `M̃`.
    pub mdp: TabularMdp,
    /// Exact value of `policy` in `M̃`.
    pub values: ValueVector,
    pub policy: StationaryPolicy,
}

/// Optimistic planning over the model class.
///
/// Value iteration where each backup also picks the plus-probability: the
/// top of the feasible interval when the plus successor is worth at least
/// as much as the minus successor, the bottom otherwise.
pub fn extended_value_iteration(
    model: &ModelClass,
    skeleton: &TabularMdp,
    tolerance: f64,
) -> Result<OptimisticPlan> {
    if model.pairs.len() != skeleton.num_pairs() {
        return Err(Error::DimensionMismatch(
            "model class does not match the skeleton".into(),
        ));
    }
    extended_value_iteration_over(skeleton, &model.intervals(), tolerance)
}

/// [`extended_value_iteration`] with the per-pair intervals given directly.
pub fn extended_value_iteration_over(
    skeleton: &TabularMdp,
    intervals: &[(f64, f64)],
    tolerance: f64,
) -> Result<OptimisticPlan> {
    if !(tolerance > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance {tolerance} must be positive"
        )));
    }
    if intervals.len() != skeleton.num_pairs() {
        return Err(Error::DimensionMismatch(format!(
            "{} intervals for {} pairs",
            intervals.len(),
            skeleton.num_pairs()
        )));
    }
    let pairs = skeleton.two_support_pairs()?;
    let gamma = skeleton.discount();
    let threshold = stopping_threshold(tolerance, gamma);
    let n = skeleton.num_states();
    let a_count = skeleton.num_actions();

    let choose = |i: usize, values: &[f64]| -> TwoSupportTransition {
        let t = pairs[i];
        let (lo, hi) = intervals[i];
        let p = if values[t.plus_state] >= values[t.minus_state] {
            hi
        } else {
            lo
        };
        t.with_plus_prob(p)
    };

    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    loop {
        let mut change: f64 = 0.0;
        for s in 0..n {
            let best = (0..a_count)
                .map(|a| Transition::TwoSupport(choose(s * a_count + a, &values)).expect(&values))
                .fold(f64::NEG_INFINITY, f64::max);
            next[s] = skeleton.reward(s) + gamma * best;
            change = change.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if change <= threshold {
            break;
        }
    }

    let transitions = (0..skeleton.num_pairs())
        .map(|i| Transition::TwoSupport(choose(i, &values)))
        .collect();
    let mdp = skeleton.with_transitions(transitions)?;
    let policy = greedy_policy(&mdp, &values);
    let values = evaluate_policy(&mdp, &policy, None, 0)?;
    Ok(OptimisticPlan {
        mdp,
        values,
        policy,
    })
}

/// Whether the true plus-probability of every pair lies in the model class.
pub fn model_membership_check(true_mdp: &TabularMdp, model: &ModelClass) -> Result<bool> {
    let truth = true_mdp.two_support_pairs()?;
    if truth.len() != model.pairs.len() {
        return Err(Error::StructuralMismatch("pair counts differ".into()));
    }
    for (i, t) in truth.iter().enumerate() {
        let (plus, minus) = model.pairs[i];
        let p = if t.is_degenerate() && plus == minus && t.plus_state == plus {
            continue;
        } else if (t.plus_state, t.minus_state) == (plus, minus) {
            t.plus_prob
        } else if (t.minus_state, t.plus_state) == (plus, minus) {
            t.minus_prob()
        } else {
            return Err(Error::StructuralMismatch(format!(
                "pair {i} reaches ({}, {}) but the model expects ({plus}, {minus})",
                t.plus_state, t.minus_state
            )));
        };
        let radius = confidence_radius(&ConfidenceQuery {
            prob: p,
            count: model.count(i),
            log_term: model.l1,
        });
        if (p - model.p_hat[i]).abs() > radius {
            return Ok(false);
        }
    }
    Ok(true)
}
