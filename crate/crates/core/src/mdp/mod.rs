//! Finite discounted MDPs with state-dependent rewards.
//!
//! Transitions are stored per `(state, action)` either as a dense
//! distribution or in the two-support form used by the learning agent,
//! where each pair reaches only a designated `plus` and `minus` state.

mod io;
mod solve;
mod split;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use io::{load_mdp, parse_mdp, save_mdp, to_json};
pub use solve::{
    evaluate_policy, local_variance, moment_values, occupancy_weights, solve_optimal,
    value_difference_decomposition, MomentStack, OccupancyWeights,
};
pub(crate) use solve::{greedy_policy, stopping_threshold};
pub use split::split_to_two_support;

pub type State = usize;
pub type Action = usize;

/// Tolerance for a distribution summing to one.
pub const MASS_TOLERANCE: f64 = 1e-12;

/// Transition that puts mass only on `plus_state` and `minus_state`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TwoSupportTransition {
    pub plus_state: State,
    pub minus_state: State,
    pub plus_prob: f64,
}

impl TwoSupportTransition {
    pub fn new(plus_state: State, minus_state: State, plus_prob: f64) -> Self {
        Self {
            plus_state,
            minus_state,
            plus_prob,
        }
    }

    /// Point mass on `state`.
    pub fn deterministic(state: State) -> Self {
        Self::new(state, state, 1.0)
    }

    pub fn minus_prob(&self) -> f64 {
        1.0 - self.plus_prob
    }

    /// Same successors, different plus-probability.
    pub fn with_plus_prob(&self, plus_prob: f64) -> Self {
        Self::new(self.plus_state, self.minus_state, plus_prob)
    }

    /// Plus and minus coincide, so the probability is irrelevant.
    pub fn is_degenerate(&self) -> bool {
        self.plus_state == self.minus_state
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Transition {
    Dense(Vec<f64>),
    TwoSupport(TwoSupportTransition),
}

impl Transition {
    /// Visits every `(next_state, probability)` with positive mass.
    pub fn for_each_successor(&self, mut f: impl FnMut(State, f64)) {
        match self {
            Transition::Dense(probs) => {
                for (next, &p) in probs.iter().enumerate() {
                    if p > 0.0 {
                        f(next, p);
                    }
                }
            }
            Transition::TwoSupport(t) => {
                if t.is_degenerate() {
                    f(t.plus_state, 1.0);
                } else {
                    if t.plus_prob > 0.0 {
                        f(t.plus_state, t.plus_prob);
                    }
                    if t.plus_prob < 1.0 {
                        f(t.minus_state, t.minus_prob());
                    }
                }
            }
        }
    }

    /// Successors with positive mass, merged and sorted by state.
    pub fn successors(&self) -> Vec<(State, f64)> {
        let mut out: Vec<(State, f64)> = Vec::new();
        self.for_each_successor(|s, p| match out.iter_mut().find(|(t, _)| *t == s) {
            Some(entry) => entry.1 += p,
            None => out.push((s, p)),
        });
        out.sort_by_key(|&(s, _)| s);
        out
    }

    /// Expectation of `values` under this distribution.
    pub fn expect(&self, values: &[f64]) -> f64 {
        match self {
            Transition::Dense(probs) => probs.iter().zip(values).map(|(p, v)| p * v).sum(),
            Transition::TwoSupport(t) => {
                if t.is_degenerate() {
                    values[t.plus_state]
                } else {
                    t.plus_prob * values[t.plus_state] + t.minus_prob() * values[t.minus_state]
                }
            }
        }
    }

    /// Probability of moving to `next`.
    pub fn prob(&self, next: State) -> f64 {
        let mut p = 0.0;
        self.for_each_successor(|s, q| {
            if s == next {
                p += q;
            }
        });
        p
    }

    /// Full distribution over `num_states` states.
    pub fn to_dense(&self, num_states: usize) -> Vec<f64> {
        let mut out = vec![0.0; num_states];
        self.for_each_successor(|s, p| out[s] += p);
        out
    }

    /// Number of distinct successors with positive mass.
    pub fn out_degree(&self) -> usize {
        self.successors().len()
    }

    /// The two-support view of this transition, if it has one.
    ///
    /// Dense rows with a single successor become a degenerate pair.
    pub fn as_two_support(&self) -> Option<TwoSupportTransition> {
        match self {
            Transition::TwoSupport(t) => Some(*t),
            Transition::Dense(_) => match self.successors().as_slice() {
                [(s, _)] => Some(TwoSupportTransition::deterministic(*s)),
                [(plus, p), (minus, _)] => Some(TwoSupportTransition::new(*plus, *minus, *p)),
                _ => None,
            },
        }
    }

    /// Draws a successor with exactly one uniform draw from `rng`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> State {
        let u: f64 = rng.gen();
        match self {
            Transition::TwoSupport(t) => {
                if u < t.plus_prob {
                    t.plus_state
                } else {
                    t.minus_state
                }
            }
            Transition::Dense(probs) => {
                let mut acc = 0.0;
                let mut last = 0;
                for (s, &p) in probs.iter().enumerate() {
                    if p <= 0.0 {
                        continue;
                    }
                    acc += p;
                    last = s;
                    if u < acc {
                        return s;
                    }
                }
                // rounding left u above the accumulated mass
                last
            }
        }
    }
}

/// A finite MDP `(S, A, p, r, γ)` with rewards attached to states.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    rewards: Vec<f64>,
    discount: f64,
    /// Row-major over `(state, action)`.
    transitions: Vec<Transition>,
}

impl TabularMdp {
    /// Validates and builds an MDP. `transitions` is indexed `[state][action]`.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        rewards: Vec<f64>,
        discount: f64,
        transitions: Vec<Vec<Transition>>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::DimensionMismatch(
                "an MDP needs at least one state and one action".into(),
            ));
        }
        if rewards.len() != num_states {
            return Err(Error::DimensionMismatch(format!(
                "{} rewards for {} states",
                rewards.len(),
                num_states
            )));
        }
        if transitions.len() != num_states {
            return Err(Error::DimensionMismatch(format!(
                "{} transition rows for {} states",
                transitions.len(),
                num_states
            )));
        }
        if !(discount > 0.0 && discount < 1.0) {
            return Err(Error::InvalidDiscount(discount));
        }
        for (s, &r) in rewards.iter().enumerate() {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::InvalidReward {
                    state: s,
                    value: r,
                    bound: 1.0,
                });
            }
        }
        let mut flat = Vec::with_capacity(num_states * num_actions);
        for (s, row) in transitions.into_iter().enumerate() {
            if row.len() != num_actions {
                return Err(Error::DimensionMismatch(format!(
                    "state {} has {} actions, expected {}",
                    s,
                    row.len(),
                    num_actions
                )));
            }
            for (a, t) in row.into_iter().enumerate() {
                validate_transition(&t, num_states, s, a)?;
                flat.push(t);
            }
        }
        Ok(Self {
            num_states,
            num_actions,
            rewards,
            discount,
            transitions: flat,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn reward(&self, state: State) -> f64 {
        self.rewards[state]
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn transition(&self, state: State, action: Action) -> &Transition {
        &self.transitions[state * self.num_actions + action]
    }

    /// Transitions indexed by `state * num_actions + action`.
    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    /// Transitions as nested `[state][action]` rows.
    pub fn transition_rows(&self) -> Vec<Vec<Transition>> {
        self.transitions
            .chunks(self.num_actions)
            .map(|row| row.to_vec())
            .collect()
    }

    /// True when every pair is stored in two-support form.
    pub fn is_two_support(&self) -> bool {
        self.transitions
            .iter()
            .all(|t| matches!(t, Transition::TwoSupport(_)))
    }

    /// Per-pair `(plus, minus, p)` when every pair reaches at most two states.
    pub fn two_support_pairs(&self) -> Result<Vec<TwoSupportTransition>> {
        self.transitions
            .iter()
            .enumerate()
            .map(|(i, t)| {
                t.as_two_support().ok_or(Error::NotTwoSupport {
                    state: i / self.num_actions,
                    action: i % self.num_actions,
                })
            })
            .collect()
    }

    /// Same MDP with a different reward vector; rewards are not range-checked.
    #[cfg(test)]
    pub(crate) fn with_rewards_unchecked(&self, rewards: Vec<f64>) -> Self {
        Self {
            rewards,
            ..self.clone()
        }
    }

    /// Same structure with every pair replaced by `transitions[state * A + action]`.
    pub fn with_transitions(&self, transitions: Vec<Transition>) -> Result<Self> {
        if transitions.len() != self.num_pairs() {
            return Err(Error::DimensionMismatch(format!(
                "{} transitions for {} pairs",
                transitions.len(),
                self.num_pairs()
            )));
        }
        for (i, t) in transitions.iter().enumerate() {
            validate_transition(
                t,
                self.num_states,
                i / self.num_actions,
                i % self.num_actions,
            )?;
        }
        Ok(Self {
            transitions,
            ..self.clone()
        })
    }

    pub fn check_state(&self, state: State) -> Result<()> {
        if state < self.num_states {
            Ok(())
        } else {
            Err(Error::InvalidState(state))
        }
    }

    pub fn check_policy(&self, policy: &StationaryPolicy) -> Result<()> {
        if policy.len() != self.num_states {
            return Err(Error::DimensionMismatch(format!(
                "policy covers {} states, MDP has {}",
                policy.len(),
                self.num_states
            )));
        }
        for (s, &a) in policy.actions().iter().enumerate() {
            if a >= self.num_actions {
                return Err(Error::InvalidPolicy {
                    state: s,
                    action: a,
                    num_actions: self.num_actions,
                });
            }
        }
        Ok(())
    }
}

fn validate_transition(t: &Transition, num_states: usize, s: State, a: Action) -> Result<()> {
    let bad = |reason: String| Error::InvalidTransition {
        state: s,
        action: a,
        reason,
    };
    match t {
        Transition::Dense(probs) => {
            if probs.len() != num_states {
                return Err(bad(format!(
                    "dense row has {} entries, expected {}",
                    probs.len(),
                    num_states
                )));
            }
            if let Some(p) = probs.iter().find(|p| !(p.is_finite() && **p >= 0.0)) {
                return Err(bad(format!("entry {p} is not a probability")));
            }
            let total: f64 = probs.iter().sum();
            if (total - 1.0).abs() > MASS_TOLERANCE {
                return Err(bad(format!("mass sums to {total}")));
            }
        }
        Transition::TwoSupport(ts) => {
            if ts.plus_state >= num_states || ts.minus_state >= num_states {
                return Err(bad("successor out of range".into()));
            }
            if !(0.0..=1.0).contains(&ts.plus_prob) {
                return Err(bad(format!(
                    "plus probability {} outside [0, 1]",
                    ts.plus_prob
                )));
            }
        }
    }
    Ok(())
}

/// Draws `s' ~ p(s, a)`, advancing `rng` exactly once.
pub fn sample_step<R: Rng + ?Sized>(
    mdp: &TabularMdp,
    state: State,
    action: Action,
    rng: &mut R,
) -> State {
    mdp.transition(state, action).sample(rng)
}

/// Deterministic stationary policy `π: S → A`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StationaryPolicy {
    action_of: Vec<Action>,
}

impl StationaryPolicy {
    pub fn new(action_of: Vec<Action>) -> Self {
        Self { action_of }
    }

    pub fn constant(num_states: usize, action: Action) -> Self {
        Self::new(vec![action; num_states])
    }

    pub fn action(&self, state: State) -> Action {
        self.action_of[state]
    }

    pub fn set_action(&mut self, state: State, action: Action) {
        self.action_of[state] = action;
    }

    pub fn actions(&self) -> &[Action] {
        &self.action_of
    }

    pub fn len(&self) -> usize {
        self.action_of.len()
    }

    pub fn is_empty(&self) -> bool {
        self.action_of.is_empty()
    }

    /// Every deterministic policy over `num_states` states and `num_actions` actions.
    pub fn enumerate(
        num_states: usize,
        num_actions: usize,
    ) -> impl Iterator<Item = StationaryPolicy> {
        let total = (num_actions as u64).pow(num_states as u32);
        (0..total).map(move |mut code| {
            let mut actions = Vec::with_capacity(num_states);
            for _ in 0..num_states {
                actions.push((code % num_actions as u64) as Action);
                code /= num_actions as u64;
            }
            StationaryPolicy::new(actions)
        })
    }
}

/// A value (or higher-moment value) function.
///
/// `moment_order = d` means the entries lie in `[0, (1/(1-γ))^(d+1)]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValueVector {
    pub values: Vec<f64>,
    pub moment_order: u32,
}

impl ValueVector {
    pub fn new(values: Vec<f64>, moment_order: u32) -> Self {
        Self {
            values,
            moment_order,
        }
    }

    pub fn get(&self, state: State) -> f64 {
        self.values[state]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    /// Upper end of the admissible range for this order.
    pub fn upper_bound(&self, discount: f64) -> f64 {
        (1.0 / (1.0 - discount)).powi(self.moment_order as i32 + 1)
    }

    pub fn sup_distance(&self, other: &ValueVector) -> f64 {
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

impl std::ops::Index<State> for ValueVector {
    type Output = f64;

    fn index(&self, state: State) -> &f64 {
        &self.values[state]
    }
}
