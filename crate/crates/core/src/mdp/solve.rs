use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{State, StationaryPolicy, TabularMdp, ValueVector};
use crate::error::{Error, Result};

/// Relative slack allowed when checking a reward against its moment range.
const RANGE_SLACK: f64 = 1e-9;

/// Discounted visit weights `w(s)` of the pairs `(s, π(s))` from `start_state`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyWeights {
    pub start_state: State,
    pub weights: Vec<f64>,
}

impl OccupancyWeights {
    pub fn get(&self, state: State) -> f64 {
        self.weights[state]
    }

    pub fn total(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Value moments `V_d` and local variances `σ_d²` for each order `d`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentStack {
    pub orders: Vec<u32>,
    pub values_by_order: Vec<ValueVector>,
    pub variances_by_order: Vec<Vec<f64>>,
}

impl MomentStack {
    pub fn values(&self, order: u32) -> Option<&ValueVector> {
        self.index_of(order).map(|i| &self.values_by_order[i])
    }

    pub fn variances(&self, order: u32) -> Option<&[f64]> {
        self.index_of(order)
            .map(|i| self.variances_by_order[i].as_slice())
    }

    fn index_of(&self, order: u32) -> Option<usize> {
        self.orders.iter().position(|&d| d == order)
    }
}

/// `P_π` as a dense matrix.
fn policy_matrix(mdp: &TabularMdp, policy: &StationaryPolicy) -> DMatrix<f64> {
    let n = mdp.num_states();
    let mut p = DMatrix::zeros(n, n);
    for s in 0..n {
        mdp.transition(s, policy.action(s))
            .for_each_successor(|next, q| p[(s, next)] += q);
    }
    p
}

/// Solves `A x = b` by LU with one round of iterative refinement.
fn solve_refined(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let lu = a.clone().lu();
    let mut x = lu
        .solve(b)
        .ok_or_else(|| Error::Domain("singular Bellman system".into()))?;
    let residual = b - a * &x;
    if let Some(dx) = lu.solve(&residual) {
        x += dx;
    }
    Ok(x)
}

fn bellman_system(mdp: &TabularMdp, policy: &StationaryPolicy) -> DMatrix<f64> {
    let n = mdp.num_states();
    DMatrix::identity(n, n) - policy_matrix(mdp, policy) * mdp.discount()
}

/// Exact value of `policy`, solving `(I - γ P_π) V = r`.
///
/// With `reward_override` the rewards are replaced by a vector in
/// `[0, (1/(1-γ))^moment_order]`, which is how higher moments are evaluated.
pub fn evaluate_policy(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    reward_override: Option<&[f64]>,
    moment_order: u32,
) -> Result<ValueVector> {
    mdp.check_policy(policy)?;
    let rewards = match reward_override {
        Some(r) => {
            if r.len() != mdp.num_states() {
                return Err(Error::DimensionMismatch(format!(
                    "reward override has {} entries for {} states",
                    r.len(),
                    mdp.num_states()
                )));
            }
            let bound = (1.0 / (1.0 - mdp.discount())).powi(moment_order as i32);
            for (s, &v) in r.iter().enumerate() {
                if !(v >= 0.0 && v <= bound * (1.0 + RANGE_SLACK)) {
                    return Err(Error::InvalidReward {
                        state: s,
                        value: v,
                        bound,
                    });
                }
            }
            r
        }
        None => mdp.rewards(),
    };
    let a = bellman_system(mdp, policy);
    let b = DVector::from_column_slice(rewards);
    let x = solve_refined(&a, &b)?;
    Ok(ValueVector::new(x.iter().copied().collect(), moment_order))
}

/// Greedy policy for `values`; ties go to the lowest action index.
pub(crate) fn greedy_policy(mdp: &TabularMdp, values: &[f64]) -> StationaryPolicy {
    let actions = (0..mdp.num_states())
        .map(|s| {
            let mut best = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..mdp.num_actions() {
                let q = mdp.transition(s, a).expect(values);
                if q > best_q {
                    best_q = q;
                    best = a;
                }
            }
            best
        })
        .collect();
    StationaryPolicy::new(actions)
}

/// Stopping threshold on successive sup-norm change that makes the greedy
/// policy `tolerance`-optimal.
pub(crate) fn stopping_threshold(tolerance: f64, discount: f64) -> f64 {
    tolerance * (1.0 - discount) / (2.0 * discount)
}

/// Value iteration followed by exact evaluation of the greedy policy.
///
/// The returned value is `V^π` for the returned `π`, so it never exceeds
/// `V*` and is within `tolerance` of it.
pub fn solve_optimal(mdp: &TabularMdp, tolerance: f64) -> Result<(ValueVector, StationaryPolicy)> {
    if !(tolerance > 0.0) {
        return Err(Error::Domain(format!(
            "tolerance {tolerance} must be positive"
        )));
    }
    let gamma = mdp.discount();
    let threshold = stopping_threshold(tolerance, gamma);
    let n = mdp.num_states();
    let mut values = vec![0.0; n];
    let mut next = vec![0.0; n];
    loop {
        let mut change: f64 = 0.0;
        for s in 0..n {
            let best = (0..mdp.num_actions())
                .map(|a| mdp.transition(s, a).expect(&values))
                .fold(f64::NEG_INFINITY, f64::max);
            next[s] = mdp.reward(s) + gamma * best;
            change = change.max((next[s] - values[s]).abs());
        }
        std::mem::swap(&mut values, &mut next);
        if change <= threshold {
            break;
        }
    }
    let policy = greedy_policy(mdp, &values);
    let exact = evaluate_policy(mdp, &policy, None, 0)?;
    Ok((exact, policy))
}

/// Occupancy weights `w(s) = w^π(s, π(s) | start_state)`.
///
/// Row `start_state` of `(I - γ P_π)^{-1}`, obtained from the transposed system.
pub fn occupancy_weights(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    start_state: State,
) -> Result<OccupancyWeights> {
    mdp.check_policy(policy)?;
    mdp.check_state(start_state)?;
    let a = bellman_system(mdp, policy).transpose();
    let mut e = DVector::zeros(mdp.num_states());
    e[start_state] = 1.0;
    let w = solve_refined(&a, &e)?;
    Ok(OccupancyWeights {
        start_state,
        weights: w.iter().map(|&x| x.max(0.0)).collect(),
    })
}

/// `σ²(s) = E[V(s')²] - E[V(s')]²` under `p(s, π(s))`, clamped at zero.
pub fn local_variance(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    value: &ValueVector,
) -> Result<Vec<f64>> {
    mdp.check_policy(policy)?;
    if value.len() != mdp.num_states() {
        return Err(Error::DimensionMismatch(format!(
            "value has {} entries for {} states",
            value.len(),
            mdp.num_states()
        )));
    }
    let v = value.as_slice();
    let squared: Vec<f64> = v.iter().map(|x| x * x).collect();
    Ok((0..mdp.num_states())
        .map(|s| {
            let t = mdp.transition(s, policy.action(s));
            let mean = t.expect(v);
            (t.expect(&squared) - mean * mean).max(0.0)
        })
        .collect())
}

/// Checks that `orders` is a prefix of `0, 2, 6, 14, ...` (each `d > 0`
/// must have its predecessor `(d - 2) / 2`). Returns them sorted.
fn normalized_orders(orders: &[u32]) -> Result<Vec<u32>> {
    let mut sorted = orders.to_vec();
    sorted.sort_unstable();
    sorted.dedup();
    let valid = !sorted.is_empty()
        && sorted
            .iter()
            .enumerate()
            .all(|(i, &d)| u64::from(d) == (1u64 << (i + 1)) - 2);
    if valid {
        Ok(sorted)
    } else {
        Err(Error::InvalidOrderSet(orders.to_vec()))
    }
}

/// Runs the moment recurrence: `V_0` from the true rewards, then
/// `r_{2d+2} = σ_d²` feeds `V_{2d+2}`.
pub fn moment_values(
    mdp: &TabularMdp,
    policy: &StationaryPolicy,
    orders: &[u32],
) -> Result<MomentStack> {
    let orders = normalized_orders(orders)?;
    let mut values_by_order = Vec::with_capacity(orders.len());
    let mut variances_by_order: Vec<Vec<f64>> = Vec::with_capacity(orders.len());
    for &d in &orders {
        let value = match variances_by_order.last() {
            None => evaluate_policy(mdp, policy, None, 0)?,
            Some(prev) => evaluate_policy(mdp, policy, Some(prev), d)?,
        };
        let variance = local_variance(mdp, policy, &value)?;
        values_by_order.push(value);
        variances_by_order.push(variance);
    }
    Ok(MomentStack {
        orders,
        values_by_order,
        variances_by_order,
    })
}

/// Both sides of the value-difference identity
/// `V_a(s) - V_b(s) = γ Σ_s' w_a(s') (p_a(s') - p_b(s')) · V_b`.
pub fn value_difference_decomposition(
    mdp_a: &TabularMdp,
    mdp_b: &TabularMdp,
    policy: &StationaryPolicy,
    start_state: State,
) -> Result<(f64, f64)> {
    if mdp_a.num_states() != mdp_b.num_states() || mdp_a.num_actions() != mdp_b.num_actions() {
        return Err(Error::StructuralMismatch(
            "state or action counts differ".into(),
        ));
    }
    if mdp_a.rewards() != mdp_b.rewards() {
        return Err(Error::StructuralMismatch("rewards differ".into()));
    }
    if mdp_a.discount() != mdp_b.discount() {
        return Err(Error::StructuralMismatch("discounts differ".into()));
    }
    let va = evaluate_policy(mdp_a, policy, None, 0)?;
    let vb = evaluate_policy(mdp_b, policy, None, 0)?;
    let w = occupancy_weights(mdp_a, policy, start_state)?;
    let rhs: f64 = (0..mdp_a.num_states())
        .map(|s| {
            let a = policy.action(s);
            let diff = mdp_a.transition(s, a).expect(vb.as_slice())
                - mdp_b.transition(s, a).expect(vb.as_slice());
            w.get(s) * diff
        })
        .sum::<f64>()
        * mdp_a.discount();
    Ok((va[start_state] - vb[start_state], rhs))
}
