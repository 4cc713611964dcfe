use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::TraceRow;
use crate::error::{Error, Result};
use crate::mdp::{occupancy_weights, OccupancyWeights, State, StationaryPolicy, TabularMdp};
use crate::ucrl::{knownness, AgentState, UcrlConstants, VisitCounts};

/// Start times of exploration phases.
///
/// A step starts a phase when it is not a delay step, the optimistic and
/// estimated values of the current policy differ by at least `ε/2`, and it
/// lies at least `horizon` steps after the previous start.
pub fn detect_exploration_phases(rows: &[TraceRow], epsilon: f64, horizon: u64) -> Vec<u64> {
    let mut starts: Vec<u64> = Vec::new();
    for row in rows {
        let spaced = starts.last().map_or(true, |&prev| row.t >= prev + horizon);
        if !row.delay && spaced && row.v_tilde - row.v_pi >= epsilon / 2.0 {
            starts.push(row.t);
        }
    }
    starts
}

/// Importance level of an active weight: the largest `ι` with `w > w_ι`,
/// capped at `ι_max`. `None` when `w ≤ w_min`.
pub fn importance_level(weight: f64, constants: &UcrlConstants) -> Option<u32> {
    if !(weight > constants.w_min) {
        return None;
    }
    let mut level = 0;
    while level < constants.iota_max && weight > constants.w_iota(level + 1) {
        level += 1;
    }
    Some(level)
}

/// The active set and its split by importance level and knownness.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KnownPartition {
    /// States whose weight exceeds `w_min`, ascending.
    pub active: Vec<State>,
    /// Level of each active state, aligned with `active`.
    pub levels: Vec<u32>,
    /// `(κ, ι)` to the active states in that cell.
    pub cells: BTreeMap<(u64, u32), Vec<State>>,
}

/// Splits the active states by importance level and by the knownness of
/// `(s, π(s))` at that level.
pub fn partition_known_states(
    weights: &OccupancyWeights,
    counts: &VisitCounts,
    policy: &StationaryPolicy,
    constants: &UcrlConstants,
    m_override: Option<f64>,
) -> Result<KnownPartition> {
    if weights.weights.len() != counts.num_states() || policy.len() != counts.num_states() {
        return Err(Error::DimensionMismatch(
            "weights, counts and policy disagree on states".into(),
        ));
    }
    let mut partition = KnownPartition {
        active: Vec::new(),
        levels: Vec::new(),
        cells: BTreeMap::new(),
    };
    for (s, &w) in weights.weights.iter().enumerate() {
        let Some(iota) = importance_level(w, constants) else {
            continue;
        };
        let kappa = knownness(iota, counts.n(s, policy.action(s)), constants, m_override);
        partition.active.push(s);
        partition.levels.push(iota);
        partition.cells.entry((kappa, iota)).or_default().push(s);
    }
    Ok(partition)
}

/// Expected visits compared against the discounted weight at one state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VisitCheck {
    pub state: State,
    pub weight: f64,
    /// Mean number of visits over the next `H` steps.
    pub mean_visits: f64,
    pub standard_error: f64,
    /// `mean_visits ≥ weight/2 - 3 · standard_error`.
    pub passed: bool,
}

/// Runs `rollouts` forked continuations of `agent` for `H` steps each and
/// compares the mean visit count of every state with weight at least
/// `w_min` against half its weight under the agent's current policy.
pub fn visit_spot_check<R: Rng + ?Sized>(
    agent: &AgentState,
    env: &TabularMdp,
    rollouts: usize,
    rng: &mut R,
) -> Result<Vec<VisitCheck>> {
    if rollouts < 2 {
        return Err(Error::Precondition("need at least two rollouts".into()));
    }
    let constants = agent.constants();
    let weights = occupancy_weights(env, agent.policy(), agent.current_state())?;
    let watched: Vec<State> = (0..env.num_states())
        .filter(|&s| weights.get(s) >= constants.w_min)
        .collect();
    let mut sums = vec![0.0; watched.len()];
    let mut squares = vec![0.0; watched.len()];
    for _ in 0..rollouts {
        let mut fork = agent.clone();
        let mut visits = vec![0.0; env.num_states()];
        for _ in 0..constants.horizon {
            visits[fork.current_state()] += 1.0;
            fork.step(env, rng)?;
        }
        for (i, &s) in watched.iter().enumerate() {
            sums[i] += visits[s];
            squares[i] += visits[s] * visits[s];
        }
    }
    let n = rollouts as f64;
    Ok(watched
        .iter()
        .enumerate()
        .map(|(i, &s)| {
            let mean = sums[i] / n;
            let variance = ((squares[i] - n * mean * mean) / (n - 1.0)).max(0.0);
            let standard_error = (variance / n).sqrt();
            let weight = weights.get(s);
            VisitCheck {
                state: s,
                weight,
                mean_visits: mean,
                standard_error,
                passed: mean >= weight / 2.0 - 3.0 * standard_error,
            }
        })
        .collect())
}
