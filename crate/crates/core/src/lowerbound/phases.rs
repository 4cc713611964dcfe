use serde::{Deserialize, Serialize};

use super::{build_hard_mdp, HardMdpSpec, DECIDE, WAIT};
use crate::error::{Error, Result};
use crate::mdp::{evaluate_policy, Action, State, StationaryPolicy};

/// One stay in the waiting state, from arrival to the step before the
/// decision state.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRecord {
    /// 1-based phase number.
    pub index: usize,
    /// First step of the phase (1-based time).
    pub start: usize,
    /// Last step spent in the waiting state.
    pub end: usize,
    pub length: usize,
    /// The phase lasted at least `1/(4(1-γ))` steps.
    pub long: bool,
    /// The phase lasted at least `1/(16(1-γ))` steps and the suboptimal
    /// weight at its start was at least `1/4`.
    pub costly: bool,
    pub suboptimal_weight: f64,
}

/// Splits a hard-MDP state trace into phases.
///
/// Time starts at 1 with the first state, which must be the waiting state.
/// Only phases that reach the decision state are reported.
/// `suboptimal_weights[i]` is the weight of the non-optimal arms at the
/// start of phase `i + 1`.
pub fn phase_statistics(
    states: &[State],
    suboptimal_weights: &[f64],
    spec: &HardMdpSpec,
) -> Result<Vec<PhaseRecord>> {
    if states.is_empty() {
        return Ok(Vec::new());
    }
    if states[0] != WAIT {
        return Err(Error::Precondition(
            "a trace must start in the waiting state".into(),
        ));
    }
    let horizon = 1.0 / (1.0 - spec.discount());
    let mut phases = Vec::new();
    let mut start = None;
    for (i, &s) in states.iter().enumerate() {
        if s == WAIT && (i == 0 || states[i - 1] != WAIT) {
            start = Some(i + 1);
        }
        if s == WAIT && states.get(i + 1) == Some(&DECIDE) {
            let begin = start.take().expect("a waiting run has a start");
            let index = phases.len() + 1;
            let weight = *suboptimal_weights.get(index - 1).ok_or_else(|| {
                Error::Precondition(format!("no suboptimal weight supplied for phase {index}"))
            })?;
            let length = i + 1 - begin + 1;
            let len = length as f64;
            phases.push(PhaseRecord {
                index,
                start: begin,
                end: i + 1,
                length,
                long: len >= horizon / 4.0,
                costly: len >= horizon / 16.0 && weight >= 0.25,
                suboptimal_weight: weight,
            });
        }
    }
    Ok(phases)
}

/// `V*(1) - V^π(1)` where `π` plays `suboptimal_action` at the decision
/// state and the optimal arm everywhere else; both sides are exact
/// evaluations.
pub fn suboptimality_gap_check(spec: &HardMdpSpec, suboptimal_action: Action) -> Result<f64> {
    if suboptimal_action == spec.optimal_arm() {
        return Err(Error::Precondition(
            "the compared action must differ from the optimal arm".into(),
        ));
    }
    if suboptimal_action >= spec.num_actions() {
        return Err(Error::Precondition(format!(
            "action {suboptimal_action} out of range"
        )));
    }
    let mdp = build_hard_mdp(spec)?;
    let best = StationaryPolicy::constant(4, spec.optimal_arm());
    let mut worse = best.clone();
    worse.set_action(DECIDE, suboptimal_action);
    let v_best = evaluate_policy(&mdp, &best, None, 0)?;
    let v_worse = evaluate_policy(&mdp, &worse, None, 0)?;
    Ok(v_best[DECIDE] - v_worse[DECIDE])
}
