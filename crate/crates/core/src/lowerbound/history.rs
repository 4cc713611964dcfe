use std::sync::Arc;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, Bandit, HardMdpSpec, DECIDE, LOSS, WAIT, WIN};
use crate::error::{Error, Result};
use crate::mdp::{Action, State};
use crate::ucrl::AgentState;

/// A deterministic policy over state histories.
///
/// The implementor holds the history seen so far. `fork` must return a copy
/// that can be fed hypothetical continuations without touching `self`.
pub trait HistoryPolicy {
    /// Action for the current history.
    fn action(&self) -> Action;
    /// Appends the next state; the action taken is `self.action()`.
    fn observe(&mut self, next: State) -> Result<()>;
    fn last_state(&self) -> State;
    fn fork(&self) -> Box<dyn HistoryPolicy>;
}

type Rule = Arc<dyn Fn(&[State]) -> Action + Send + Sync>;

/// A policy given as a function of the full history.
#[derive(Clone)]
pub struct FnHistoryPolicy {
    history: Vec<State>,
    rule: Rule,
}

impl FnHistoryPolicy {
    /// `history` must be non-empty; a run on the hard MDP starts at `[0]`.
    pub fn new(
        history: Vec<State>,
        rule: impl Fn(&[State]) -> Action + Send + Sync + 'static,
    ) -> Result<Self> {
        if history.is_empty() {
            return Err(Error::Precondition(
                "a history needs at least one state".into(),
            ));
        }
        Ok(Self {
            history,
            rule: Arc::new(rule),
        })
    }

    pub fn history(&self) -> &[State] {
        &self.history
    }
}

impl std::fmt::Debug for FnHistoryPolicy {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FnHistoryPolicy")
            .field("history", &self.history)
            .finish()
    }
}

impl HistoryPolicy for FnHistoryPolicy {
    fn action(&self) -> Action {
        (self.rule)(&self.history)
    }

    fn observe(&mut self, next: State) -> Result<()> {
        self.history.push(next);
        Ok(())
    }

    fn last_state(&self) -> State {
        *self.history.last().expect("history is never empty")
    }

    fn fork(&self) -> Box<dyn HistoryPolicy> {
        Box::new(self.clone())
    }
}

impl HistoryPolicy for AgentState {
    fn action(&self) -> Action {
        AgentState::action(self)
    }

    fn observe(&mut self, next: State) -> Result<()> {
        self.advance(next).map(|_| ())
    }

    fn last_state(&self) -> State {
        self.current_state()
    }

    fn fork(&self) -> Box<dyn HistoryPolicy> {
        Box::new(self.clone())
    }
}

/// Number of series terms needed so the neglected tail of
/// `Σ_k p^k (1-p) γ^k` is at most `tail_tol`.
pub fn tail_cutoff(spec: &HardMdpSpec, tail_tol: f64) -> usize {
    let (p, g) = (spec.p(), spec.discount());
    let ratio = p * g;
    let k = (tail_tol * (1.0 - ratio) / (1.0 - p)).ln() / ratio.ln();
    k.ceil().max(0.0) as usize
}

/// Discounted probability that the first action at the decision state is
/// `a`, for every `a`, seen from the current history.
///
/// Continuation `k` stays in the waiting state `k` more steps and then
/// moves on; its weight is `p^k (1-p) γ^k`. The series is cut after
/// [`tail_cutoff`] terms, so the total lies in `[1/2 - tail_tol, 1/2]`.
pub fn action_weights(
    policy: &dyn HistoryPolicy,
    spec: &HardMdpSpec,
    tail_tol: f64,
) -> Result<Vec<f64>> {
    if policy.last_state() != WAIT {
        return Err(Error::Precondition(format!(
            "weights are defined in the waiting state, history ends in {}",
            policy.last_state()
        )));
    }
    if !(tail_tol > 0.0) {
        return Err(Error::Precondition(format!(
            "tail tolerance {tail_tol} must be positive"
        )));
    }
    let (p, g) = (spec.p(), spec.discount());
    let mut weights = vec![0.0; spec.num_actions()];
    let mut walker = policy.fork();
    let mut scale = 1.0 - p;
    for _ in 0..tail_cutoff(spec, tail_tol) {
        let mut probe = walker.fork();
        probe.observe(DECIDE)?;
        let a = probe.action();
        let slot = weights
            .get_mut(a)
            .ok_or_else(|| Error::Precondition(format!("policy chose action {a} out of range")))?;
        *slot += scale;
        walker.observe(WAIT)?;
        scale *= p * g;
    }
    Ok(weights)
}

/// Outcome of running a policy against a bandit hidden in the hard MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BanditVerdict {
    /// Majority of the per-phase leading arms.
    pub arm: Action,
    /// Leading arm at each phase start.
    pub phase_leaders: Vec<Action>,
    /// Action weights at each phase start.
    pub phase_weights: Vec<Vec<f64>>,
    /// Every visited state, starting with the initial waiting state.
    pub states: Vec<State>,
}

/// Plays the hard-MDP dynamics with the decision-state outcome drawn from
/// `bandit`, recording action weights at each phase start, until the
/// bandit has been pulled `2 * rounds` times.
///
/// Each step consumes exactly one uniform draw. Ties go to the lowest arm,
/// both per phase and in the final vote.
pub fn learn_bandit<R: Rng + ?Sized>(
    policy: &mut dyn HistoryPolicy,
    bandit: &Bandit,
    spec: &HardMdpSpec,
    rounds: usize,
    tail_tol: f64,
    rng: &mut R,
) -> Result<BanditVerdict> {
    if rounds == 0 {
        return Err(Error::Precondition("need at least one round".into()));
    }
    if bandit.num_arms() != spec.num_actions() {
        return Err(Error::DimensionMismatch(format!(
            "bandit has {} arms but the spec has {} actions",
            bandit.num_arms(),
            spec.num_actions()
        )));
    }
    if policy.last_state() != WAIT {
        return Err(Error::Precondition(
            "a run must start in the waiting state".into(),
        ));
    }
    let (p, q) = (spec.p(), spec.q());
    let mut phase_weights = vec![action_weights(policy, spec, tail_tol)?];
    let mut states = vec![WAIT];
    let mut pulls = 0;
    let mut state = WAIT;
    while pulls < 2 * rounds {
        let a = policy.action();
        let next = match state {
            WAIT => {
                if rng.gen::<f64>() < p {
                    WAIT
                } else {
                    DECIDE
                }
            }
            DECIDE => {
                if a >= bandit.num_arms() {
                    return Err(Error::Precondition(format!(
                        "policy chose arm {a} out of range"
                    )));
                }
                pulls += 1;
                if bandit.pull(a, rng) {
                    WIN
                } else {
                    LOSS
                }
            }
            _ => {
                if rng.gen::<f64>() < q {
                    state
                } else {
                    WAIT
                }
            }
        };
        policy.observe(next)?;
        states.push(next);
        if next == WAIT && state != WAIT && pulls < 2 * rounds {
            phase_weights.push(action_weights(policy, spec, tail_tol)?);
        }
        state = next;
    }
    debug_assert!(matches!(state, WIN | LOSS));

    let phase_leaders: Vec<Action> = phase_weights.iter().map(|w| argmax(w)).collect();
    let mut votes = vec![0.0; spec.num_actions()];
    for &a in &phase_leaders {
        votes[a] += 1.0;
    }
    Ok(BanditVerdict {
        arm: argmax(&votes),
        phase_leaders,
        phase_weights,
        states,
    })
}
