use rand::Rng;
use serde::{Deserialize, Serialize};

use super::constants::{knownness, UcrlConstants};
use super::model::{extended_value_iteration, ModelClass, OptimisticPlan, VisitCounts};
use crate::error::{Error, Result};
use crate::mdp::{sample_step, Action, State, StationaryPolicy, TabularMdp};

/// Whether the agent is following its policy freely or counting down the
/// forced steps that precede an update.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Phase {
    Acting,
    Delaying { remaining: u64 },
}

/// The pair and importance level whose knownness changed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateTrigger {
    pub state: State,
    pub action: Action,
    pub iota: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub episode: u64,
    /// Steps taken outside the delay phase.
    pub steps: u64,
    pub delay_steps: u64,
    pub update_trigger: Option<UpdateTrigger>,
    /// Visits to pairs that were not yet at the top knownness level for
    /// every importance level.
    pub useful_visits: u64,
}

impl EpisodeLog {
    fn new(episode: u64) -> Self {
        Self {
            episode,
            steps: 0,
            delay_steps: 0,
            update_trigger: None,
            useful_visits: 0,
        }
    }
}

/// What happened during one call to [`AgentState::advance`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: u64,
    /// Episode whose policy chose the action.
    pub episode: u64,
    pub state: State,
    pub action: Action,
    pub next_state: State,
    /// The step was one of the forced steps before an update.
    pub delay: bool,
    /// An update ran after this step; the next action uses the new policy.
    pub updated: bool,
}

/// The learner's full decision state. Cloning gives an independent copy.
#[derive(Debug, Clone)]
pub struct AgentState {
    constants: UcrlConstants,
    m: f64,
    skeleton: TabularMdp,
    counts: VisitCounts,
    episode: u64,
    t: u64,
    state: State,
    phase: Phase,
    plan: OptimisticPlan,
    evi_tolerance: f64,
    episodes: Vec<EpisodeLog>,
    updates: u64,
}

impl AgentState {
    /// A fresh agent at `start`. The skeleton supplies rewards, discount and
    /// the two successors of each pair; its probabilities are never read.
    pub fn new(
        constants: UcrlConstants,
        skeleton: &TabularMdp,
        start: State,
        m_override: Option<f64>,
        evi_tolerance: f64,
    ) -> Result<Self> {
        require_two_support(skeleton)?;
        if skeleton.num_states() != constants.num_states
            || skeleton.num_actions() != constants.num_actions
        {
            return Err(Error::DimensionMismatch(format!(
                "constants are for {}x{} but the environment is {}x{}",
                constants.num_states,
                constants.num_actions,
                skeleton.num_states(),
                skeleton.num_actions()
            )));
        }
        skeleton.check_state(start)?;
        let m = m_override.unwrap_or(constants.m);
        if !(m > 0.0) {
            return Err(Error::Domain(format!("m = {m} must be positive")));
        }
        let counts = VisitCounts::new(skeleton.num_states(), skeleton.num_actions());
        let model = ModelClass::new(skeleton, &counts, constants.l1)?;
        let plan = extended_value_iteration(&model, skeleton, evi_tolerance)?;
        Ok(Self {
            constants,
            m,
            skeleton: skeleton.clone(),
            counts,
            episode: 1,
            t: 1,
            state: start,
            phase: Phase::Acting,
            plan,
            evi_tolerance,
            episodes: vec![EpisodeLog::new(1)],
            updates: 0,
        })
    }

    /// Replaces the current plan, e.g. to start from a known model.
    pub fn with_plan(mut self, plan: OptimisticPlan) -> Result<Self> {
        if plan.mdp.num_states() != self.skeleton.num_states()
            || plan.mdp.num_actions() != self.skeleton.num_actions()
        {
            return Err(Error::DimensionMismatch(
                "plan does not match the environment".into(),
            ));
        }
        plan.mdp.check_policy(&plan.policy)?;
        self.plan = plan;
        Ok(self)
    }

    pub fn constants(&self) -> &UcrlConstants {
        &self.constants
    }

    /// The `m` in use: the override if one was given.
    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn skeleton(&self) -> &TabularMdp {
        &self.skeleton
    }

    pub fn counts(&self) -> &VisitCounts {
        &self.counts
    }

    pub fn episode(&self) -> u64 {
        self.episode
    }

    pub fn time(&self) -> u64 {
        self.t
    }

    pub fn current_state(&self) -> State {
        self.state
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    pub fn plan(&self) -> &OptimisticPlan {
        &self.plan
    }

    pub fn policy(&self) -> &StationaryPolicy {
        &self.plan.policy
    }

    pub fn optimistic_mdp(&self) -> &TabularMdp {
        &self.plan.mdp
    }

    pub fn episodes(&self) -> &[EpisodeLog] {
        &self.episodes
    }

    pub fn update_count(&self) -> u64 {
        self.updates
    }

    /// Action the current policy takes in the current state.
    pub fn action(&self) -> Action {
        self.plan.policy.action(self.state)
    }

    /// Samples one transition from `env` and feeds it to [`Self::advance`].
    pub fn step<R: Rng + ?Sized>(&mut self, env: &TabularMdp, rng: &mut R) -> Result<StepRecord> {
        require_two_support(env)?;
        if env.num_states() != self.skeleton.num_states()
            || env.num_actions() != self.skeleton.num_actions()
        {
            return Err(Error::DimensionMismatch(
                "environment does not match the agent".into(),
            ));
        }
        let next = sample_step(env, self.state, self.action(), rng);
        self.advance(next)
    }

    /// One time step with an externally observed successor.
    ///
    /// The action is the current policy's. After an ordinary step the
    /// visited pair's knownness is compared with and without the pending
    /// counts; a change starts a delay of `H` steps, still under the same
    /// policy, after which the counts are folded in and the plan rebuilt.
    pub fn advance(&mut self, next: State) -> Result<StepRecord> {
        self.skeleton.check_state(next)?;
        let (s, a) = (self.state, self.action());
        let delay = matches!(self.phase, Phase::Delaying { .. });
        let useful = self.is_useful(s, a);
        self.counts.record(s, a, next);

        let log = self.episodes.last_mut().expect("an episode is always open");
        if delay {
            log.delay_steps += 1;
        } else {
            log.steps += 1;
        }
        log.useful_visits += u64::from(useful);

        let record_t = self.t;
        let record_episode = self.episode;
        self.t += 1;
        self.state = next;

        let mut updated = false;
        match self.phase {
            Phase::Acting => {
                if let Some(iota) = self.changed_level(s, a) {
                    let log = self.episodes.last_mut().expect("an episode is always open");
                    log.update_trigger = Some(UpdateTrigger {
                        state: s,
                        action: a,
                        iota,
                    });
                    if self.constants.horizon == 0 {
                        self.update()?;
                        updated = true;
                    } else {
                        self.phase = Phase::Delaying {
                            remaining: self.constants.horizon,
                        };
                    }
                }
            }
            Phase::Delaying { remaining } => {
                if remaining <= 1 {
                    self.phase = Phase::Acting;
                    self.update()?;
                    updated = true;
                } else {
                    self.phase = Phase::Delaying {
                        remaining: remaining - 1,
                    };
                }
            }
        }

        Ok(StepRecord {
            t: record_t,
            episode: record_episode,
            state: s,
            action: a,
            next_state: next,
            delay,
            updated,
        })
    }

    /// Lowest importance level at which folding in the pending counts of
    /// `(s, a)` would change its knownness.
    fn changed_level(&self, s: State, a: Action) -> Option<u32> {
        let n = self.counts.n(s, a);
        let nv = n + self.counts.v(s, a);
        self.constants.iota_set.iter().copied().find(|&iota| {
            knownness(iota, n, &self.constants, Some(self.m))
                != knownness(iota, nv, &self.constants, Some(self.m))
        })
    }

    fn is_useful(&self, s: State, a: Action) -> bool {
        let total = self.counts.n(s, a) + self.counts.v(s, a);
        let top = self.constants.kappa_set.last().copied().unwrap_or(0);
        self.constants
            .iota_set
            .iter()
            .any(|&iota| knownness(iota, total, &self.constants, Some(self.m)) < top)
    }

    fn update(&mut self) -> Result<()> {
        self.counts.fold();
        let model = ModelClass::new(&self.skeleton, &self.counts, self.constants.l1)?;
        self.plan = extended_value_iteration(&model, &self.skeleton, self.evi_tolerance)?;
        self.episode += 1;
        self.updates += 1;
        self.episodes.push(EpisodeLog::new(self.episode));
        log::debug!("update {} at t = {}", self.updates, self.t);
        Ok(())
    }
}

fn require_two_support(mdp: &TabularMdp) -> Result<()> {
    if mdp.is_two_support() {
        return Ok(());
    }
    let (state, action) = (0..mdp.num_states())
        .flat_map(|s| (0..mdp.num_actions()).map(move |a| (s, a)))
        .find(|&(s, a)| mdp.transition(s, a).as_two_support().is_none())
        .unwrap_or((0, 0));
    Err(Error::NotTwoSupport { state, action })
}
