//! The four-state hard instance, its chained variant, and the bandit
//! reduction used to argue that every learner makes many mistakes on it.

mod history;
mod phases;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{Action, State, TabularMdp, Transition, TwoSupportTransition};

pub use history::{
    action_weights, learn_bandit, tail_cutoff, BanditVerdict, FnHistoryPolicy, HistoryPolicy,
};
pub use phases::{phase_statistics, suboptimality_gap_check, PhaseRecord};

/// The waiting state; a run starts here.
pub const WAIT: State = 0;
/// The decision state where the embedded bandit is played.
pub const DECIDE: State = 1;
/// The rewarding state reached on a win.
pub const WIN: State = 2;
/// The unrewarding state reached on a loss.
pub const LOSS: State = 3;

/// Default truncation tolerance for [`action_weights`].
pub const DEFAULT_TAIL_TOL: f64 = 1e-9;

/// Parameters of the hard instance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HardMdpSpec {
    num_actions: usize,
    epsilon: f64,
    discount: f64,
    optimal_arm: Action,
}

impl HardMdpSpec {
    /// Requires `γ > 3/4`, at least two actions and `16 ε (1-γ) ≤ 1/2`.
    pub fn new(
        num_actions: usize,
        epsilon: f64,
        discount: f64,
        optimal_arm: Action,
    ) -> Result<Self> {
        if num_actions < 2 {
            return Err(Error::Domain(format!(
                "need at least two actions, got {num_actions}"
            )));
        }
        if optimal_arm >= num_actions {
            return Err(Error::Domain(format!(
                "optimal arm {optimal_arm} out of range"
            )));
        }
        if !(discount > 0.75 && discount < 1.0) {
            return Err(Error::Domain(format!(
                "discount {discount} must lie in (3/4, 1)"
            )));
        }
        if !(epsilon >= 0.0) {
            return Err(Error::Domain(format!(
                "epsilon {epsilon} must be non-negative"
            )));
        }
        let spec = Self {
            num_actions,
            epsilon,
            discount,
            optimal_arm,
        };
        if spec.eps_star() > 0.5 {
            return Err(Error::Domain(format!(
                "16 ε (1-γ) = {} exceeds 1/2; lower epsilon",
                spec.eps_star()
            )));
        }
        Ok(spec)
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    pub fn optimal_arm(&self) -> Action {
        self.optimal_arm
    }

    /// Self-loop probability of the waiting state, `1/(2-γ)`.
    pub fn p(&self) -> f64 {
        1.0 / (2.0 - self.discount)
    }

    /// Self-loop probability of the win and loss states, `2 - 1/γ`.
    pub fn q(&self) -> f64 {
        2.0 - 1.0 / self.discount
    }

    /// Extra win probability of the optimal arm, `16 ε (1-γ)`.
    pub fn eps_star(&self) -> f64 {
        16.0 * self.epsilon * (1.0 - self.discount)
    }

    /// Win probability of `arm` at the decision state.
    pub fn win_prob(&self, arm: Action) -> f64 {
        if arm == self.optimal_arm {
            0.5 + self.eps_star()
        } else {
            0.5
        }
    }

    /// Same parameters with a different optimal arm.
    pub fn with_optimal_arm(&self, optimal_arm: Action) -> Result<Self> {
        Self::new(self.num_actions, self.epsilon, self.discount, optimal_arm)
    }
}

fn pair(plus: State, minus: State, p: f64) -> Transition {
    Transition::TwoSupport(TwoSupportTransition::new(plus, minus, p))
}

/// Rows of one copy with states offset by `base`; leaving the win or loss
/// state goes to `next_wait`.
fn copy_rows(spec: &HardMdpSpec, base: State, next_wait: State) -> Vec<Vec<Transition>> {
    let a_count = spec.num_actions;
    let (p, q) = (spec.p(), spec.q());
    vec![
        vec![pair(base + WAIT, base + DECIDE, p); a_count],
        (0..a_count)
            .map(|a| pair(base + WIN, base + LOSS, spec.win_prob(a)))
            .collect(),
        vec![pair(base + WIN, next_wait, q); a_count],
        vec![pair(base + LOSS, next_wait, q); a_count],
    ]
}

fn copy_rewards() -> [f64; 4] {
    let mut r = [0.0; 4];
    r[WIN] = 1.0;
    r
}

pub fn build_hard_mdp(spec: &HardMdpSpec) -> Result<TabularMdp> {
    TabularMdp::new(
        4,
        spec.num_actions,
        copy_rewards().to_vec(),
        spec.discount,
        copy_rows(spec, 0, WAIT),
    )
}

/// `arms.len()` copies, copy `i` occupying states `4i..4i+4` with its own
/// optimal arm `arms[i]`. Leaving copy `i`'s win or loss state enters the
/// waiting state of copy `i + 1`, wrapping around.
pub fn chain_hard_mdps(spec: &HardMdpSpec, arms: &[Action]) -> Result<TabularMdp> {
    if arms.is_empty() {
        return Err(Error::Domain("need at least one copy".into()));
    }
    let copies = arms.len();
    let mut rows = Vec::with_capacity(4 * copies);
    let mut rewards = Vec::with_capacity(4 * copies);
    for (i, &arm) in arms.iter().enumerate() {
        let copy = spec.with_optimal_arm(arm)?;
        let next_wait = 4 * ((i + 1) % copies) + WAIT;
        rows.extend(copy_rows(&copy, 4 * i, next_wait));
        rewards.extend(copy_rewards());
    }
    TabularMdp::new(4 * copies, spec.num_actions, rewards, spec.discount, rows)
}

/// One optimal arm per copy, drawn uniformly from a seeded generator.
pub fn draw_optimal_arms(num_actions: usize, copies: usize, seed: u64) -> Vec<Action> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..copies).map(|_| rng.gen_range(0..num_actions)).collect()
}

/// Bernoulli arms.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bandit {
    arm_probs: Vec<f64>,
}

impl Bandit {
    pub fn new(arm_probs: Vec<f64>) -> Result<Self> {
        if arm_probs.is_empty() {
            return Err(Error::Domain("a bandit needs at least one arm".into()));
        }
        if let Some(bad) = arm_probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
            return Err(Error::Domain(format!(
                "arm probability {bad} outside [0, 1]"
            )));
        }
        Ok(Self { arm_probs })
    }

    pub fn arm_probs(&self) -> &[f64] {
        &self.arm_probs
    }

    pub fn num_arms(&self) -> usize {
        self.arm_probs.len()
    }

    /// Lowest-index arm with the highest probability.
    pub fn best_arm(&self) -> Action {
        argmax(&self.arm_probs)
    }

    /// One pull; consumes exactly one uniform draw.
    pub fn pull<R: Rng + ?Sized>(&self, arm: Action, rng: &mut R) -> bool {
        rng.gen::<f64>() < self.arm_probs[arm]
    }
}

/// All arms at `1/2` except `optimal_arm` at `1/2 + epsilon`.
pub fn hard_bandit_instance(
    num_actions: usize,
    epsilon: f64,
    optimal_arm: Action,
) -> Result<Bandit> {
    if optimal_arm >= num_actions {
        return Err(Error::Domain(format!(
            "optimal arm {optimal_arm} out of range"
        )));
    }
    if !(0.0..=0.5).contains(&epsilon) {
        return Err(Error::Domain(format!("epsilon {epsilon} outside [0, 1/2]")));
    }
    let mut probs = vec![0.5; num_actions];
    probs[optimal_arm] += epsilon;
    Bandit::new(probs)
}

/// Index of the first maximum.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}
