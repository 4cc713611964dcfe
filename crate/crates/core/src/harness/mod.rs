//! Experiment driver: builds an environment, runs the learner, labels each
//! step as a mistake or not, and writes traces and reports.

mod diagnostics;
mod trace;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lowerbound::{build_hard_mdp, chain_hard_mdps, draw_optimal_arms, HardMdpSpec};
use crate::mdp::{
    evaluate_policy, load_mdp, solve_optimal, split_to_two_support, Action, State, TabularMdp,
};
use crate::ucrl::{derive_constants, AgentState, EpisodeLog, UcrlConstants};

pub use diagnostics::{
    detect_exploration_phases, importance_level, partition_known_states, visit_spot_check,
    KnownPartition, VisitCheck,
};
pub use trace::{
    emit_trace, format_significant, load_trace, parse_trace, trace_to_string, TraceRow,
    TRACE_DIGITS, TRACE_HEADER,
};

/// Tolerance used when solving the environment for its optimal values.
const OPTIMAL_TOLERANCE: f64 = 1e-10;

/// Where the environment comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MdpSource {
    /// An MDP document on disk.
    File { path: PathBuf },
    /// The four-state hard instance; its discount is the config's.
    Hard {
        num_actions: usize,
        epsilon: f64,
        optimal_arm: Action,
    },
    /// Several hard instances in a ring. Either `arms` lists the optimal
    /// arm of each copy or `copies` arms are drawn from `arm_seed`.
    Chained {
        num_actions: usize,
        epsilon: f64,
        #[serde(default)]
        arms: Option<Vec<Action>>,
        #[serde(default)]
        copies: Option<usize>,
        #[serde(default)]
        arm_seed: u64,
    },
}

/// How the learner's value at the current state is estimated.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Estimator {
    /// Exact value of the current episode's stationary policy.
    #[default]
    StationaryProxy,
    /// Mean discounted return of forked copies of the learner.
    MonteCarloFork,
}

impl std::str::FromStr for Estimator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "stationary_proxy" => Ok(Self::StationaryProxy),
            "monte_carlo_fork" => Ok(Self::MonteCarloFork),
            other => Err(Error::Config(format!("unknown estimator {other:?}"))),
        }
    }
}

fn default_rollout_count() -> usize {
    100
}

fn default_evi_tolerance() -> f64 {
    1e-6
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: MdpSource,
    pub epsilon: f64,
    pub delta: f64,
    pub discount: f64,
    /// Number of time steps to run.
    pub steps: u64,
    pub seed: u64,
    #[serde(default)]
    pub m_override: Option<f64>,
    #[serde(default)]
    pub estimator: Estimator,
    #[serde(default = "default_rollout_count")]
    pub rollout_count: usize,
    /// Defaults to `H`.
    #[serde(default)]
    pub rollout_depth: Option<u64>,
    #[serde(default = "default_evi_tolerance")]
    pub evi_tolerance: f64,
    #[serde(default)]
    pub start_state: State,
    #[serde(default)]
    pub trace_path: Option<PathBuf>,
    #[serde(default)]
    pub report_path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("steps must be at least 1".into()));
        }
        if self.estimator == Estimator::MonteCarloFork && self.rollout_count < 2 {
            return Err(Error::Config(
                "the fork estimator needs at least two rollouts".into(),
            ));
        }
        if !(self.evi_tolerance > 0.0) {
            return Err(Error::Config("evi_tolerance must be positive".into()));
        }
        if let Some(m) = self.m_override {
            if !(m > 0.0) {
                return Err(Error::Config(format!("m_override {m} must be positive")));
            }
        }
        Ok(())
    }
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let config: ExperimentConfig =
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    config.validate()?;
    Ok(config)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

/// The environment an experiment runs in.
#[derive(Debug, Clone, PartialEq)]
pub struct Environment {
    pub mdp: TabularMdp,
    /// Original state to environment state; the identity unless the source
    /// had to be split.
    pub state_map: Vec<State>,
}

pub fn build_environment(config: &ExperimentConfig) -> Result<Environment> {
    let mdp = match &config.source {
        MdpSource::File { path } => {
            let mdp = load_mdp(path)?;
            if (mdp.discount() - config.discount).abs() > 1e-12 {
                return Err(Error::Config(format!(
                    "config discount {} differs from the file's {}",
                    config.discount,
                    mdp.discount()
                )));
            }
            mdp
        }
        MdpSource::Hard {
            num_actions,
            epsilon,
            optimal_arm,
        } => build_hard_mdp(&HardMdpSpec::new(
            *num_actions,
            *epsilon,
            config.discount,
            *optimal_arm,
        )?)?,
        MdpSource::Chained {
            num_actions,
            epsilon,
            arms,
            copies,
            arm_seed,
        } => {
            let arms = match (arms, copies) {
                (Some(arms), None) => arms.clone(),
                (None, Some(copies)) => draw_optimal_arms(*num_actions, *copies, *arm_seed),
                _ => {
                    return Err(Error::Config(
                        "a chained source needs exactly one of arms and copies".into(),
                    ))
                }
            };
            let spec = HardMdpSpec::new(*num_actions, *epsilon, config.discount, 0)?;
            chain_hard_mdps(&spec, &arms)?
        }
    };
    if mdp.is_two_support() {
        let state_map = (0..mdp.num_states()).collect();
        return Ok(Environment { mdp, state_map });
    }
    log::warn!("environment has pairs with more than two successors; splitting it");
    let (mdp, state_map) = split_to_two_support(&mdp)?;
    Ok(Environment { mdp, state_map })
}

/// Per-run knobs of [`simulate`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunSettings {
    pub epsilon: f64,
    pub steps: u64,
    pub seed: u64,
    pub estimator: Estimator,
    pub rollout_count: usize,
    pub rollout_depth: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MistakeReport {
    pub total_steps: u64,
    pub mistakes: u64,
    /// Mistakes made during delay steps, also counted in `mistakes`.
    pub delay_mistakes: u64,
    pub updates: u64,
    /// Steps in completed delay phases; always `H` times `updates`.
    pub delay_steps: u64,
    /// Delay steps of a phase still running when the run ended.
    pub incomplete_delay_steps: u64,
    pub exploration_phases: u64,
    /// `H (U_max + E_max)` at the faithful constants.
    pub mistake_bound: f64,
    /// The same bound with `m` replaced by the value in use.
    pub mistake_bound_at_m: f64,
    pub bound_respected: bool,
    pub seed: u64,
    pub estimator: Estimator,
    /// Mean standard error of the fork estimator; absent for the proxy.
    pub estimator_standard_error: Option<f64>,
    pub m: f64,
    pub constants: UcrlConstants,
    pub episodes: Vec<EpisodeLog>,
}

/// Builds everything from `config` and runs it.
pub fn run_experiment(config: &ExperimentConfig) -> Result<(Vec<TraceRow>, MistakeReport)> {
    config.validate()?;
    let env = build_environment(config)?;
    let mdp = &env.mdp;
    let constants = derive_constants(
        mdp.num_states(),
        mdp.num_actions(),
        config.epsilon,
        config.delta,
        mdp.discount(),
    )?;
    let start = *env
        .state_map
        .get(config.start_state)
        .ok_or(Error::InvalidState(config.start_state))?;
    let rollout_depth = config.rollout_depth.unwrap_or(constants.horizon);
    if config.estimator == Estimator::MonteCarloFork && rollout_depth < constants.horizon {
        return Err(Error::Config(format!(
            "rollout_depth {rollout_depth} is shorter than H = {}",
            constants.horizon
        )));
    }
    let agent = AgentState::new(
        constants,
        mdp,
        start,
        config.m_override,
        config.evi_tolerance,
    )?;
    let settings = RunSettings {
        epsilon: config.epsilon,
        steps: config.steps,
        seed: config.seed,
        estimator: config.estimator,
        rollout_count: config.rollout_count,
        rollout_depth,
    };
    simulate(mdp, agent, &settings)
}

/// Runs `agent` in `env` and labels every step.
///
/// The environment is sampled from stream 0 of a generator seeded with
/// `settings.seed`; fork rollouts use stream 1, so both estimators see the
/// same trajectory.
pub fn simulate(
    env: &TabularMdp,
    mut agent: AgentState,
    settings: &RunSettings,
) -> Result<(Vec<TraceRow>, MistakeReport)> {
    let (v_star, _) = solve_optimal(env, OPTIMAL_TOLERANCE)?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mut rollout_rng = ChaCha8Rng::seed_from_u64(settings.seed);
    rollout_rng.set_stream(1);

    let mut rows = Vec::with_capacity(settings.steps as usize);
    let mut episode_values: Option<(u64, Vec<f64>)> = None;
    let mut error_sum = 0.0;
    for _ in 0..settings.steps {
        let s = agent.current_state();
        let episode = agent.episode();
        if episode_values.as_ref().map_or(true, |(k, _)| *k != episode) {
            let values = evaluate_policy(env, agent.policy(), None, 0)?;
            episode_values = Some((episode, values.values));
        }
        let v_pi = match settings.estimator {
            Estimator::StationaryProxy => episode_values.as_ref().expect("just filled").1[s],
            Estimator::MonteCarloFork => {
                let (mean, se) = fork_estimate(env, &agent, settings, &mut rollout_rng)?;
                error_sum += se;
                mean
            }
        };
        let v_tilde = agent.plan().values[s];
        let record = agent.step(env, &mut rng)?;
        rows.push(TraceRow {
            t: record.t,
            episode: record.episode,
            state: record.state,
            action: record.action,
            delay: record.delay,
            v_star: v_star[s],
            v_pi,
            v_tilde,
            mistake: v_star[s] - v_pi > settings.epsilon,
            exploration_start: false,
        });
    }

    let constants = agent.constants().clone();
    let starts = detect_exploration_phases(&rows, settings.epsilon, constants.horizon);
    let mut next = starts.iter().peekable();
    for row in rows.iter_mut() {
        if next.peek() == Some(&&row.t) {
            row.exploration_start = true;
            next.next();
        }
    }

    let updates = agent.update_count();
    let delay_total = rows.iter().filter(|r| r.delay).count() as u64;
    let delay_steps = constants.horizon * updates;
    let mistakes = rows.iter().filter(|r| r.mistake).count() as u64;
    let mistake_bound = constants.mistake_bound();
    let ki = constants.kappa_iota_size() as f64;
    let e_max_at_m = 4.0 * 6.0 * constants.num_pairs() as f64 * agent.m() * ki;
    let report = MistakeReport {
        total_steps: settings.steps,
        mistakes,
        delay_mistakes: rows.iter().filter(|r| r.mistake && r.delay).count() as u64,
        updates,
        delay_steps,
        incomplete_delay_steps: delay_total - delay_steps,
        exploration_phases: starts.len() as u64,
        mistake_bound,
        mistake_bound_at_m: constants.horizon as f64 * (constants.u_max as f64 + e_max_at_m),
        bound_respected: (mistakes as f64) <= mistake_bound,
        seed: settings.seed,
        estimator: settings.estimator,
        estimator_standard_error: match settings.estimator {
            Estimator::StationaryProxy => None,
            Estimator::MonteCarloFork => Some(error_sum / settings.steps.max(1) as f64),
        },
        m: agent.m(),
        constants,
        episodes: agent.episodes().to_vec(),
    };
    Ok((rows, report))
}

/// Mean and standard error of the truncated discounted return of forked
/// copies of `agent`.
fn fork_estimate(
    env: &TabularMdp,
    agent: &AgentState,
    settings: &RunSettings,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, f64)> {
    let gamma = env.discount();
    let n = settings.rollout_count as f64;
    let (mut sum, mut squares) = (0.0, 0.0);
    for _ in 0..settings.rollout_count {
        let mut fork = agent.clone();
        let (mut ret, mut scale) = (0.0, 1.0);
        for _ in 0..settings.rollout_depth {
            ret += scale * env.reward(fork.current_state());
            scale *= gamma;
            fork.step(env, rng)?;
        }
        sum += ret;
        squares += ret * ret;
    }
    let mean = sum / n;
    let variance = ((squares - n * mean * mean) / (n - 1.0)).max(0.0);
    Ok((mean, (variance / n).sqrt()))
}
