use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use ucrl_core::harness::{emit_trace, load_config, run_experiment, Estimator};
use ucrl_core::lowerbound::{
    build_hard_mdp, chain_hard_mdps, draw_optimal_arms, hard_bandit_instance, learn_bandit,
    HardMdpSpec, DEFAULT_TAIL_TOL, WAIT,
};
use ucrl_core::mdp::{load_mdp, save_mdp, solve_optimal, split_to_two_support, to_json};
use ucrl_core::ucrl::{derive_constants, AgentState};
use ucrl_core::TabularMdp;

#[derive(Parser)]
#[command(name = "ucrl", version, about = "Optimistic tabular RL experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the derived learner constants.
    Constants {
        #[arg(long)]
        states: usize,
        #[arg(long)]
        actions: usize,
        #[arg(long)]
        epsilon: f64,
        #[arg(long)]
        delta: f64,
        #[arg(long)]
        gamma: f64,
    },
    /// Optimal values and policy of an MDP file.
    Solve {
        mdp: PathBuf,
        #[arg(long, default_value_t = 1e-10)]
        tolerance: f64,
    },
    /// Run a full experiment from a JSON config.
    RunUcrl(RunArgs),
    /// Emit the four-state hard instance.
    HardMdp {
        #[command(flatten)]
        hard: HardArgs,
        #[arg(long, default_value_t = 0)]
        optimal_arm: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Emit a ring of hard instances.
    Chain {
        #[command(flatten)]
        hard: HardArgs,
        /// Optimal arm of each copy, e.g. `0,1,1`.
        #[arg(long, value_delimiter = ',', conflicts_with = "copies")]
        arms: Option<Vec<usize>>,
        /// Number of copies with seeded random optimal arms.
        #[arg(long)]
        copies: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rewrite an MDP file so every transition has at most two successors.
    Split {
        mdp: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Identify the best bandit arm by running the learner on the hard instance.
    LearnBandit(BanditArgs),
}

#[derive(Args)]
struct HardArgs {
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long)]
    epsilon: f64,
    #[arg(long)]
    gamma: f64,
}

#[derive(Args)]
struct RunArgs {
    config: PathBuf,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    steps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    m_override: Option<f64>,
    /// `stationary_proxy` or `monte_carlo_fork`.
    #[arg(long)]
    estimator: Option<Estimator>,
    /// Directory for `trace.csv` and `report.json`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct BanditArgs {
    #[arg(long, default_value_t = 2)]
    actions: usize,
    /// Accuracy the learner is configured for.
    #[arg(long, default_value_t = 0.2)]
    epsilon: f64,
    #[arg(long, default_value_t = 0.2)]
    delta: f64,
    #[arg(long, default_value_t = 0.8)]
    gamma: f64,
    /// Hard-instance parameter; the MDP arm gap is `16 ε (1-γ)`.
    #[arg(long, default_value_t = 0.0625)]
    hard_epsilon: f64,
    /// Bias of the better bandit arm over 1/2.
    #[arg(long, default_value_t = 0.2)]
    bandit_gap: f64,
    #[arg(long, default_value_t = 1)]
    optimal_arm: usize,
    /// Number of round pairs; the bandit is pulled twice this often.
    #[arg(long, default_value_t = 50)]
    rounds: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 25.0)]
    m_override: f64,
    /// Placeholder scale of the sample threshold; not a known value.
    #[arg(long, default_value_t = 0.01)]
    c1: f64,
    /// Placeholder log factor of the sample threshold; not a known value.
    #[arg(long, default_value_t = 1.0)]
    c2: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_text(out: Option<&Path>, text: &str) -> Result<()> {
    match out {
        Some(path) => std::fs::write(path, format!("{text}\n"))
            .with_context(|| format!("writing {}", path.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

fn write_mdp(mdp: &TabularMdp, out: Option<&Path>) -> Result<()> {
    match out {
        Some(path) => Ok(save_mdp(mdp, path)?),
        None => write_text(None, &to_json(mdp)),
    }
}

fn run_ucrl(args: RunArgs) -> Result<()> {
    let mut config = load_config(&args.config)?;
    config.epsilon = args.epsilon.unwrap_or(config.epsilon);
    config.delta = args.delta.unwrap_or(config.delta);
    config.discount = args.gamma.unwrap_or(config.discount);
    config.steps = args.steps.unwrap_or(config.steps);
    config.seed = args.seed.unwrap_or(config.seed);
    config.m_override = args.m_override.or(config.m_override);
    config.estimator = args.estimator.unwrap_or(config.estimator);
    if let Some(dir) = &args.out {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        config.trace_path = Some(dir.join("trace.csv"));
        config.report_path = Some(dir.join("report.json"));
    }

    let (rows, report) = run_experiment(&config)?;
    match (&config.trace_path, &config.report_path) {
        (Some(trace), Some(report_path)) => emit_trace(&rows, &report, trace, report_path)?,
        (None, None) => {}
        _ => bail!("trace_path and report_path must be given together"),
    }
    let summary = json!({
        "steps": report.total_steps,
        "mistakes": report.mistakes,
        "delay_mistakes": report.delay_mistakes,
        "updates": report.updates,
        "exploration_phases": report.exploration_phases,
        "mistake_bound": report.mistake_bound,
        "mistake_bound_at_m": report.mistake_bound_at_m,
        "m": report.m,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn learn(args: BanditArgs) -> Result<()> {
    let spec = HardMdpSpec::new(
        args.actions,
        args.hard_epsilon,
        args.gamma,
        args.optimal_arm,
    )?;
    let bandit = hard_bandit_instance(args.actions, args.bandit_gap, args.optimal_arm)?;
    let constants = derive_constants(4, args.actions, args.epsilon, args.delta, args.gamma)?;
    let mdp = build_hard_mdp(&spec)?;
    let mut agent = AgentState::new(constants, &mdp, WAIT, Some(args.m_override), 1e-6)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let verdict = learn_bandit(
        &mut agent,
        &bandit,
        &spec,
        args.rounds,
        DEFAULT_TAIL_TOL,
        &mut rng,
    )?;

    let threshold = args.c1 * args.actions as f64
        / (args.epsilon.powi(2) * (1.0 - args.gamma).powi(2))
        * (args.c2 / args.delta).ln();
    let result = json!({
        "arm": verdict.arm,
        "best_arm": bandit.best_arm(),
        "correct": verdict.arm == bandit.best_arm(),
        "rounds": args.rounds,
        "phase_leaders": verdict.phase_leaders,
        "threshold": {
            "formula": "N = c1 * A / (epsilon^2 (1 - gamma)^2) * ln(c2 / delta)",
            "c1": args.c1,
            "c2": args.c2,
            "placeholder_constants": true,
            "value": threshold,
        },
    });
    write_text(args.out.as_deref(), &serde_json::to_string_pretty(&result)?)
}

fn main() -> Result<()> {
    env_logger::init();
    match Cli::parse().command {
        Command::Constants {
            states,
            actions,
            epsilon,
            delta,
            gamma,
        } => {
            let c = derive_constants(states, actions, epsilon, delta, gamma)?;
            println!("{}", serde_json::to_string_pretty(&c)?);
        }
        Command::Solve { mdp, tolerance } => {
            let mdp = load_mdp(&mdp)?;
            let (values, policy) = solve_optimal(&mdp, tolerance)?;
            let out = json!({ "values": values.as_slice(), "policy": policy.actions() });
            println!("{}", serde_json::to_string_pretty(&out)?);
        }
        Command::RunUcrl(args) => run_ucrl(args)?,
        Command::HardMdp {
            hard,
            optimal_arm,
            out,
        } => {
            let spec = HardMdpSpec::new(hard.actions, hard.epsilon, hard.gamma, optimal_arm)?;
            write_mdp(&build_hard_mdp(&spec)?, out.as_deref())?;
        }
        Command::Chain {
            hard,
            arms,
            copies,
            seed,
            out,
        } => {
            let arms = match (arms, copies) {
                (Some(arms), None) => arms,
                (None, Some(copies)) => draw_optimal_arms(hard.actions, copies, seed),
                _ => bail!("give either --arms or --copies"),
            };
            let spec = HardMdpSpec::new(hard.actions, hard.epsilon, hard.gamma, 0)?;
            write_mdp(&chain_hard_mdps(&spec, &arms)?, out.as_deref())?;
        }
        Command::Split { mdp, out } => {
            let (split, map) = split_to_two_support(&load_mdp(&mdp)?)?;
            eprintln!("original states map to {map:?}");
            write_mdp(&split, out.as_deref())?;
        }
        Command::LearnBandit(args) => learn(args)?,
    }
    Ok(())
}
