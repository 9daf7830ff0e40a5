//! Command-line front end of the `blackwell` library.
//!
//! Exit codes: 0 success, 1 no unique Bellman optimal policy, 2 bad input,
//! 3 structural failure (not communicating, singular chain), 4 an
//! enumeration or iteration cap was exceeded.

mod report;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use blackwell::certificates::{beta_threshold_with, GapTolerance, XiVariant, TOL_STRICT};
use blackwell::eval::evaluate;
use blackwell::experiment::{run_seeds, summarize, write_csv};
use blackwell::hopi::hopi_run;
use blackwell::io::{model_to_string, parse_model, policy_from_json};
use blackwell::oracle::{bellman_optimal_set, optimal_policy_sets, OptimalSets, ORACLE_TOL};
use blackwell::sim::{hope_run, RunConfig, Schedule};
use blackwell::transforms::{
    affine_reward_map, builtin_instance, ergodic_shatter, isolate_bellman, random_communicating,
    with_reward_dist, GeneratorConfig,
};
use blackwell::{Error, MdpModel, Policy, RewardDist};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::Value;

#[derive(Parser)]
#[command(name = "blackwell", version, about = "Higher-order optimal policies for tabular average-reward MDPs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a model: a builtin or a seeded random instance, optionally transformed.
    Gen(GenArgs),
    /// Gain, biases and gap tables of one policy.
    Eval {
        model: PathBuf,
        /// Policy JSON file `{state: action}`.
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        order: i32,
    },
    /// Run Higher Order Policy Iteration.
    Solve {
        model: PathBuf,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        order: i32,
        #[arg(long, default_value_t = 0.0)]
        epsilon: f64,
        /// Also write the step-by-step trace as JSON lines.
        #[arg(long)]
        trace: Option<PathBuf>,
    },
    /// Brute-force optimal sets and Bellman optimal policies.
    Oracle {
        model: PathBuf,
        #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
        order: i32,
        #[arg(long, default_value_t = ORACLE_TOL)]
        tol: f64,
    },
    /// Check for a unique Bellman optimal policy and compute its radius.
    Certify {
        model: PathBuf,
        /// Gap tolerance of the uniqueness test.
        #[arg(long, default_value_t = TOL_STRICT)]
        tol: f64,
    },
    /// One learning run on a simulated model, logged per checkpoint.
    Identify {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Checkpoint log as JSON lines; stdout when absent.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// A batch of seeded learning runs with a CSV log and a summary.
    Experiment {
        model: PathBuf,
        #[command(flatten)]
        run: RunArgs,
        /// Number of runs, seeded `first_seed, first_seed + 1, ...`.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = 0)]
        first_seed: u64,
        /// CSV log; stdout when absent, the summary then goes to stderr.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct GenArgs {
    /// Builtin instance name.
    #[arg(long, conflicts_with_all = ["states", "actions", "sparsity", "seed"])]
    builtin: Option<String>,
    #[arg(long, default_value_t = 3)]
    states: usize,
    /// Largest number of actions per state.
    #[arg(long, default_value_t = 2)]
    actions: usize,
    #[arg(long, default_value_t = 2)]
    min_actions: usize,
    /// Probability that a transition is possible.
    #[arg(long, default_value_t = 0.6)]
    sparsity: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Policy JSON file used by `--isolate` and `--shatter`.
    #[arg(long)]
    policy: Option<PathBuf>,
    /// Make the policy the unique Bellman optimal one with this margin.
    #[arg(long, requires = "policy")]
    isolate: Option<f64>,
    /// Skip the reward squeeze of `--isolate`.
    #[arg(long)]
    raw: bool,
    /// Mix every row with the uniform law at this weight, keeping the policy's gain.
    #[arg(long, requires = "policy")]
    shatter: Option<f64>,
    /// Map rewards affinely onto [0, 1].
    #[arg(long)]
    normalize: bool,
    /// Declare every reward Bernoulli.
    #[arg(long)]
    bernoulli: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Recompute {
    Every,
    Doubling,
}

#[derive(Clone, Copy, ValueEnum)]
enum Xi {
    Main,
    Appendix,
}

#[derive(Args)]
struct RunArgs {
    #[arg(long, default_value_t = 0, allow_hyphen_values = true)]
    order: i32,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 10_000)]
    horizon: u64,
    /// Slack exponent: `ε_t = t^-exponent`.
    #[arg(long, default_value_t = 0.25)]
    exponent: f64,
    #[arg(long, value_enum, default_value_t = Recompute::Every)]
    recompute: Recompute,
    #[arg(long, value_enum, default_value_t = Xi::Main)]
    xi_variant: Xi,
    /// Keep sampling after the stopping time.
    #[arg(long)]
    no_stop: bool,
    /// Do not judge recommendations against the oracle.
    #[arg(long)]
    no_reference: bool,
}

impl RunArgs {
    fn config(&self) -> RunConfig {
        RunConfig {
            order: self.order,
            delta: self.delta,
            horizon: self.horizon,
            exponent: self.exponent,
            schedule: match self.recompute {
                Recompute::Every => Schedule::Every,
                Recompute::Doubling => Schedule::Doubling,
            },
            xi_variant: match self.xi_variant {
                Xi::Main => XiVariant::Main,
                Xi::Appendix => XiVariant::Appendix,
            },
            stop_at_tau: !self.no_stop,
            ..RunConfig::default()
        }
    }

    fn reference(&self, model: &MdpModel) -> blackwell::Result<Option<OptimalSets>> {
        if self.no_reference {
            return Ok(None);
        }
        optimal_policy_sets(model, self.order.max(-1), ORACLE_TOL).map(Some)
    }
}

/// Failure of a subcommand, with its exit code.
enum Failure {
    Lib(Error),
    NotUnique,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Self::Lib(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Self::Lib(Error::Io(e))
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::NotCommunicating | Error::SingularSystem { .. } => 3,
        Error::TooManyPolicies { .. }
        | Error::TooManyCoverings { .. }
        | Error::IterationCapExceeded { .. }
        | Error::GenerationFailed { .. } => 4,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::NotUnique) => ExitCode::from(1),
        Err(Failure::Lib(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn read_model(path: &Path) -> Result<MdpModel, Error> {
    parse_model(&fs::read_to_string(path)?)
}

fn read_policy(model: &MdpModel, path: &Path) -> Result<Policy, Error> {
    let value: Value = serde_json::from_str(&fs::read_to_string(path)?)?;
    policy_from_json(model, &value)
}

fn print(value: &Value) {
    println!("{}", serde_json::to_string_pretty(value).expect("json values always serialize"));
}

fn write_or_print(path: Option<&Path>, text: &str) -> std::io::Result<()> {
    match path {
        Some(p) => fs::write(p, text),
        None => std::io::stdout().write_all(text.as_bytes()),
    }
}

fn run(command: Command) -> Result<(), Failure> {
    match command {
        Command::Gen(args) => gen(args),
        Command::Eval { model, policy, order } => {
            let model = read_model(&model)?;
            let policy = read_policy(&model, &policy)?;
            print(&report::evaluation(&model, &evaluate(&model, &policy, order.max(-1))?)?);
            Ok(())
        }
        Command::Solve { model, order, epsilon, trace } => {
            let model = read_model(&model)?;
            let t = hopi_run(&model, order, epsilon)?;
            if let Some(path) = trace {
                fs::write(path, t.to_jsonl(&model))?;
            }
            print(&report::trace(&model, &t));
            Ok(())
        }
        Command::Oracle { model, order, tol } => {
            let model = read_model(&model)?;
            if !model.is_communicating() {
                return Err(Error::NotCommunicating.into());
            }
            let sets = optimal_policy_sets(&model, order, tol)?;
            let bellman = bellman_optimal_set(&model, tol)?;
            print(&report::oracle(&model, &sets, &bellman));
            Ok(())
        }
        Command::Certify { model, tol } => {
            let model = read_model(&model)?;
            let c = beta_threshold_with(&model, GapTolerance::Absolute(tol))?;
            print(&report::certificate(&model, &c));
            if c.unique {
                Ok(())
            } else {
                Err(Failure::NotUnique)
            }
        }
        Command::Identify { model, run, seed, out } => {
            let model = read_model(&model)?;
            let reference = run.reference(&model)?;
            let record = hope_run(&model, &RunConfig { seed, ..run.config() }, reference.as_ref())?;
            write_or_print(out.as_deref(), &report::run_jsonl(&model, &record))?;
            if out.is_some() {
                print(&report::run_summary(&model, &record));
            }
            Ok(())
        }
        Command::Experiment { model, run, seeds, first_seed, out } => {
            let model = read_model(&model)?;
            if seeds == 0 {
                return Err(Error::InvalidConfig("at least one seed is needed".into()).into());
            }
            let reference = run.reference(&model)?;
            let seed_list: Vec<u64> = (first_seed..first_seed + seeds).collect();
            let records = run_seeds(&model, &run.config(), &seed_list, reference.as_ref())?;
            let summary = report::summary(&summarize(&records));
            match out {
                Some(path) => {
                    write_csv(&model, &records, fs::File::create(path)?)?;
                    print(&summary);
                }
                None => {
                    write_csv(&model, &records, std::io::stdout().lock())?;
                    eprintln!("{summary}");
                }
            }
            Ok(())
        }
    }
}

fn gen(args: GenArgs) -> Result<(), Failure> {
    let mut model = match &args.builtin {
        Some(name) => builtin_instance(name)?,
        None => random_communicating(&GeneratorConfig {
            state_count: args.states,
            min_actions: args.min_actions.min(args.actions),
            max_actions: args.actions,
            kernel_sparsity: args.sparsity,
            seed: args.seed,
        })?,
    };
    let policy = match &args.policy {
        Some(path) => Some(read_policy(&model, path)?),
        None => None,
    };
    if let (Some(eps), Some(p)) = (args.isolate, &policy) {
        model = isolate_bellman(&model, p, eps, args.raw)?;
    }
    if let (Some(eps), Some(p)) = (args.shatter, &policy) {
        model = ergodic_shatter(&model, p, eps)?;
    }
    if args.normalize {
        model = affine_reward_map(&model, 0.0, 1.0)?;
    }
    if args.bernoulli {
        model = with_reward_dist(&model, RewardDist::Bernoulli)?;
    }
    write_or_print(args.out.as_deref(), &(model_to_string(&model) + "\n"))?;
    Ok(())
}
