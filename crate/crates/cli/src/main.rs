//! `ldsplan`: solve, evaluate and inspect instrument-operation policies.

mod commands;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "ldsplan", version, about = "Belief-state planning for a life-detection instrument suite")]
struct Cli {
    /// Worker threads for rollouts; defaults to the available parallelism.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct ConfigArg {
    /// Mission config (TOML). Built-in defaults when omitted.
    #[arg(long, short)]
    config: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a config, its network and the model built from it.
    Validate(ConfigArg),
    /// Solve the config's model and write a policy file.
    Solve {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Evaluate a policy file or a ConOps threshold pair.
    Eval {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long, conflicts_with = "conops", required_unless_present = "conops")]
        policy: Option<PathBuf>,
        /// ConOps thresholds `T_biotic T_abiotic`.
        #[arg(long, num_args = 2, value_names = ["T_BIOTIC", "T_ABIOTIC"])]
        conops: Option<Vec<f64>>,
        /// Environment accumulation mean; the policy keeps its model.
        #[arg(long)]
        v_acc: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// Metrics CSV.
        #[arg(long, short)]
        out: PathBuf,
        /// Also write one CSV line per declaration.
        #[arg(long)]
        events: Option<PathBuf>,
    },
    /// Sweep λ or the ConOps threshold grid.
    Sweep {
        #[command(flatten)]
        config: ConfigArg,
        /// `lo:hi:step`, inclusive.
        #[arg(long, conflicts_with = "conops_grid", required_unless_present = "conops_grid")]
        lambda: Option<String>,
        /// The config's `[conops]` grid.
        #[arg(long)]
        conops_grid: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long, short)]
        out: PathBuf,
        /// Policy cache; overrides `LDSPLAN_CACHE_DIR`. Defaults to
        /// `policy-cache` next to the output.
        #[arg(long)]
        cache_dir: Option<PathBuf>,
    },
    /// Export the dominating action over a belief × volume grid.
    PolicyMap {
        #[command(flatten)]
        config: ConfigArg,
        #[arg(long)]
        policy: PathBuf,
        #[arg(long, default_value_t = 0.01)]
        belief_step: f64,
        #[arg(long, short)]
        out: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(error::EXIT_FAILURE as u8);
        }
    }
    let result = match cli.command {
        Command::Validate(c) => commands::validate(c.config.as_deref()),
        Command::Solve { config, out } => commands::solve(config.config.as_deref(), &out),
        Command::Eval {
            config,
            policy,
            conops,
            v_acc,
            seed,
            out,
            events,
        } => commands::eval(commands::EvalArgs {
            config: config.config.as_deref(),
            policy: policy.as_deref(),
            conops: conops.map(|v| (v[0], v[1])),
            v_acc,
            seed,
            out: &out,
            events: events.as_deref(),
        }),
        Command::Sweep {
            config,
            lambda,
            conops_grid,
            seed,
            out,
            cache_dir,
        } => commands::sweep(config.config.as_deref(), lambda.as_deref(), conops_grid, seed, &out, cache_dir),
        Command::PolicyMap {
            config,
            policy,
            belief_step,
            out,
        } => commands::policy_map(config.config.as_deref(), &policy, belief_step, &out),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
