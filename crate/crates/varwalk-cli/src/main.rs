mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use commands::FpMode;
use error::CliError;

/// Random-search optimization with state-dependent noise, Monte-Carlo
/// convergence ensembles, and a periodic diffusion validator.
#[derive(Parser)]
#[command(name = "varwalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Run configuration (TOML).
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Override a config key, e.g. --set policy.beta=2.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides output.dir; default "out").
    #[arg(long, value_name = "DIR")]
    out: Option<String>,
    /// Override master_seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensemble runs (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one optimization trajectory and dump it.
    Optimize(RunArgs),
    /// Estimate convergence-probability curves over seeded runs.
    Ensemble(RunArgs),
    /// Exercise the continuum density model on a periodic grid.
    Fp {
        #[arg(value_enum)]
        mode: FpMode,
        #[command(flatten)]
        args: RunArgs,
    },
    /// Run shipped benchmark presets (all of them by default).
    Bench {
        /// List available presets and exit.
        #[arg(long)]
        list: bool,
        /// Presets to run (default: all).
        names: Vec<String>,
        /// Root output directory; each preset writes to <DIR>/<preset>/.
        #[arg(long, value_name = "DIR", default_value = "out")]
        out: String,
        /// Override master_seed for every selected preset.
        #[arg(long)]
        seed: Option<u64>,
        /// Override a config key in every selected preset (repeatable).
        #[arg(long = "set", value_name = "KEY=VALUE")]
        set: Vec<String>,
        /// Worker threads for ensemble runs (default: all cores).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Refit a decay rate from an existing curve CSV.
    Report {
        /// Curve CSV produced by `ensemble` (or matching its schema).
        #[arg(long, value_name = "FILE")]
        input: PathBuf,
        /// Fit window as LO,HI iterations (default: the last decade).
        #[arg(long, value_name = "LO,HI")]
        window: Option<String>,
        /// Schedule exponent for the predicted rate (with --beta, --dim).
        #[arg(long)]
        alpha: Option<f64>,
        /// Variance exponent for the predicted rate (with --alpha, --dim).
        #[arg(long)]
        beta: Option<f64>,
        /// Dimension for the predicted rate (with --alpha, --beta).
        #[arg(long)]
        dim: Option<usize>,
        /// Output directory (default "out").
        #[arg(long, value_name = "DIR")]
        out: Option<String>,
    },
}

fn init_jobs(jobs: Option<usize>) {
    if let Some(n) = jobs {
        // A second build_global (e.g. under tests) is harmless; the first
        // pool sticks.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

fn load(args: &RunArgs) -> Result<config::LoadedConfig, CliError> {
    config::load(&args.config, &args.set, args.seed, args.out.as_deref())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Optimize(args) => {
            init_jobs(args.jobs);
            commands::cmd_optimize(&load(&args)?)
        }
        Command::Ensemble(args) => {
            init_jobs(args.jobs);
            commands::cmd_ensemble(&load(&args)?)
        }
        Command::Fp { mode, args } => {
            init_jobs(args.jobs);
            commands::cmd_fp(&load(&args)?, mode)
        }
        Command::Bench { list, names, out, seed, set, jobs } => {
            init_jobs(jobs);
            commands::cmd_bench(list, &names, &out, seed, &set)
        }
        Command::Report { input, window, alpha, beta, dim, out } => commands::cmd_report(
            &input,
            window.as_deref(),
            alpha,
            beta,
            dim,
            out.as_deref(),
        ),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli) {
        eprintln!("{e}");
        std::process::exit(e.exit_code());
    }
}
