use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use dac_cli::commands;
use dac_cli::config::{read_config_file, Overrides, Profile, RunConfig, UsageError};
use dac_cli::verify::{run_suite, VerifyOptions, DECOMPOSITION_TOL};

/// Environment variable that caps the worker thread count.
const THREADS_ENV: &str = "DAC_THREADS";

#[derive(Parser)]
#[command(name = "dac", version, about = "Offline dynamic algorithm configuration for evolutionary optimizers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// TOML file with the same keys as the flags; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value_t = Profile::Desk)]
    profile: Profile,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Collect an offline dataset of exploitation and exploration trajectories.
    Collect {
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train a Q-network on a dataset.
    Train {
        /// Dataset directory written by `collect`.
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Evaluate a checkpoint and the random baseline on the test problems.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the lambda/beta grid, the mu sweep and the bin-count sweep.
    Ablate {
        /// Dataset to re-mix; collected from the configuration when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Run the self-check suite; exits nonzero if any check fails.
    Verify {
        #[arg(long)]
        out: PathBuf,
        /// Dataset to revalidate.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value_t = 100)]
        mdps: usize,
        #[arg(long, default_value_t = DECOMPOSITION_TOL)]
        decomposition_tol: f64,
        /// Test fixture: corrupt the loss gradient so the gradient check fails.
        #[arg(long)]
        inject_sign_error: bool,
        #[command(flatten)]
        common: Common,
    },
}

fn resolve(common: &Common) -> anyhow::Result<RunConfig> {
    let file = common.config.as_deref().map(read_config_file).transpose()?;
    RunConfig::resolve(common.profile, common.seed, file.as_ref(), &common.overrides)
}

fn set_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var(THREADS_ENV) {
        let n: usize = v.parse().map_err(|_| UsageError(format!("{THREADS_ENV}={v} is not a thread count")))?;
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    set_threads()?;
    match cli.command {
        Command::Collect { out, common } => {
            commands::collect(&resolve(&common)?, &out)?;
        }
        Command::Train { data, out, resume, common } => {
            commands::train(&resolve(&common)?, &data, &out, resume.as_deref())?;
        }
        Command::Eval { checkpoint, out, common } => {
            commands::eval(&resolve(&common)?, &checkpoint, &out)?;
        }
        Command::Ablate { data, out, common } => {
            commands::ablate(&resolve(&common)?, data.as_deref(), &out)?;
        }
        Command::Verify { out, data, mdps, decomposition_tol, inject_sign_error, common } => {
            let cfg = resolve(&common)?;
            let opts = VerifyOptions { mdps, decomposition_tol, inject_sign_error, ..VerifyOptions::default() };
            let checks = run_suite(&opts, data.as_deref(), &out, cfg.seed)?;
            return Ok(checks.iter().all(|c| c.passed));
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
