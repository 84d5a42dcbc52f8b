mod commands;
mod config;
mod error;
mod oracle;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::{Command, RunArgs};
use crate::config::Overrides;
use crate::error::CliError;
use crate::oracle::{OracleArgs, OracleName};

/// Time-domain analysis of distributed-order SISO systems with block-pulse
/// operational matrices.
#[derive(Debug, Parser)]
#[command(name = "dorder", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Debug, Args)]
struct RunFlags {
    /// JSON run description.
    config: PathBuf,
    /// CSV destination; written atomically.
    #[arg(short, long)]
    output: PathBuf,
    /// Manifest destination [default: <output>.manifest.json].
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// Number of block-pulse functions [default: config value, else 512].
    #[arg(long)]
    n_basis: Option<usize>,
    /// Time horizon [default: config value, else 5].
    #[arg(long)]
    horizon: Option<f64>,
    /// Gauss-Legendre points per distributed-order term [default: config value, else 3].
    #[arg(long)]
    quad_points: Option<usize>,
    /// Evaluate the config's checks; exit 3 if any tolerance is violated.
    #[arg(long)]
    verify: bool,
}

impl RunFlags {
    fn into_run_args(self, overrides: Overrides) -> RunArgs {
        RunArgs {
            config: self.config,
            output: self.output,
            manifest: self.manifest,
            verify: self.verify,
            overrides: Overrides {
                n_basis: self.n_basis,
                horizon: self.horizon,
                quad_points: self.quad_points,
                ..overrides
            },
        }
    }
}

#[derive(Debug, Subcommand)]
enum Cmd {
    /// Deterministic response; CSV columns t,y at block midpoints.
    Solve(RunFlags),
    /// Output mean and variance under random forcing and parameters.
    Stoch {
        #[command(flatten)]
        run: RunFlags,
        /// Cubature points per random parameter [default: config value, else 5].
        #[arg(long)]
        param_order: Option<usize>,
    },
    /// Monte-Carlo moments with standard errors.
    Mc {
        #[command(flatten)]
        run: RunFlags,
        /// Number of sample paths [default: config value, else 10000].
        #[arg(long)]
        samples: Option<usize>,
        /// Base seed; sample k uses stream k of this seed [default: config value, else 0].
        #[arg(long)]
        seed: Option<u64>,
        /// Draw random parameters from a Halton sequence.
        #[arg(long)]
        halton: bool,
    },
    /// Print reference values.
    Oracle {
        name: OracleName,
        /// Times for impulse1/variance3, or ALPHA BETA Z for ml.
        #[arg(allow_negative_numbers = true)]
        values: Vec<f64>,
        #[arg(long, default_value_t = 0.5)]
        g1: f64,
        #[arg(long, default_value_t = 0.8)]
        g2: f64,
        #[arg(long, default_value_t = 1.0)]
        a1: f64,
        #[arg(long, default_value_t = 1.0)]
        a2: f64,
        #[arg(long, default_value_t = 0.75)]
        alpha1: f64,
        #[arg(long, default_value_t = 1.0)]
        alpha2: f64,
        /// Gauss-Legendre points for the distributed term of h2norm4.
        #[arg(long, default_value_t = 3)]
        quad_points: usize,
    },
}

fn dispatch(cmd: Cmd) -> Result<(), CliError> {
    match cmd {
        Cmd::Solve(run) => commands::run(Command::Solve, &run.into_run_args(Overrides::default())),
        Cmd::Stoch { run, param_order } => commands::run(
            Command::Stoch,
            &run.into_run_args(Overrides {
                param_order,
                ..Default::default()
            }),
        ),
        Cmd::Mc { run, samples, seed, halton } => commands::run(
            Command::Mc,
            &run.into_run_args(Overrides {
                samples,
                seed,
                halton,
                ..Default::default()
            }),
        ),
        Cmd::Oracle { name, values, g1, g2, a1, a2, alpha1, alpha2, quad_points } => {
            let lines = oracle::evaluate(&OracleArgs { name, values, g1, g2, a1, a2, alpha1, alpha2, quad_points })?;
            for line in lines {
                println!("{line}");
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap exits with 2 on usage errors; that code is reserved for
            // numeric failures here.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("dorder: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
