//! `stobeam` — batch front-end for the stochastic beam simulator.
//!
//! ```text
//! stobeam <simulate|ensemble|verify|picard-compare>
//!     --config <file-or-preset> [--seed <u64>] [--out <dir>]
//!     [--paths <n>] [--dt <f64>]
//! ```
//!
//! Exit codes are a stable contract: 0 ok, 2 config error, 3 solver fault,
//! 4 check violation, 5 Picard failure. Flag values override the config;
//! the only environment variable consulted is `STOBEAM_OUT` (default
//! output directory).

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use stobeam_cli::{commands, config::RunConfig, output, presets};
use stobeam_core::CoreError;

#[derive(Parser)]
#[command(name = "stobeam", version, about = "Spectral simulator and verification harness for a jump-noise driven extensible beam")]
struct Cli {
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate one trajectory and write trajectory.csv + trajectory.json.
    Simulate(RunArgs),
    /// Run a Monte Carlo ensemble and the configured bound checks.
    Ensemble(RunArgs),
    /// Operator identities, constants certification, convolution identity.
    Verify(RunArgs),
    /// Compare the stepper against the Picard reference on matched grids.
    #[command(name = "picard-compare")]
    PicardCompare(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to a TOML config, or a built-in preset name
    /// (hinged-basic, damped-beam, khasminskii-demo, stability-K0, stability-Kpos).
    #[arg(long)]
    config: String,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config, then $STOBEAM_OUT, then ./stobeam-out).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override harness.n_paths.
    #[arg(long)]
    paths: Option<usize>,
    /// Override solver.dt_max.
    #[arg(long)]
    dt: Option<f64>,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_SOLVER_FAULT: u8 = 3;
const EXIT_CHECK_VIOLATION: u8 = 4;
const EXIT_PICARD: u8 = 5;

fn exit_code_for(err: &CoreError) -> u8 {
    match err {
        CoreError::Config { .. }
        | CoreError::SizeMismatch { .. }
        | CoreError::Domain(_)
        | CoreError::BasisMismatch(_) => EXIT_CONFIG,
        CoreError::PicardDiverged { .. } => EXIT_PICARD,
        CoreError::FitRefused(_) => EXIT_CHECK_VIOLATION,
        CoreError::SolverFault(_)
        | CoreError::Numerical { .. }
        | CoreError::NonFinite(_)
        | CoreError::Quadrature(_)
        | CoreError::IdentityViolation(_) => EXIT_SOLVER_FAULT,
        CoreError::Io(_) | CoreError::Serde(_) => 1,
    }
}

fn load_config(args: &RunArgs) -> Result<RunConfig, CoreError> {
    let mut cfg = if std::path::Path::new(&args.config).exists() {
        let text = std::fs::read_to_string(&args.config)?;
        RunConfig::from_toml(&text)?
    } else {
        presets::preset(&args.config)?
    };
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if let Some(paths) = args.paths {
        cfg.harness.n_paths = paths;
    }
    if let Some(dt) = args.dt {
        cfg.solver.dt_max = dt;
    }
    Ok(cfg)
}

fn dispatch(cmd: &Command) -> Result<u8, CoreError> {
    let args = match cmd {
        Command::Simulate(a) | Command::Ensemble(a) | Command::Verify(a) | Command::PicardCompare(a) => a,
    };
    let cfg = load_config(args)?;
    let built = cfg.build()?;
    let out = output::resolve_out_dir(args.out.as_deref(), cfg.output_dir.as_deref());
    match cmd {
        Command::Simulate(_) => {
            let exploded = commands::cmd_simulate(&cfg, &built, &out)?;
            if exploded {
                eprintln!("simulate: trajectory hit the explosion cap; see trajectory.json");
                Ok(EXIT_SOLVER_FAULT)
            } else {
                println!("simulate: wrote {}", out.display());
                Ok(0)
            }
        }
        Command::Ensemble(_) => {
            let passed = commands::cmd_ensemble(&cfg, &built, &out)?;
            println!(
                "ensemble: wrote {} (checks {})",
                out.display(),
                if passed { "passed" } else { "FAILED" }
            );
            Ok(if passed { 0 } else { EXIT_CHECK_VIOLATION })
        }
        Command::Verify(_) => {
            let passed = commands::cmd_verify(&cfg, &built, &out)?;
            println!(
                "verify: wrote {} ({})",
                out.display(),
                if passed { "passed" } else { "FAILED" }
            );
            Ok(if passed { 0 } else { EXIT_CHECK_VIOLATION })
        }
        Command::PicardCompare(_) => {
            let passed = commands::cmd_picard_compare(&cfg, &built, &out)?;
            println!(
                "picard-compare: wrote {} (observed order {})",
                out.display(),
                if passed { "ok" } else { "below 0.8" }
            );
            Ok(if passed { 0 } else { EXIT_CHECK_VIOLATION })
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli.cmd) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}
