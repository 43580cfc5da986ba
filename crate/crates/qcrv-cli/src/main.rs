use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use qcrv_cli::commands;

/// Spectral minimization of conformal energies on flat tori: solve one
/// level, sweep a schedule with warm starts, rescale and fit concentration
/// bubbles, verify the built-in invariants, and export plot-ready CSV.
#[derive(Parser)]
#[command(name = "qcrv", version, disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the `key = value` run configuration
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.dir from the config)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Reuse matching snapshots already present in the output directory
    #[arg(long)]
    resume: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Minimize at a single level; write a snapshot and a metrics record
    Solve(RunArgs),
    /// March the schedule downward with warm starts; write trace.csv,
    /// per-level snapshots, and analysis.json
    Sweep(RunArgs),
    /// Rescale the most concentrated snapshot and fit the standard bubble
    Bubble(RunArgs),
    /// Run every built-in invariant suite; nonzero exit on any failure
    Verify {
        /// Also validate this configuration file
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Emit plot-ready CSV files from a finished run directory
    Export(RunArgs),
}

/// QCRV_THREADS caps the data-parallel width; 0 or unset means automatic.
fn init_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("QCRV_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("QCRV_THREADS must be an unsigned integer, got `{raw}`"))?;
    if threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build_global()
            .map_err(|e| format!("thread pool: {e}"))?;
    }
    Ok(())
}

fn main() -> ExitCode {
    if let Err(msg) = init_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    let cli = Cli::parse();
    let result = match &cli.command {
        Cmd::Solve(args) => commands::load_ctx(&args.config, args.out.clone())
            .and_then(|ctx| commands::solve(&ctx, args.resume)),
        Cmd::Sweep(args) => commands::load_ctx(&args.config, args.out.clone())
            .and_then(|ctx| commands::sweep(&ctx, args.resume)),
        Cmd::Bubble(args) => commands::load_ctx(&args.config, args.out.clone())
            .and_then(|ctx| commands::bubble(&ctx)),
        Cmd::Verify { config } => commands::verify(config.as_deref()),
        Cmd::Export(args) => commands::load_ctx(&args.config, args.out.clone())
            .and_then(|ctx| commands::export(&ctx)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
