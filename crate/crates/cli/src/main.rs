use cbvf_cli::{cmd_counterexample, cmd_solve, cmd_synth, cmd_verify, init_threads};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Grid-based toolkit for control barrier value functions.
#[derive(Parser)]
#[command(name = "cbvf", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// March the value function and write one field per checkpoint.
    Solve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the config seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Check a candidate barrier function and write a report.
    Verify {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// viscosity, classical, barrier, or avoid-invariance.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Reproduce the disc counterexample demonstration.
    Counterexample {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        quiet: bool,
    },
    /// Combine or limit-synthesize barrier fields.
    Synth {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// max or limit.
        #[arg(long)]
        mode: String,
        #[arg(long)]
        quiet: bool,
    },
}

fn main() -> ExitCode {
    init_threads();
    let cli = Cli::parse();
    let code = match cli.command {
        Command::Solve {
            config,
            out,
            seed,
            quiet,
        } => cmd_solve(&config, &out, seed, quiet),
        Command::Verify {
            config,
            out,
            mode,
            seed,
            quiet,
        } => cmd_verify(&config, &mode, &out, seed, quiet),
        Command::Counterexample { out, quiet } => cmd_counterexample(&out, quiet),
        Command::Synth {
            config,
            out,
            mode,
            quiet,
        } => cmd_synth(&config, &mode, &out, quiet),
    };
    ExitCode::from(code as u8)
}
