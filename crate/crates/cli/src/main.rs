//! `qndctl`: synthesize control Hamiltonians, check assumptions and run
//! measurement-feedback ensembles from a single JSON configuration.
//!
//! Exit codes: 0 success, 1 I/O or validation error, 2 infeasible synthesis,
//! 3 some realizations failed, 4 a target (success floor or reproduction check) was missed.

mod commands;
mod config;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use qndctl_core::synthesis::ResidualNorm;
use qndctl_core::PhasePolicy;

#[derive(Parser)]
#[command(
    name = "qndctl",
    version,
    about = "Feedback stabilization under QND measurement"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the connectivity matrix R and build H1 from it.
    Synthesize(SynthesizeArgs),
    /// Run the ensemble described by a config file.
    Simulate(RunArgs),
    /// Report which structural assumptions hold for a config.
    Validate(ValidateArgs),
    /// Rebuild the 8-level reference example end to end and write a report.
    ReproducePaper(ReproduceArgs),
}

#[derive(Args)]
struct SynthesizeArgs {
    /// JSON file with {"diag": [...], "n_star": k}.
    #[arg(long)]
    p_diag: PathBuf,
    /// Add the l1 sparsity term (alpha1 = alpha2 = 1).
    #[arg(long)]
    sparse: bool,
    #[arg(long)]
    gamma1: Option<f64>,
    #[arg(long)]
    gamma2: Option<f64>,
    #[arg(long)]
    alpha1: Option<f64>,
    #[arg(long)]
    alpha2: Option<f64>,
    #[arg(long, value_enum)]
    norm: Option<NormArg>,
    /// Require Tr(R) <= this (non-positive) value.
    #[arg(long, allow_hyphen_values = true)]
    trace_bound: Option<f64>,
    #[arg(long, value_enum, default_value_t = PhaseArg::Positive)]
    phase: PhaseArg,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    L2,
}

impl From<NormArg> for ResidualNorm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::L1 => ResidualNorm::L1,
            NormArg::L2 => ResidualNorm::L2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum PhaseArg {
    Positive,
    Alternating,
    Imaginary,
}

impl From<PhaseArg> for PhasePolicy {
    fn from(p: PhaseArg) -> Self {
        match p {
            PhaseArg::Positive => PhasePolicy::Positive,
            PhaseArg::Alternating => PhasePolicy::Alternating,
            PhaseArg::Imaginary => PhasePolicy::ImaginaryOffDiagonal,
        }
    }
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Defaults to the config's output_dir, then the current directory.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overrides ensemble.master_seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Case {
    Nonsparse,
    Sparse,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long, value_enum)]
    case: Case,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value_t = 100)]
    realizations: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synthesize(a) => commands::synthesize(&a),
        Command::Simulate(a) => commands::simulate(&a),
        Command::Validate(a) => commands::validate(&a),
        Command::ReproducePaper(a) => commands::reproduce(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(commands::Code::Invalid as u8)
        }
    }
}
