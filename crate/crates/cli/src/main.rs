use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qpe_mproj_cli::config::Kind;
use qpe_mproj_cli::{run, Options};

/// Phase estimation experiments: spectra, simulated samples, estimators,
/// bounds and the bias/scaling sweeps.
#[derive(Debug, Parser)]
#[command(name = "qpe-mproj", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON experiment config.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file; stdout if omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads. Results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Eigenphases and overlaps of the Ising chain.
    Spectrum,
    /// Simulated filtered QPE samples.
    Sample,
    /// Apply estimators to a samples file.
    Estimate,
    /// Evaluate Fisher information, bias/variance bounds and cost models.
    Bounds,
    /// First-order bias of moment projection vs the mean on a (φ₀, φ₁) grid.
    Fig3,
    /// Estimator trials over a sweep of shot counts.
    #[command(name = "fig5-shots")]
    Fig5Shots,
    /// Estimator trials over a sweep of control register sizes.
    #[command(name = "fig5-qubits")]
    Fig5Qubits,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let kind = match cli.command {
        Command::Spectrum => Kind::Spectrum,
        Command::Sample => Kind::Sample,
        Command::Estimate => Kind::Estimate,
        Command::Bounds => Kind::Bounds,
        Command::Fig3 => Kind::Fig3,
        Command::Fig5Shots => Kind::Fig5Shots,
        Command::Fig5Qubits => Kind::Fig5Qubits,
    };
    let opts = Options { config: cli.config, seed: cli.seed, out: cli.out, threads: cli.threads };
    match run(kind, &opts) {
        Ok(_) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
