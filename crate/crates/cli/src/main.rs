use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use vie_cli::{ExperimentConfig, Overrides, Subcommand};
use vie_core::fft_operator::MatvecStrategy;

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Command {
    RankSweep,
    CompressReport,
    MatvecBench,
    SphereValidate,
    PhantomSolve,
    Mie,
    Solve,
}

impl From<Command> for Subcommand {
    fn from(c: Command) -> Self {
        match c {
            Command::RankSweep => Subcommand::RankSweep,
            Command::CompressReport => Subcommand::CompressReport,
            Command::MatvecBench => Subcommand::MatvecBench,
            Command::SphereValidate => Subcommand::SphereValidate,
            Command::PhantomSolve => Subcommand::PhantomSolve,
            Command::Mie => Subcommand::Mie,
            Command::Solve => Subcommand::Solve,
        }
    }
}

/// Compressed-operator volume integral equation experiments.
///
/// Exit status: 0 on success, 1 on input errors, 2 when a solve did not
/// converge (results are still written).
#[derive(Debug, Parser)]
#[command(name = "vie", version)]
struct Cli {
    #[arg(value_enum)]
    command: Command,
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Matvec strategy, e.g. dense, hosvd_decompress, tucker_cp_loop.
    #[arg(long, value_parser = parse_strategy)]
    strategy: Option<MatvecStrategy>,
    /// Compression tolerance replacing the config's sweep.
    #[arg(long)]
    tol: Option<f64>,
}

fn parse_strategy(s: &str) -> Result<MatvecStrategy, String> {
    MatvecStrategy::parse(s).map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let overrides = Overrides {
        out: cli.out,
        seed: cli.seed,
        strategy: cli.strategy,
        tol: cli.tol,
    };
    let cfg = ExperimentConfig::load(&cli.config).and_then(|mut c| c.apply(&overrides).map(|_| c));
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            eprintln!("vie: {}: {e}", cli.config.display());
            return ExitCode::from(1);
        }
    };
    match vie_cli::run(cli.command.into(), &cfg) {
        Ok(outcome) => {
            for f in &outcome.files {
                println!("{}", f.display());
            }
            if outcome.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("vie: a solve did not reach the GMRES tolerance; results were written");
                ExitCode::from(2)
            }
        }
        Err(e) => {
            eprintln!("vie: {e}");
            ExitCode::from(1)
        }
    }
}
