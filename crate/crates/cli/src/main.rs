use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paulilab_core::harness::{self, Command, ExperimentConfig, OUT_ENV};
use paulilab_core::Error;

#[derive(Parser)]
#[command(
    name = "paulilab",
    version,
    about = "Spectral experiments on sparse random Pauli Hamiltonians"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Sample ensemble instances and write them to disk.
    Sample(RunArgs),
    /// Exact spectrum (CSV) and summary (JSON) of an instance.
    Spectrum(RunArgs),
    /// Normalized Schatten p-norms.
    Pnorm(RunArgs),
    /// Normalized resolvent trace moments against the semicircle.
    Resolvent(RunArgs),
    /// Pooled density of states, low-energy fractions and the resolvent proxy.
    Dos(RunArgs),
    /// Pauli vs GUE comparisons, norm tails, telescopes, concentration, moment matching.
    Universality(RunArgs),
    /// Phase-estimation sampling with repeat-until-success.
    Qpe(RunArgs),
    /// Chebyshev polynomial low-energy witness.
    Witness(RunArgs),
    /// Circuit-size lower bounds and universality bound envelopes.
    Bound(RunArgs),
    /// Best product-state energy by coordinate descent.
    Baseline(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// JSON experiment config.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: $PAULILAB_OUT/<subcommand>, else ./paulilab-out/<subcommand>).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (default: config `threads`, else all cores).
    #[arg(long)]
    threads: Option<usize>,
}

impl Sub {
    fn split(self) -> (Command, RunArgs) {
        match self {
            Sub::Sample(a) => (Command::Sample, a),
            Sub::Spectrum(a) => (Command::Spectrum, a),
            Sub::Pnorm(a) => (Command::Pnorm, a),
            Sub::Resolvent(a) => (Command::Resolvent, a),
            Sub::Dos(a) => (Command::Dos, a),
            Sub::Universality(a) => (Command::Universality, a),
            Sub::Qpe(a) => (Command::Qpe, a),
            Sub::Witness(a) => (Command::Witness, a),
            Sub::Bound(a) => (Command::Bound, a),
            Sub::Baseline(a) => (Command::Baseline, a),
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Domain(_) | Error::Parse(_) | Error::Json(_) => 2,
        Error::Numeric { .. } | Error::Resource(_) => 3,
        Error::Io(_) => 1,
    }
}

fn execute(command: Command, args: RunArgs) -> paulilab_core::Result<harness::RunOutput> {
    let mut cfg = ExperimentConfig::from_path(&args.config)?;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args.out.or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| {
        let root = std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("paulilab-out"), PathBuf::from);
        root.join(command.name())
    });
    let threads = args
        .threads
        .or(cfg.threads)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    if threads == 0 {
        return Err(Error::Config("--threads must be at least 1".into()));
    }
    harness::run(command, &cfg, &out, threads)
}

fn main() -> ExitCode {
    let (command, args) = Cli::parse().command.split();
    match execute(command, args) {
        Ok(out) => {
            for f in &out.files {
                println!("{}", out.dir.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("paulilab {}: {e}", command.name());
            ExitCode::from(exit_code(&e))
        }
    }
}
