use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use reclab::experiment::{run_with_threads, validate, ExperimentConfig, ExperimentKind};
use reclab::Error;

#[derive(Parser)]
#[command(name = "reclab", version, about = "Experiments for nonlinear recombination dynamics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact evolution with TV distance and bounds per step
    ExactEvolve(RunArgs),
    /// Tree-sampler Monte Carlo of the evolved measure
    McEvolve(RunArgs),
    /// Closed-form bounds and quenched environment statistics
    Bounds(RunArgs),
    /// Basket test-event lower bound
    BasketLb(RunArgs),
    /// Second-order chaos statistic under the stationary measure
    SharpnessQ2(RunArgs),
    /// Monochromatic cutoff profile against the Gaussian limit
    Profile(RunArgs),
    /// Fragmentation survival against the union bound
    Fragmentation(RunArgs),
    /// Check a config without running it
    Validate(ValidateArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the master seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on it
    #[arg(long)]
    threads: Option<usize>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct ValidateArgs {
    #[arg(long)]
    config: PathBuf,
}

const EXIT_FAILURE: u8 = 1;
const EXIT_VALIDATION: u8 = 2;
const EXIT_CAPACITY: u8 = 3;

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::CapacityExceeded { .. } => EXIT_CAPACITY,
        Error::Validation { capacity_only: true, .. } => EXIT_CAPACITY,
        Error::Validation { .. }
        | Error::Format(_)
        | Error::InvalidParameter(_)
        | Error::InvalidMeasure(_)
        | Error::InvalidSpinSpace(_)
        | Error::DegenerateMarginal { .. }
        | Error::DimensionMismatch(_) => EXIT_VALIDATION,
        _ => EXIT_FAILURE,
    }
}

fn fail(e: Error) -> ExitCode {
    eprintln!("error: {e}");
    ExitCode::from(exit_code(&e))
}

fn run_experiment(kind: ExperimentKind, args: RunArgs) -> ExitCode {
    let mut cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    cfg.experiment = kind;
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = match run_with_threads(&cfg, args.threads) {
        Ok(o) => o,
        Err(e) => return fail(e),
    };
    if let Err(e) = out.write_to(&args.out) {
        return fail(e);
    }
    for (name, _) in &out.files {
        println!("{}", args.out.join(name).display());
    }
    ExitCode::SUCCESS
}

fn run_validate(args: ValidateArgs) -> ExitCode {
    let cfg = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(e),
    };
    let violations = validate(&cfg);
    if violations.is_empty() {
        println!("ok");
        return ExitCode::SUCCESS;
    }
    for v in &violations {
        let tag = if v.capacity { " (capacity)" } else { "" };
        println!("{}: {}{tag}", v.field, v.message);
    }
    if violations.iter().all(|v| v.capacity) {
        ExitCode::from(EXIT_CAPACITY)
    } else {
        ExitCode::from(EXIT_VALIDATION)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::ExactEvolve(a) => run_experiment(ExperimentKind::ExactEvolve, a),
        Command::McEvolve(a) => run_experiment(ExperimentKind::McEvolve, a),
        Command::Bounds(a) => run_experiment(ExperimentKind::Bounds, a),
        Command::BasketLb(a) => run_experiment(ExperimentKind::BasketLb, a),
        Command::SharpnessQ2(a) => run_experiment(ExperimentKind::SharpnessQ2, a),
        Command::Profile(a) => run_experiment(ExperimentKind::Profile, a),
        Command::Fragmentation(a) => run_experiment(ExperimentKind::Fragmentation, a),
        Command::Validate(a) => run_validate(a),
    }
}
