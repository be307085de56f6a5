use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use eqfree::config::{parse_config, Experiment};
use eqfree::output::write_results;
use eqfree::runner::run_experiment;

#[derive(Parser)]
#[command(name = "eqfree", version, about = "Equation-free multiscale experiments and their checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coarse projective integration of a scalar SDE
    Projective(RunArgs),
    /// Gap-tooth patch dynamics for a linear PDE
    Patch(RunArgs),
    /// Variance-based derivative dependence of a black box
    #[command(name = "order-detect")]
    OrderDetect(RunArgs),
    /// Scale-dependent effective order of inertial particles
    Kp(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the output directory in the config
    #[arg(long)]
    out: Option<PathBuf>,
    /// Replace existing result files
    #[arg(long)]
    force: bool,
}

const EXIT_CHECK_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (experiment, args) = match cli.command {
        Command::Projective(a) => (Experiment::Projective, a),
        Command::Patch(a) => (Experiment::Patch, a),
        Command::OrderDetect(a) => (Experiment::OrderDetect, a),
        Command::Kp(a) => (Experiment::Kp, a),
    };
    let text = match std::fs::read_to_string(&args.config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let mut cfg = match parse_config(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: invalid config {}:\n{e}", args.config.display());
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if cfg.experiment != experiment {
        eprintln!(
            "error: config describes experiment `{}` but the subcommand is `{}`",
            cfg.experiment.name(),
            experiment.name()
        );
        return ExitCode::from(EXIT_CONFIG);
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("results").join(experiment.name()));

    let started = Instant::now();
    let record = run_experiment(&cfg);
    let elapsed = started.elapsed();
    if let Err(e) = write_results(&record, &out, args.force) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_CONFIG);
    }
    print!("{}", record.summary());
    println!("# wall time {:.3} s, results in {}", elapsed.as_secs_f64(), out.display());
    if record.all_pass() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_CHECK_FAILED)
    }
}
