use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use semiclassical::cli::{self, CliError, Mode};

#[derive(Parser)]
#[command(
    name = "semiclassical",
    version,
    about = "Hamilton-Jacobi, Schrödinger and hbar -> 0 experiments in 1-D"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Hopf-Lax action (and transported density for Gaussian data).
    #[command(name = "hopf_lax")]
    HopfLax(RunArgs),
    /// Split-step evolution and Madelung fields.
    Schrodinger(RunArgs),
    /// Statistical hbar sweep against the classical pair.
    #[command(name = "statistical_sweep")]
    StatisticalSweep(RunArgs),
    /// Coherent-state hbar sweep against the deterministic action.
    #[command(name = "deterministic_sweep")]
    DeterministicSweep(RunArgs),
    /// de Broglie-Bohm trajectories.
    Bohm(RunArgs),
    /// Legendre-Fenchel transform of the elementary action.
    Legendre(RunArgs),
    /// Parse and validate the configuration only.
    Validate(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `output_dir`.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Random seed, overriding `seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads; 0 picks the number of cores.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn execute(command: Command) -> Result<(), CliError> {
    let (mode, args) = match command {
        Command::HopfLax(a) => (Some(Mode::HopfLax), a),
        Command::Schrodinger(a) => (Some(Mode::Schrodinger), a),
        Command::StatisticalSweep(a) => (Some(Mode::StatisticalSweep), a),
        Command::DeterministicSweep(a) => (Some(Mode::DeterministicSweep), a),
        Command::Bohm(a) => (Some(Mode::Bohm), a),
        Command::Legendre(a) => (Some(Mode::Legendre), a),
        Command::Validate(a) => (None, a),
    };
    let mut cfg = cli::parse_config(&args.config, mode)?;
    if let Some(dir) = args.output {
        cfg.output_dir = dir;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    if mode.is_none() {
        println!(
            "{}: valid {} configuration",
            args.config.display(),
            cfg.mode
        );
        return Ok(());
    }
    if args.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new()
            .num_threads(args.threads)
            .build_global()
        {
            log::warn!("could not configure the thread pool: {e}");
        }
    }
    let manifest = cli::run(&cfg)?;
    for out in &manifest.outputs {
        println!(
            "{}: {} rows",
            cfg.output_dir.join(&out.file).display(),
            out.rows
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let parsed = Cli::parse();
    match execute(parsed.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
