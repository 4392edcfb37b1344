use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand};
use nlw_core::runner::{self, RunConfig, RunSummary};
use nlw_core::NlwError;

#[derive(Parser, Debug)]
#[command(name = "nlw", version, about = "Normal forms and stability experiments for the Dirichlet nonlinear wave equation")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Overrides `output.dir`.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Bare frequencies in `measure` (sets `measure.fast`).
    #[arg(long, global = true)]
    fast_freq: bool,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Build the model Hamiltonian and frequency tables.
    Build,
    /// Order-2 step plus partial normal form.
    Normalform,
    /// Monte Carlo measure of the resonant set.
    Measure,
    /// Integrate the truncated equation.
    Simulate,
    /// Distance to the normal-form torus over long times.
    Stability,
    /// Tame and weighted vector field norms.
    Norms,
}

const EXIT_CONFIG: u8 = 2;
const EXIT_RESONANCE: u8 = 3;
const EXIT_NUMERICAL: u8 = 4;

fn exit_code(e: &NlwError) -> u8 {
    match e {
        NlwError::Config { .. } | NlwError::ParameterDomain { .. } | NlwError::Cap(_) | NlwError::Precondition(_) => EXIT_CONFIG,
        NlwError::ResonantTerm { .. } | NlwError::Order2Resonance { .. } => EXIT_RESONANCE,
        NlwError::Convergence { .. } | NlwError::Flow(_) | NlwError::Blowup { .. } | NlwError::Poly(_) => EXIT_NUMERICAL,
        NlwError::Io(_) => 1,
    }
}

fn load(cli: &Cli) -> Result<RunConfig, NlwError> {
    let path = cli.config.as_ref().ok_or_else(|| NlwError::Config { path: "--config".into(), msg: "a configuration file is required".into() })?;
    let mut cfg = RunConfig::load(path)?;
    // flag > file > default
    if let Some(seed) = cli.seed {
        cfg.experiment.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.dir = out.clone();
    }
    if cli.fast_freq {
        cfg.measure.fast = true;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: &Cli) -> Result<RunSummary, NlwError> {
    let cfg = load(cli)?;
    match cli.command {
        Command::Build => runner::cmd_build(&cfg),
        Command::Normalform => runner::cmd_normalform(&cfg),
        Command::Measure => runner::cmd_measure(&cfg),
        Command::Simulate => runner::cmd_simulate(&cfg),
        Command::Stability => runner::cmd_stability(&cfg),
        Command::Norms => runner::cmd_norms(&cfg),
    }
}

fn init_threads(jobs: Option<usize>) -> anyhow::Result<()> {
    if let Some(j) = jobs {
        rayon::ThreadPoolBuilder::new().num_threads(j.max(1)).build_global().context("configuring the worker pool")?;
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(e) = init_threads(cli.jobs) {
        eprintln!("error: {e:#}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(s) => {
            for line in &s.lines {
                println!("{line}");
            }
            for f in &s.files {
                println!("{}  {}", f.sha256, s.dir.join(&f.name).display());
            }
            match s.failure {
                None => ExitCode::SUCCESS,
                Some(e) => {
                    eprintln!("error: {e}");
                    ExitCode::from(exit_code(&e))
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
