use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use fdelab::pipeline::{run_experiment, Pipeline};
use fdelab::sweep::{sweep, write_sweep_csv};
use fdelab::{CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "fdelab", version, about = "Fast-diffusion extinction and entropy-decay experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Experiment config (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides `output.dir`
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Stationary profile
    Stationary(Common),
    /// Profile plus weighted spectrum and gap report
    Spectrum(Common),
    /// Linearized flow around the profile
    LinearEvolve(Common),
    /// Rescaled nonlinear flow with diagnostics
    Evolve(Common),
    /// Rescaled flow, diagnostics and the sharp-rate verdict
    Rates(Common),
    /// Parameter sweep of the rates pipeline
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Concurrent cells
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
}

fn run(cli: Cli) -> Result<i32, CliError> {
    let (pipeline, common, jobs) = match cli.command {
        Command::Stationary(c) => (Some(Pipeline::Stationary), c, 1),
        Command::Spectrum(c) => (Some(Pipeline::Spectrum), c, 1),
        Command::LinearEvolve(c) => (Some(Pipeline::LinearEvolve), c, 1),
        Command::Evolve(c) => (Some(Pipeline::Evolve), c, 1),
        Command::Rates(c) => (Some(Pipeline::Rates), c, 1),
        Command::Sweep { common, jobs } => (None, common, jobs),
    };
    let mut cfg = ExperimentConfig::load(&common.config)?;
    if let Some(out) = common.out {
        cfg.output_dir = out;
    }
    let dir = cfg.output_dir.clone();
    match pipeline {
        Some(p) => {
            let out = run_experiment(p, &cfg, &dir)?;
            if let Some(v) = &out.verdict {
                println!("{}: {} (fit {:?}, predicted {:?})", p.name(), v.status, v.lambda_fit, v.predicted);
                if v.failed() {
                    if let Some(e) = &v.error {
                        eprintln!("verdict: {e}");
                    }
                    return Ok(4);
                }
            } else {
                println!("{}: artifacts written to {}", p.name(), dir.display());
            }
        }
        None => {
            let rows = sweep(&cfg, jobs, Some(&dir.join("cells")))?;
            write_sweep_csv(&dir.join("sweep.csv"), &rows)?;
            println!("sweep: {} cells written to {}", rows.len(), dir.join("sweep.csv").display());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
