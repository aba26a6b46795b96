//! Command-line driver: simulate pulse sequences into detector time tags,
//! analyze tag files, and sweep scan variables into curve files.
//!
//! Exit codes: 0 success, 2 configuration or input error, 3 simulation
//! failure, 4 analysis failure.

use clap::{Parser, Subcommand};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use trion_cli::config::{self, RunConfig};
use trion_cli::{analyze, run, CliError};

#[derive(Parser)]
#[command(name = "trion", version, about = "Spin-photon interface simulator")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
    /// Master seed, overriding the config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Directory for output files (default: current directory).
    #[arg(long, global = true)]
    out_dir: Option<PathBuf>,
    /// Worker threads for trajectory blocks.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Proceed despite missing or mixed tag-file metadata.
    #[arg(long, global = true)]
    force: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run a config and write time-tag files plus metadata sidecars.
    Simulate { config: PathBuf },
    /// Analyze tag files against an analysis spec.
    Analyze {
        /// Analysis spec file; optional in --f1/--f2 bypass mode.
        spec: Option<PathBuf>,
        /// Tag files (CSV with sidecar .meta).
        tags: Vec<PathBuf>,
        /// Classical correlation fidelity, bypassing tag analysis.
        #[arg(long)]
        f1: Option<f64>,
        /// Coherence fidelity, bypassing tag analysis.
        #[arg(long)]
        f2: Option<f64>,
    },
    /// Run the scan directives of a config into an aggregated curve file.
    Scan { config: PathBuf },
}

fn stem(path: &Path) -> &str {
    path.file_stem().and_then(|s| s.to_str()).unwrap_or("run")
}

fn configure_threads(n: usize) -> Result<(), CliError> {
    if n == 0 {
        return Err(CliError::Config("threads must be ≥ 1".into()));
    }
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Simulation(e.to_string()))?;
    #[cfg(not(feature = "parallel"))]
    if n > 1 {
        eprintln!("note: built without the parallel feature; running single-threaded");
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        configure_threads(n)?;
    }
    let out_dir = cli.out_dir.unwrap_or_else(|| PathBuf::from("."));
    match cli.cmd {
        Cmd::Simulate { config } => {
            let rc = RunConfig::load(&config, cli.seed).map_err(CliError::Config)?;
            run::simulate(&rc, &out_dir, stem(&config))
        }
        Cmd::Scan { config } => {
            let rc = RunConfig::load(&config, cli.seed).map_err(CliError::Config)?;
            run::scan(&rc, &out_dir, stem(&config))
        }
        Cmd::Analyze { spec, tags, f1, f2 } => {
            if f1.is_some() || f2.is_some() {
                let (Some(f1), Some(f2)) = (f1, f2) else {
                    return Err(CliError::Config("--f1 and --f2 must be given together".into()));
                };
                if spec.is_some() || !tags.is_empty() {
                    return Err(CliError::Config(
                        "--f1/--f2 bypass mode takes no spec or tag files".into(),
                    ));
                }
                analyze::bypass(f1, f2, &out_dir)
            } else {
                let spec = spec.ok_or_else(|| {
                    CliError::Config("an analysis spec is required unless --f1/--f2 are given".into())
                })?;
                let kind = config::load_analysis_spec(&spec).map_err(CliError::Config)?;
                analyze::analyze(&kind, &tags, &out_dir, cli.force)
            }
        }
    }
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.code())
        }
    }
}
