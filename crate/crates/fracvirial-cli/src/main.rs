//! `fracvirial` experiment runner.
//!
//! Exit codes: 0 pass, 1 check failure, 2 usage or config error, 3 numerical instability.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ConfigFile, List};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("usage: {0}")]
    Usage(String),
    #[error("check failed: {0}")]
    Check(String),
    #[error(transparent)]
    Lib(#[from] fracvirial::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use fracvirial::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Check(_) => 1,
            CliError::Lib(e) => match e {
                E::InvalidInput(_) | E::Domain(_) | E::Support { .. } | E::Symmetry(_) | E::Io(_) => 2,
                E::Consistency(_) | E::FitRejected(_) | E::Construction(_) => 1,
                E::Quadrature { .. } | E::Convergence(_) | E::Projection(_) | E::Leakage(_) | E::Instability(_) => 3,
            },
        }
    }
}

#[derive(Parser, Debug)]
#[command(name = "fracvirial", version, about = "Virial identities and blowup experiments for the fractional NLS")]
pub struct Cli {
    /// key = value config file; [section] headers name subcommands. Flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Directory for artifacts and manifest.json (default: out)
    #[arg(long, global = true)]
    pub output_dir: Option<PathBuf>,
    /// Seed for random test fields and noise (default: 0)
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Identity checks.
    Verify {
        #[command(subcommand)]
        what: VerifyCommand,
    },
    /// Ground state, Gagliardo-Nirenberg constant and blowup thresholds.
    Groundstate(GroundstateArgs),
    /// Split-step evolution with virial monitoring.
    Evolve(EvolveArgs),
    /// Interval problem with the exterior Dirichlet fractional Laplacian.
    Domain(DomainArgs),
    /// Cutoff profile tables and the eta certificate.
    Cutoff(CutoffArgs),
    /// Named acceptance suite, or "all".
    Suite { name: String },
}

#[derive(Subcommand, Debug)]
pub enum VerifyCommand {
    /// Finite-difference dM_R/dt against the virial right-hand side.
    Virial(VirialArgs),
}

#[derive(Args, Debug)]
pub struct VirialArgs {
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long = "R")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// Points per axis (power of two).
    #[arg(long)]
    pub grid: Option<usize>,
    /// Accepted terminal relative error.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub half_length: Option<f64>,
    /// Gaussian amplitude; defaults to half the zero-energy amplitude.
    #[arg(long)]
    pub amp: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// Time of the comparison.
    #[arg(long)]
    pub t0: Option<f64>,
    /// Finite-difference half-widths, comma separated.
    #[arg(long)]
    pub steps: Option<List>,
}

#[derive(Args, Debug)]
pub struct GroundstateArgs {
    #[arg(long = "N")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub half_length: Option<f64>,
}

#[derive(Args, Debug)]
pub struct EvolveArgs {
    #[arg(long = "N")]
    pub dim: Option<usize>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Gaussian amplitude; defaults to amp-factor times the zero-energy amplitude.
    #[arg(long)]
    pub amp: Option<f64>,
    #[arg(long)]
    pub amp_factor: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    /// Virial radii, comma separated.
    #[arg(long = "R")]
    pub radii: Option<List>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub half_length: Option<f64>,
    /// Relative size of a seeded band-limited perturbation.
    #[arg(long)]
    pub noise: Option<f64>,
    #[arg(long)]
    pub rhs_stride: Option<usize>,
    #[arg(long)]
    pub snapshot_stride: Option<usize>,
    #[arg(long)]
    pub conservation_tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct DomainArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub a: Option<f64>,
    #[arg(long)]
    pub b: Option<f64>,
    /// Interior nodes.
    #[arg(long = "M")]
    pub points: Option<usize>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    /// Gaussian amplitude; defaults to amp-factor times the zero-energy amplitude.
    #[arg(long)]
    pub amp: Option<f64>,
    #[arg(long)]
    pub amp_factor: Option<f64>,
    #[arg(long)]
    pub width: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub tmax: Option<f64>,
    #[arg(long)]
    pub conservation_tol: Option<f64>,
}

#[derive(Args, Debug)]
pub struct CutoffArgs {
    #[arg(long = "R")]
    pub radius: Option<f64>,
    #[arg(long)]
    pub s: Option<f64>,
    #[arg(long = "N")]
    pub dim: Option<usize>,
}

fn init_threads() -> Result<Option<usize>, CliError> {
    let Ok(text) = std::env::var("FRACVIRIAL_THREADS") else {
        return Ok(None);
    };
    let n: usize = text
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("FRACVIRIAL_THREADS must be a positive integer, got '{text}'")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(format!("thread pool: {e}")))?;
    Ok(Some(n))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let threads = init_threads()?;
    let file = match &cli.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    commands::dispatch(cli, &file, threads)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("fracvirial: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
