use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use dln_geom::GeomError;

mod commands;
mod config;

use config::ConfigFile;

/// Geometry of deep linear networks: entropy, flows, orbit volumes and
/// self-checks.
#[derive(Debug, Parser)]
#[command(name = "dln-geom", version)]
struct Cli {
    /// JSON file with default values for any flag; flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Boltzmann entropy of an end-to-end matrix.
    Entropy(EntropyArgs),
    /// Integrate a gradient flow and write its trajectory as CSV.
    Flow(FlowArgs),
    /// Run a numerical self-check suite and print a JSON report.
    Verify(VerifyArgs),
    /// Gauge orbit volume, closed form and (width 2) quadrature.
    Volume(VolumeArgs),
    /// Orthonormal tangent basis at a balanced network.
    Basis(BasisArgs),
}

#[derive(Debug, Args)]
pub struct EntropyArgs {
    /// Singular values, comma separated.
    #[arg(long)]
    pub sigma: Option<String>,
    /// Matrix file (JSON or .csv) whose singular values are used.
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// embedded or ponting.
    #[arg(long)]
    pub convention: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FlowArgs {
    /// param, closed, balanced or free-energy.
    #[arg(long)]
    pub kind: Option<String>,
    /// Initial end-to-end matrix; parameter flows start at its balanced center.
    #[arg(long)]
    pub x0: Option<PathBuf>,
    /// Initial network (JSON).
    #[arg(long)]
    pub network: Option<PathBuf>,
    #[arg(long)]
    pub target: Option<PathBuf>,
    /// 0/1 matrix selecting the observed entries of the target.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub dt: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    #[arg(long)]
    pub record_every: Option<usize>,
    /// Inverse temperatures, comma separated; `inf` turns the entropy off.
    /// Several values run as a parallel sweep.
    #[arg(long)]
    pub beta: Option<String>,
    #[arg(long)]
    pub convention: Option<String>,
    /// Output CSV file, or a directory when sweeping several betas.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// jacobi, chebyshev, extended, basis, submersion, volume or density.
    #[arg(long)]
    pub suite: Option<String>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Depth roots λ, comma separated; defaults to (d, d−1, …, 1).
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Pass threshold for every check of the suite.
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VolumeArgs {
    #[arg(long)]
    pub sigma: Option<String>,
    #[arg(long)]
    pub x: Option<PathBuf>,
    #[arg(long)]
    pub depth: Option<usize>,
    #[arg(long)]
    pub convention: Option<String>,
    /// Quadrature points per angle.
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BasisArgs {
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub depth: Option<usize>,
    /// Random frames from this seed; the center of the fiber when absent.
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Numeric(GeomError),
    VerificationFailed(String),
}

impl From<GeomError> for CliError {
    fn from(e: GeomError) -> Self {
        CliError::Numeric(e)
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = ConfigFile::load(cli.config.as_deref())?;
    match cli.command {
        Command::Entropy(a) => commands::entropy(a, cfg),
        Command::Flow(a) => commands::flow(a, cfg),
        Command::Verify(a) => commands::verify(a, cfg),
        Command::Volume(a) => commands::volume(a, cfg),
        Command::Basis(a) => commands::basis(a, cfg),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numeric(e)) => {
            eprintln!("error: {}: {e}", e.name());
            ExitCode::from(1)
        }
        Err(CliError::VerificationFailed(msg)) => {
            eprintln!("error: VerificationFailed: {msg}");
            ExitCode::from(1)
        }
    }
}
