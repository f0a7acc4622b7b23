mod commands;
mod output;
mod plot;

use std::path::PathBuf;

use anyhow::Result;
use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Parser)]
#[command(name = "spincluster", version, about = "Simulate and decode dark-spin clusters read out through an NV centre")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
pub struct Global {
    /// Cluster configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Binomial shots per point; 0 gives exact probabilities.
    #[arg(long, global = true, default_value_t = 0)]
    shots: u64,
    /// Comma-separated output kinds: csv, json, svg.
    #[arg(long, global = true, default_value = "csv,json")]
    emit: String,
}

#[derive(Subcommand)]
enum Command {
    /// Physical constants and derived prefactors as JSON.
    Constants,
    /// NV excited-state and N-spin transitions against field.
    Resonance(ResonanceArgs),
    /// Run a pulse sequence on the configured cluster.
    Simulate(SimulateArgs),
    /// Fit traces with one of the signal models.
    Fit(FitArgs),
    /// Posterior lattice maps from fitted couplings.
    Locate(LocateArgs),
}

#[derive(Args)]
pub struct ResonanceArgs {
    /// Lowest field, mT.
    #[arg(long, default_value_t = 0.0)]
    b_min: f64,
    /// Highest field, mT.
    #[arg(long, default_value_t = 40.0)]
    b_max: f64,
    /// Number of field points.
    #[arg(long, default_value_t = 401)]
    points: usize,
}

#[derive(Args)]
pub struct SimulateArgs {
    /// Builtin sequence: DEER, DSE_D, DSE_U, IDSE_D, IDSE_U, HH_DPLUS,
    /// HH_DMINUS, HH_ALT, or the groups IDSE (D/U pair), IDSE_SCAN
    /// (phase difference against free time) and HH (all three locks).
    #[arg(long, conflicts_with = "sequence")]
    builtin: Option<String>,
    /// Sequence file in the text format.
    #[arg(long)]
    sequence: Option<PathBuf>,
    /// Free evolution time, µs.
    #[arg(long)]
    tau: Option<f64>,
    /// Optical initialization, µs.
    #[arg(long)]
    t_init: Option<f64>,
    /// Sweep as [NAME=]START:STOP:N:UNIT, e.g. 0:2:101:us.
    #[arg(long)]
    sweep: Option<String>,
    /// Free-time grid for IDSE_SCAN, START:STOP:N:UNIT.
    #[arg(long)]
    scan: Option<String>,
    /// Divide by the same program without N-channel pulses.
    #[arg(long)]
    normalize: bool,
    /// Preparatory shots carrying cluster state before each measured shot.
    #[arg(long, requires = "memory_value")]
    memory_shots: Option<usize>,
    /// Sweep value of the preparatory shots, in the sweep's unit.
    #[arg(long)]
    memory_value: Option<f64>,
    /// Disable the Gaussian echo envelope.
    #[arg(long)]
    no_envelope: bool,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FitModel {
    Dse,
    Hh,
    #[value(name = "idse_phase")]
    IdsePhase,
    Pumping,
}

#[derive(Args)]
pub struct FitArgs {
    #[arg(long, value_enum)]
    model: FitModel,
    /// Trace CSV files. The file stem labels each data set.
    #[arg(long, num_args = 1.., required = true)]
    data: Vec<PathBuf>,
    /// Candidate cluster sizes for idse_phase, e.g. 1..4.
    #[arg(long, default_value = "1..4")]
    select_n: String,
    /// Rank cluster sizes by AICc instead of AIC.
    #[arg(long)]
    aicc: bool,
    /// Random restarts per fit.
    #[arg(long, default_value_t = 32)]
    starts: usize,
}

#[derive(Args)]
pub struct LocateArgs {
    /// Fit or observation JSON files with a `spins` array; entries sharing
    /// a label are merged.
    #[arg(long, num_args = 1.., required = true)]
    input: Vec<PathBuf>,
    /// Search radius, nm.
    #[arg(long, default_value_t = 5.0)]
    radius: f64,
    /// Lower bound on each uncertainty as a fraction of its value, to
    /// absorb model error beyond the fit statistics.
    #[arg(long, default_value_t = 0.0)]
    sigma_floor: f64,
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    let g = &cli.global;
    let written = match &cli.command {
        Command::Constants => commands::constants(g)?,
        Command::Resonance(a) => commands::resonance(g, a)?,
        Command::Simulate(a) => commands::simulate(g, a)?,
        Command::Fit(a) => commands::fit(g, a)?,
        Command::Locate(a) => commands::locate(g, a)?,
    };
    for p in written {
        println!("{}", p.display());
    }
    Ok(())
}
