use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "lgp", version, about = "Latent Gaussian process models for longitudinal binary trial outcomes")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit the model and write posterior summaries, traces and diagnostics.
    Fit(FitArgs),
    /// Posterior-predictive response probabilities at future weeks.
    Forecast(ForecastArgs),
    /// Interim decision: superiority probability and stop/continue verdict.
    Monitor(MonitorArgs),
    /// Replicate sequential trials and report operating characteristics.
    Simulate(SimulateArgs),
    /// Export simulated data from a scenario.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelArg {
    Periodic,
    Sqexp,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MeanArg {
    Polynomial,
    Trigonometric,
}

/// Options shared by every command that runs the sampler.
#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    /// JSON run configuration; flags given on the command line win.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Total MCMC iterations.
    #[arg(long)]
    pub iters: Option<usize>,
    #[arg(long)]
    pub burnin: Option<usize>,
    #[arg(long)]
    pub thin: Option<usize>,
    /// Response threshold on the latent scale.
    #[arg(long, allow_negative_numbers = true)]
    pub ah: Option<f64>,
    #[arg(long)]
    pub max_degree: Option<usize>,
    #[arg(long, value_enum)]
    pub kernel: Option<KernelArg>,
    #[arg(long, value_enum)]
    pub mean: Option<MeanArg>,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct DecisionArgs {
    /// Superiority margin in weeks.
    #[arg(long)]
    pub delta: Option<f64>,
    #[arg(long)]
    pub xi_upper: Option<f64>,
    #[arg(long)]
    pub xi_lower: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// CSV with header `arm,patient_id,week,outcome`.
    #[arg(long)]
    pub data: Option<PathBuf>,
    /// Follow-up horizon in weeks.
    #[arg(long)]
    pub horizon: Option<u32>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
}

#[derive(Debug, Args)]
pub struct ForecastArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Future weeks, e.g. `33-35` or `30,33,35`.
    #[arg(long)]
    pub weeks: String,
}

#[derive(Debug, Args)]
pub struct MonitorArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub decision: DecisionArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Scenario JSON file, or a preset name (`trial-1` … `trial-6`).
    #[arg(long)]
    pub scenario: String,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub decision: DecisionArgs,
    #[arg(long)]
    pub replicates: Option<usize>,
    #[arg(long)]
    pub first_interim: Option<u32>,
    /// 100 replicates with 10,000-iteration interim fits.
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Debug, Args)]
pub struct GenerateArgs {
    /// Scenario JSON file, or a preset name (`sensitivity-1` … `sensitivity-5`,
    /// `trial-1` … `trial-6`).
    #[arg(long)]
    pub scenario: String,
    /// Patients per arm.
    #[arg(long, default_value_t = 100)]
    pub patients: usize,
    /// Observation weeks, e.g. `1-32`.
    #[arg(long)]
    pub weeks: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, allow_negative_numbers = true)]
    pub ah: Option<f64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
