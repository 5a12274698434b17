pub mod data;
pub mod error;
pub mod gp;
mod groups;
pub mod inference;
pub mod kernel;
pub mod model;
pub mod roots;
pub mod samplers;
pub mod sim;

pub use data::{Arm, PatientSeries, TrialDataset};
pub use error::{LgpError, Result};
pub use kernel::{KernelKind, KernelParams};
pub use model::{ArmMeanModel, LatentState, MeanModel, PriorConfig};
pub use samplers::{run_chain, run_chain_with, FitOptions, McmcConfig, MeanFamily, PosteriorDraws};
pub use inference::{
    estimate_eta, forecast_batch, forecast_q, monitor_decision, posterior_summary, ForecastRequest, MonitorConfig,
    MonitorDecision, PosteriorSummary, Verdict,
};
pub use sim::{generate_outcomes, operating_characteristics, run_trial, simulate_trials, ScenarioTruth, TrialDesign, TrialRecord};
