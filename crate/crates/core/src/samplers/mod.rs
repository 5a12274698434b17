//! Posterior sampling: truncated-normal Gibbs updates of the latent values,
//! degree and coefficient draws, HMC over kernel hyperparameters, and the
//! chain that ties them together.

pub mod chain;
pub mod degree;
pub mod diagnostics;
pub mod gibbs;
pub mod hmc;
pub mod targets;
pub mod truncnorm;

pub use chain::{
    constraint_violations, run_chain, run_chain_with, DrawRecord, FitOptions, McmcConfig, MeanFamily, PosteriorDraws,
};
pub use degree::{beta_conditional_mean, degree_log_weights, sample_beta, sample_degree};
pub use gibbs::gibbs_update_latent;
pub use hmc::{hmc_step, leapfrog, HmcOutcome, PotentialEnergy};
pub use targets::hmc_update_theta;
pub use truncnorm::sample_truncnorm;
