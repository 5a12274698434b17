//! Synthetic data from known truths and simulated sequential trials.

pub mod scenario;
pub mod trial;

pub use scenario::{generate_cohort, generate_outcomes, Cohort, ScenarioTruth};
pub use trial::{
    accrue, operating_characteristics, run_trial, simulate_trials, simulate_trials_with, write_oc_csv, write_trials_csv,
    OperatingCharacteristics, TrialCohort, TrialDesign, TrialRecord,
};
