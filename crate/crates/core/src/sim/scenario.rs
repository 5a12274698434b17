//! Ground-truth configurations and synthetic outcome generation.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{weeks_to_times, Arm, PatientSeries, TrialDataset, DEFAULT_HORIZON_WEEKS, DEFAULT_TIME_SCALE};
use crate::error::{LgpError, Result};
use crate::gp::build_cov;
use crate::kernel::{KernelKind, KernelParams};
use crate::model::MeanModel;
use crate::samplers::{FitOptions, MeanFamily};

fn default_horizon() -> u32 {
    DEFAULT_HORIZON_WEEKS
}

/// The data-generating model, plus the model family used to fit its data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioTruth {
    #[serde(default)]
    pub name: String,
    /// Control arm first; a single entry describes a one-arm study.
    pub arms: Vec<MeanModel>,
    pub kernel: KernelKind,
    pub theta: KernelParams,
    #[serde(default)]
    pub a_h: f64,
    #[serde(default = "default_horizon")]
    pub horizon_weeks: u32,
    #[serde(default)]
    pub fit_mean: MeanFamily,
    #[serde(default)]
    pub fit_kernel: KernelKind,
}

impl ScenarioTruth {
    pub fn validate(&self) -> Result<()> {
        if !(1..=2).contains(&self.arms.len()) {
            return Err(LgpError::Validation(format!("a scenario has one or two arms, got {}", self.arms.len())));
        }
        for m in &self.arms {
            // generation accepts any degree; the fitter's cap is a prior setting
            m.validate(usize::MAX - 1)?;
        }
        self.theta.validate().map_err(|e| LgpError::Validation(e.to_string()))?;
        if !self.a_h.is_finite() {
            return Err(LgpError::Validation("a_h must be finite".into()));
        }
        if self.horizon_weeks == 0 {
            return Err(LgpError::Validation("horizon must be at least one week".into()));
        }
        Ok(())
    }

    pub fn arm_mean(&self, arm: Arm) -> Option<&MeanModel> {
        self.arms.get(arm.index())
    }

    /// True remission duration per arm, in weeks.
    pub fn true_ddr(&self) -> Vec<f64> {
        let h = self.horizon_weeks as f64 / DEFAULT_TIME_SCALE;
        self.arms.iter().map(|m| m.ddr(self.a_h, h, DEFAULT_TIME_SCALE)).collect()
    }

    /// `Pr{μ(t) + τ(t) > a_h}` at `week` for `arm`.
    pub fn true_response_rate(&self, arm: Arm, week: u32) -> Option<f64> {
        let mean = self.arm_mean(arm)?;
        let t = week as f64 / DEFAULT_TIME_SCALE;
        let sd = (self.theta.theta1.powi(2) + self.theta.jitter.powi(2)).sqrt();
        Some(0.5 * statrs::function::erf::erfc((self.a_h - mean.eval(t)) / (sd * std::f64::consts::SQRT_2)))
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions {
            kernel: self.fit_kernel,
            mean_family: self.fit_mean,
            ..FitOptions::default()
        }
    }

    /// Scenarios 1 to 5 of the forecasting study: one arm, 35 weekly visits.
    pub fn sensitivity(index: usize) -> Result<ScenarioTruth> {
        let periodic = KernelParams::new(1.0, 3.5, 2.0);
        // θ₂ is unused by the squared-exponential kernel
        let sqexp = KernelParams::new(1.0, 1.0, 3.0);
        let (arm, kernel, theta, fit_mean) = match index {
            1 => (MeanModel::polynomial(vec![-0.8]), KernelKind::Periodic, periodic, MeanFamily::Polynomial),
            2 => (MeanModel::polynomial(vec![-0.8, 0.4]), KernelKind::Periodic, periodic, MeanFamily::Polynomial),
            3 => (MeanModel::polynomial(vec![-1.0, 3.5, -1.0]), KernelKind::Periodic, periodic, MeanFamily::Polynomial),
            4 => (
                MeanModel::Trigonometric { alpha: -0.8, freq: 1.5 },
                KernelKind::SqExp,
                sqexp,
                MeanFamily::Trigonometric,
            ),
            5 => (
                MeanModel::Trigonometric { alpha: 0.0, freq: 1.0 },
                KernelKind::SqExp,
                sqexp,
                MeanFamily::Polynomial,
            ),
            _ => return Err(LgpError::InvalidArgument(format!("no forecasting scenario {index}; choose 1 to 5"))),
        };
        // scenario 4 is fitted with the generating kernel, scenario 5 deliberately is not
        let fit_kernel = if index == 4 { KernelKind::SqExp } else { KernelKind::Periodic };
        Ok(ScenarioTruth {
            name: format!("sensitivity-{index}"),
            arms: vec![arm],
            kernel,
            theta,
            a_h: 0.0,
            horizon_weeks: DEFAULT_HORIZON_WEEKS,
            fit_mean,
            fit_kernel,
        })
    }

    /// Scenarios 1 to 6 of the two-arm trial study.
    pub fn trial(index: usize) -> Result<ScenarioTruth> {
        let (control, experimental): (&[f64], &[f64]) = match index {
            1 => (&[-2.0, 3.5, -1.0], &[-1.4, 7.5, -5.3, 1.0]),
            2 => (&[-1.5, 7.5, -5.3, 1.0], &[-1.0, 3.5, -1.0]),
            3 => (&[-2.4, 7.5, -5.3, 1.0], &[-2.4, 3.5, -1.0]),
            4 => (&[-2.0, 7.5, -5.3, 1.0], &[-1.0, 3.5, -1.0]),
            5 => (&[-1.28, 3.5, -1.0], &[-1.2, 3.6, -1.0]),
            6 => (&[-0.39, 0.3], &[-1.1, 1.0]),
            _ => return Err(LgpError::InvalidArgument(format!("no trial scenario {index}; choose 1 to 6"))),
        };
        Ok(ScenarioTruth {
            name: format!("trial-{index}"),
            arms: vec![MeanModel::polynomial(control.to_vec()), MeanModel::polynomial(experimental.to_vec())],
            kernel: KernelKind::Periodic,
            theta: KernelParams::new(1.0, 3.5, 2.0),
            a_h: 0.0,
            horizon_weeks: DEFAULT_HORIZON_WEEKS,
            fit_mean: MeanFamily::Polynomial,
            fit_kernel: KernelKind::Periodic,
        })
    }
}

/// Simulated latent paths alongside the thresholded dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct Cohort {
    pub data: TrialDataset,
    /// Latent values per patient, in dataset order.
    pub latents: Vec<Vec<f64>>,
}

/// Draws `n_per_arm` latent paths per arm over the common `weeks` grid.
pub(crate) fn draw_paths<R: Rng + ?Sized>(
    truth: &ScenarioTruth,
    arm: Arm,
    n: usize,
    weeks: &[u32],
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let times = weeks_to_times(weeks, DEFAULT_TIME_SCALE);
    let cov = build_cov(&times, truth.kernel, &truth.theta)?;
    let l: DMatrix<f64> = cov.lower();
    let mean = truth
        .arm_mean(arm)
        .ok_or_else(|| LgpError::InvalidArgument(format!("scenario has no arm {}", arm.label())))?;
    let mu = DVector::from_iterator(times.len(), times.iter().map(|&t| mean.eval(t)));
    Ok((0..n)
        .map(|_| {
            let z = DVector::from_iterator(times.len(), (0..times.len()).map(|_| StandardNormal.sample(rng)));
            (&mu + &l * z).iter().copied().collect()
        })
        .collect())
}

fn check_weeks(weeks: &[u32]) -> Result<()> {
    if weeks.is_empty() || weeks[0] == 0 || weeks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LgpError::InvalidArgument(format!(
            "weeks must be non-empty, positive and strictly increasing, got {weeks:?}"
        )));
    }
    Ok(())
}

/// Simulates `n_per_arm` patients in every arm of `truth`, all observed at
/// `weeks`. Patient ids are `p1, p2, …` within each arm.
pub fn generate_cohort<R: Rng + ?Sized>(
    truth: &ScenarioTruth,
    n_per_arm: usize,
    weeks: &[u32],
    rng: &mut R,
) -> Result<Cohort> {
    truth.validate()?;
    check_weeks(weeks)?;
    let mut patients = Vec::new();
    let mut latents = Vec::new();
    for arm in Arm::BOTH.into_iter().take(truth.arms.len()) {
        let paths = draw_paths(truth, arm, n_per_arm, weeks, rng)?;
        for (j, a) in paths.into_iter().enumerate() {
            let e = a.iter().map(|&v| v > truth.a_h).collect();
            patients.push(PatientSeries::new(arm, format!("p{}", j + 1), weeks.to_vec(), e));
            latents.push(a);
        }
    }
    let horizon = truth.horizon_weeks.max(*weeks.last().unwrap_or(&0));
    Ok(Cohort {
        data: TrialDataset::new(patients, horizon)?,
        latents,
    })
}

pub fn generate_outcomes<R: Rng + ?Sized>(
    truth: &ScenarioTruth,
    n_per_arm: usize,
    weeks: &[u32],
    rng: &mut R,
) -> Result<TrialDataset> {
    Ok(generate_cohort(truth, n_per_arm, weeks, rng)?.data)
}
