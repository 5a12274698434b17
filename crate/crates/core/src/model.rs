//! Mean functions, priors, the latent-data joint density, the Hamiltonian
//! energy over kernel hyperparameters, and the remission-duration statistic.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::data::{Arm, TrialDataset, DEFAULT_TIME_SCALE};
use crate::error::{LgpError, Result};
use crate::gp::build_cov;
use crate::kernel::{KernelKind, KernelParams};
use crate::roots::{horner, positive_measure};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Polynomial mean `Σ β_d t^d` of degree `m` for one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawArmMean")]
pub struct ArmMeanModel {
    pub m: usize,
    pub beta: Vec<f64>,
}

/// Serialized form; `m` may be left out and is then implied by `beta`.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArmMean {
    m: Option<usize>,
    beta: Vec<f64>,
}

impl TryFrom<RawArmMean> for ArmMeanModel {
    type Error = String;

    fn try_from(raw: RawArmMean) -> std::result::Result<Self, String> {
        if raw.beta.is_empty() {
            return Err("beta needs at least one coefficient".into());
        }
        let implied = raw.beta.len() - 1;
        match raw.m {
            Some(m) if m != implied => Err(format!("m = {m} but beta has {} coefficients", raw.beta.len())),
            _ => Ok(ArmMeanModel { m: implied, beta: raw.beta }),
        }
    }
}

impl ArmMeanModel {
    /// Degree is implied by the number of coefficients.
    pub fn new(beta: Vec<f64>) -> Self {
        assert!(!beta.is_empty(), "a polynomial needs at least one coefficient");
        ArmMeanModel { m: beta.len() - 1, beta }
    }

    pub fn validate(&self, max_degree: usize) -> Result<()> {
        if self.beta.len() != self.m + 1 {
            return Err(LgpError::Validation(format!(
                "degree {} needs {} coefficients, got {}",
                self.m,
                self.m + 1,
                self.beta.len()
            )));
        }
        if self.m > max_degree {
            return Err(LgpError::Validation(format!(
                "degree {} exceeds maximum {max_degree}",
                self.m
            )));
        }
        Ok(())
    }

    pub fn eval(&self, t: f64) -> f64 {
        horner(&self.beta, t)
    }
}

/// Evaluates the polynomial mean at model time `t`.
pub fn poly_mean(model: &ArmMeanModel, t: f64) -> f64 {
    model.eval(t)
}

/// Mean function of one arm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum MeanModel {
    Polynomial(ArmMeanModel),
    /// `α + sin(freq·π·t)`
    Trigonometric { alpha: f64, freq: f64 },
}

impl MeanModel {
    pub fn polynomial(beta: Vec<f64>) -> Self {
        MeanModel::Polynomial(ArmMeanModel::new(beta))
    }

    pub fn eval(&self, t: f64) -> f64 {
        match self {
            MeanModel::Polynomial(p) => p.eval(t),
            MeanModel::Trigonometric { alpha, freq } => alpha + (freq * PI * t).sin(),
        }
    }

    pub fn degree(&self) -> Option<usize> {
        match self {
            MeanModel::Polynomial(p) => Some(p.m),
            MeanModel::Trigonometric { .. } => None,
        }
    }

    pub fn as_polynomial(&self) -> Option<&ArmMeanModel> {
        match self {
            MeanModel::Polynomial(p) => Some(p),
            MeanModel::Trigonometric { .. } => None,
        }
    }

    /// Remission duration in weeks over `[0, horizon_t]`.
    pub fn ddr(&self, a_h: f64, horizon_t: f64, time_scale: f64) -> f64 {
        match self {
            MeanModel::Polynomial(p) => ddr_with_scale(p, a_h, horizon_t, time_scale),
            MeanModel::Trigonometric { alpha, freq } => {
                time_scale * trig_measure(a_h - alpha, *freq, horizon_t)
            }
        }
    }

    pub fn validate(&self, max_degree: usize) -> Result<()> {
        match self {
            MeanModel::Polynomial(p) => p.validate(max_degree),
            MeanModel::Trigonometric { alpha, freq } => {
                if alpha.is_finite() && freq.is_finite() {
                    Ok(())
                } else {
                    Err(LgpError::Validation("non-finite trigonometric mean".into()))
                }
            }
        }
    }
}

/// Remission duration in weeks: ten times the measure of
/// `{t ∈ [0, horizon_t] : μ(t) > a_h}`.
pub fn ddr(model: &ArmMeanModel, a_h: f64, horizon_t: f64) -> f64 {
    ddr_with_scale(model, a_h, horizon_t, DEFAULT_TIME_SCALE)
}

pub fn ddr_with_scale(model: &ArmMeanModel, a_h: f64, horizon_t: f64, time_scale: f64) -> f64 {
    let mut c = model.beta.clone();
    c[0] -= a_h;
    time_scale * positive_measure(&c, horizon_t)
}

/// Measure of `{t ∈ [0, h] : sin(freq·π·t) > c}`.
fn trig_measure(c: f64, freq: f64, h: f64) -> f64 {
    if h <= 0.0 {
        return 0.0;
    }
    if freq == 0.0 {
        return if 0.0 > c { h } else { 0.0 };
    }
    let w = freq.abs() * PI;
    let y = w * h;
    let m = if freq > 0.0 {
        sin_above(c, y)
    } else {
        // sin(−x) > c  ⇔  sin(x) < −c
        y - sin_above(-c, y)
    };
    m / w
}

/// Measure of `{y ∈ [0, upper] : sin y > c}`.
fn sin_above(c: f64, upper: f64) -> f64 {
    if c >= 1.0 {
        return 0.0;
    }
    if c <= -1.0 {
        return upper;
    }
    let lo = c.asin();
    let hi = PI - lo;
    let period = 2.0 * PI;
    let last = (upper / period).ceil() as i64;
    (-1..=last)
        .map(|k| {
            let shift = k as f64 * period;
            let a = (lo + shift).max(0.0);
            let b = (hi + shift).min(upper);
            (b - a).max(0.0)
        })
        .sum()
}

/// `K × (m+1)` Vandermonde matrix with rows `(1, t, …, t^m)`.
pub fn design_matrix(times: &[f64], m: usize) -> DMatrix<f64> {
    DMatrix::from_fn(times.len(), m + 1, |k, d| times[k].powi(d as i32))
}

fn default_max_degree() -> usize {
    5
}
fn default_sigma0_sq() -> f64 {
    100.0
}
fn default_theta_var() -> [f64; 3] {
    [100.0; 3]
}

/// Prior hyperparameters. Kernel prior vectors are ordered `(θ₁, r, θ₂)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PriorConfig {
    #[serde(default = "default_max_degree")]
    pub max_degree: usize,
    /// Common prior mean of every coefficient.
    #[serde(default)]
    pub mu0: f64,
    #[serde(default = "default_sigma0_sq")]
    pub sigma0_sq: f64,
    #[serde(default)]
    pub theta_mean: [f64; 3],
    #[serde(default = "default_theta_var")]
    pub theta_var: [f64; 3],
    #[serde(default)]
    pub a_h: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        PriorConfig {
            max_degree: default_max_degree(),
            mu0: 0.0,
            sigma0_sq: default_sigma0_sq(),
            theta_mean: [0.0; 3],
            theta_var: default_theta_var(),
            a_h: 0.0,
        }
    }
}

impl PriorConfig {
    pub fn validate(&self) -> Result<()> {
        let vars_ok = self.sigma0_sq > 0.0
            && self.sigma0_sq.is_finite()
            && self.theta_var.iter().all(|v| *v > 0.0 && v.is_finite());
        if !vars_ok {
            return Err(LgpError::Validation("prior variances must be positive and finite".into()));
        }
        if !self.mu0.is_finite() || !self.a_h.is_finite() || self.theta_mean.iter().any(|m| !m.is_finite()) {
            return Err(LgpError::Validation("prior means and threshold must be finite".into()));
        }
        Ok(())
    }

    /// `log P(m)` under the uniform degree prior.
    pub fn log_prior_degree(&self) -> f64 {
        -((self.max_degree + 1) as f64).ln()
    }

    /// Independent `N(μ₀, σ₀²)` log-density summed over coefficients.
    pub fn log_prior_coefs(&self, coefs: &[f64]) -> f64 {
        coefs
            .iter()
            .map(|b| normal_logpdf(*b, self.mu0, self.sigma0_sq))
            .sum()
    }

    pub fn log_prior_mean(&self, mean: &MeanModel) -> f64 {
        match mean {
            MeanModel::Polynomial(p) => self.log_prior_degree() + self.log_prior_coefs(&p.beta),
            MeanModel::Trigonometric { alpha, freq } => self.log_prior_coefs(&[*alpha, *freq]),
        }
    }

    pub fn log_prior_theta(&self, p: &KernelParams, kind: KernelKind) -> f64 {
        p.position(kind)
            .iter()
            .enumerate()
            .map(|(i, v)| normal_logpdf(*v, self.theta_mean[i], self.theta_var[i]))
            .sum()
    }
}

pub(crate) fn normal_logpdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * ((x - mean).powi(2) / var + var.ln() + LN_2PI)
}

/// One full configuration of the augmented model.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentState {
    /// Latent values per patient, in dataset order.
    pub a: Vec<Vec<f64>>,
    /// Mean models indexed by [`Arm::index`].
    pub means: [MeanModel; 2],
    pub kernel: KernelParams,
    pub kind: KernelKind,
}

impl LatentState {
    pub fn mean(&self, arm: Arm) -> &MeanModel {
        &self.means[arm.index()]
    }

    /// True when every latent value sits on the side of `a_h` its outcome demands.
    pub fn satisfies_constraints(&self, data: &TrialDataset, a_h: f64) -> bool {
        self.a.len() == data.patients.len()
            && data
                .patients
                .iter()
                .zip(&self.a)
                .all(|(p, a)| constraint_holds(a, &p.outcomes, a_h))
    }

    fn residual(&self, data: &TrialDataset, patient: usize) -> (Vec<f64>, DVector<f64>) {
        let times = data.times(patient);
        let mean = self.mean(data.patients[patient].arm);
        let r = DVector::from_iterator(
            times.len(),
            times.iter().zip(&self.a[patient]).map(|(&t, &a)| a - mean.eval(t)),
        );
        (times, r)
    }
}

pub(crate) fn constraint_holds(a: &[f64], outcomes: &[bool], a_h: f64) -> bool {
    a.len() == outcomes.len() && a.iter().zip(outcomes).all(|(&x, &e)| (x > a_h) == e)
}

/// Log of the unnormalized joint density: Gaussian latent terms for every
/// patient plus the mean and kernel priors. Returns `−∞` when a latent value
/// contradicts its observed outcome.
pub fn log_joint_latent(state: &LatentState, data: &TrialDataset, prior: &PriorConfig) -> Result<f64> {
    if !state.satisfies_constraints(data, prior.a_h) {
        return Ok(f64::NEG_INFINITY);
    }
    let mut total = 0.0;
    for i in 0..data.patients.len() {
        let (times, r) = state.residual(data, i);
        let cov = build_cov(&times, state.kind, &state.kernel)?;
        total += cov.log_density(&r, &DVector::zeros(r.len()));
    }
    total += state.means.iter().map(|m| prior.log_prior_mean(m)).sum::<f64>();
    total += prior.log_prior_theta(&state.kernel, state.kind);
    Ok(total)
}

/// Hamiltonian potential over kernel hyperparameters:
/// `½ Σ {rᵀC⁻¹r + log|C|} − log P(Θ)` with residuals `r = a − μ`.
pub fn energy(theta: &KernelParams, state: &LatentState, data: &TrialDataset, prior: &PriorConfig) -> Result<f64> {
    let mut e = 0.0;
    for i in 0..data.patients.len() {
        let (times, r) = state.residual(data, i);
        let cov = build_cov(&times, state.kind, theta)?;
        e += 0.5 * (cov.quad_form(&r) + cov.logdet);
    }
    Ok(e - prior.log_prior_theta(theta, state.kind))
}

/// Gradient of [`energy`] in the order `(θ₁, r, θ₂)`, truncated to the
/// parameters the kernel uses.
pub fn energy_grad(theta: &KernelParams, state: &LatentState, data: &TrialDataset, prior: &PriorConfig) -> Result<Vec<f64>> {
    let n = state.kind.n_params();
    let mut g = vec![0.0; n];
    for i in 0..data.patients.len() {
        let (times, r) = state.residual(data, i);
        let cov = build_cov(&times, state.kind, theta)?;
        let inv = cov.inverse();
        let alpha = cov.solve(&r);
        let k = times.len();
        for u in 0..k {
            for v in 0..k {
                let w = inv[(u, v)] - alpha[u] * alpha[v];
                let d = state.kind.gradient(times[u] - times[v], theta);
                for p in 0..n {
                    g[p] += 0.5 * w * d[p];
                }
            }
        }
    }
    for (p, v) in theta.position(state.kind).iter().enumerate() {
        g[p] += (v - prior.theta_mean[p]) / prior.theta_var[p];
    }
    Ok(g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PatientSeries;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn design_rows() {
        let x = design_matrix(&[2.0], 2);
        assert_eq!(x.as_slice(), &[1.0, 2.0, 4.0]);
        let x = design_matrix(&[0.3, 0.9, 1.4], 0);
        assert!(x.iter().all(|v| *v == 1.0));
        assert_eq!(x.ncols(), 1);
        let x = design_matrix(&[0.1, 0.2], 1);
        assert_eq!(x, DMatrix::from_row_slice(2, 2, &[1.0, 0.1, 1.0, 0.2]));
    }

    #[test]
    fn sensitivity_means() {
        assert_eq!(poly_mean(&ArmMeanModel::new(vec![-0.8]), 1.7), -0.8);
        assert_eq!(poly_mean(&ArmMeanModel::new(vec![-0.8, 0.4]), 2.0), 0.0);
        assert_eq!(poly_mean(&ArmMeanModel::new(vec![-1.0, 3.5, -1.0]), 0.0), -1.0);
    }

    fn ddr_of(beta: &[f64]) -> f64 {
        ddr(&ArmMeanModel::new(beta.to_vec()), 0.0, 3.5)
    }

    fn ddr_grid(beta: &[f64]) -> f64 {
        let n = 35_000;
        let step = 3.5 / n as f64;
        (0..n)
            .filter(|i| horner(beta, (*i as f64 + 0.5) * step) > 0.0)
            .count() as f64
            * step
            * 10.0
    }

    const REFERENCE_DDR: [(&[f64], f64); 12] = [
        (&[-2.0, 3.5, -1.0], 20.616),
        (&[-1.4, 7.5, -5.3, 1.0], 27.616),
        (&[-1.5, 7.5, -5.3, 1.0], 25.939),
        (&[-1.0, 3.5, -1.0], 28.723),
        (&[-2.4, 7.5, -5.3, 1.0], 15.414),
        (&[-2.4, 3.5, -1.0], 16.279),
        (&[-2.0, 7.5, -5.3, 1.0], 19.736),
        (&[-1.0, 3.5, -1.0], 28.723),
        (&[-1.28, 3.5, -1.0], 26.7),
        (&[-1.2, 3.6, -1.0], 28.6),
        (&[-0.39, 0.3], 22.0),
        (&[-1.1, 1.0], 24.0),
    ];

    #[test]
    fn ddr_scenario_values() {
        for (beta, want) in REFERENCE_DDR {
            let got = ddr_of(beta);
            assert!((got - want).abs() < 0.05, "{beta:?}: {got} vs {want}");
            assert!((got - ddr_grid(beta)).abs() < 0.02);
        }
        assert_eq!(ddr_of(&[-0.8]), 0.0);
        assert!((ddr_of(&[-0.8, 0.4]) - 15.0).abs() < 1e-9);
    }

    #[test]
    fn ddr_threshold_identity() {
        let m = ArmMeanModel::new(vec![0.5]);
        assert_eq!(ddr(&m, 0.5, 3.5), 0.0);
        assert!((ddr(&m, 0.4, 3.5) - 35.0).abs() < 1e-12);
    }

    #[test]
    fn ddr_ignores_far_roots() {
        // (t − 2)(t − 10)(t + 7): only the root at 2 lies in the window
        let near = ArmMeanModel::new(vec![-0.8, 0.4]);
        let c = [140.0, -64.0, -5.0, 1.0].map(|x| -x * 0.01);
        let far = ArmMeanModel::new(c.to_vec());
        assert!((ddr(&near, 0.0, 3.5) - ddr(&far, 0.0, 3.5)).abs() < 1e-9);
    }

    #[test]
    fn trig_ddr() {
        let s4 = MeanModel::Trigonometric { alpha: -0.8, freq: 1.5 };
        assert!((s4.ddr(0.0, 3.5, 10.0) - 8.194).abs() < 0.001);
        let s5 = MeanModel::Trigonometric { alpha: 0.0, freq: 1.0 };
        assert!((s5.ddr(0.0, 3.5, 10.0) - 20.0).abs() < 1e-9);
        let neg = MeanModel::Trigonometric { alpha: 0.0, freq: -1.0 };
        assert!((neg.ddr(0.0, 3.5, 10.0) - 15.0).abs() < 1e-9);
    }

    proptest! {
        #[test]
        fn trig_ddr_matches_grid(alpha in -1.5..1.5f64, freq in -3.0..3.0f64, a_h in -0.5..0.5f64) {
            let m = MeanModel::Trigonometric { alpha, freq };
            let n = 35_000;
            let step = 3.5 / n as f64;
            let grid = (0..n).filter(|i| m.eval((*i as f64 + 0.5) * step) > a_h).count() as f64 * step * 10.0;
            prop_assert!((m.ddr(a_h, 3.5, 10.0) - grid).abs() < 0.01);
        }
    }

    fn one_point_data(e: bool) -> TrialDataset {
        TrialDataset::new(vec![PatientSeries::new(Arm::Control, "p", vec![5], vec![e])], 35).unwrap()
    }

    fn state_for(a: Vec<Vec<f64>>, theta: KernelParams) -> LatentState {
        LatentState {
            a,
            means: [MeanModel::polynomial(vec![0.0]), MeanModel::polynomial(vec![0.0])],
            kernel: theta,
            kind: KernelKind::Periodic,
        }
    }

    #[test]
    fn log_joint_scalar() {
        let data = one_point_data(true);
        let theta = KernelParams::new(1.3, 3.5, 2.0);
        let x = 0.7;
        let state = state_for(vec![vec![x]], theta);
        let prior = PriorConfig::default();
        let v = 1.3f64 * 1.3 + 0.01;
        let lik = -0.5 * (x * x / v + v.ln() + LN_2PI);
        let beta_prior = 2.0 * (-(6.0f64).ln() + normal_logpdf(0.0, 0.0, 100.0));
        let theta_prior = normal_logpdf(1.3, 0.0, 100.0) + normal_logpdf(2.0, 0.0, 100.0) + normal_logpdf(3.5, 0.0, 100.0);
        let got = log_joint_latent(&state, &data, &prior).unwrap();
        assert!((got - (lik + beta_prior + theta_prior)).abs() < 1e-12);
    }

    #[test]
    fn log_joint_constraint_violation() {
        let data = one_point_data(true);
        let state = state_for(vec![vec![-0.1]], KernelParams::default());
        assert_eq!(log_joint_latent(&state, &data, &PriorConfig::default()).unwrap(), f64::NEG_INFINITY);
    }

    #[test]
    fn log_joint_sigma0_change() {
        let data = one_point_data(true);
        let mut state = state_for(vec![vec![0.4]], KernelParams::default());
        state.means[0] = MeanModel::polynomial(vec![0.2, -0.3]);
        let p1 = PriorConfig::default();
        let p2 = PriorConfig { sigma0_sq: 200.0, ..PriorConfig::default() };
        let d = log_joint_latent(&state, &data, &p2).unwrap() - log_joint_latent(&state, &data, &p1).unwrap();
        let coefs = [0.2, -0.3, 0.0];
        let want: f64 = coefs.iter().map(|b| normal_logpdf(*b, 0.0, 200.0) - normal_logpdf(*b, 0.0, 100.0)).sum();
        assert!((d - want).abs() < 1e-12);
    }

    #[test]
    fn log_joint_additive_over_patients() {
        let p1 = PatientSeries::new(Arm::Control, "a", vec![1, 2, 4], vec![true, false, true]);
        let p2 = PatientSeries::new(Arm::Experimental, "b", vec![3, 5], vec![false, false]);
        let a1 = vec![0.3, -0.2, 1.1];
        let a2 = vec![-0.4, -0.9];
        let prior = PriorConfig::default();
        let theta = KernelParams::new(0.8, 3.5, 1.5);
        let mk = |ps: Vec<PatientSeries>, a: Vec<Vec<f64>>| {
            let d = TrialDataset::new(ps, 35).unwrap();
            let s = state_for(a, theta);
            log_joint_latent(&s, &d, &prior).unwrap()
        };
        let both = mk(vec![p1.clone(), p2.clone()], vec![a1.clone(), a2.clone()]);
        let only1 = mk(vec![p1], vec![a1]);
        let only2 = mk(vec![p2], vec![a2]);
        let shared = {
            let s = state_for(vec![], theta);
            s.means.iter().map(|m| prior.log_prior_mean(m)).sum::<f64>() + prior.log_prior_theta(&theta, s.kind)
        };
        assert!((both - (only1 + only2 - shared)).abs() < 1e-10);
    }

    #[test]
    fn energy_zero_residual() {
        let data = one_point_data(true);
        let theta = KernelParams::new(0.9, 3.5, 2.0);
        let state = state_for(vec![vec![0.0]], theta);
        let prior = PriorConfig::default();
        let e = energy(&theta, &state, &data, &prior).unwrap();
        let want = 0.5 * (0.81f64 + 0.01).ln() - prior.log_prior_theta(&theta, KernelKind::Periodic);
        assert!((e - want).abs() < 1e-12);
        let g = energy_grad(&theta, &state, &data, &prior).unwrap();
        assert!((g[0] - (0.9 / 0.82 + 0.9 / 100.0)).abs() < 1e-12);
    }

    #[test]
    fn energy_translation_invariant() {
        let p = PatientSeries::new(Arm::Control, "a", vec![1, 3, 6], vec![true, false, true]);
        let data = TrialDataset::new(vec![p], 35).unwrap();
        let theta = KernelParams::new(1.0, 3.5, 2.0);
        let prior = PriorConfig { a_h: -100.0, ..PriorConfig::default() };
        let mut s = state_for(vec![vec![0.3, -0.5, 0.8]], theta);
        s.means[0] = MeanModel::polynomial(vec![0.1, 0.2]);
        let e0 = energy(&theta, &s, &data, &prior).unwrap();
        s.a[0].iter_mut().for_each(|x| *x += 0.37);
        s.means[0] = MeanModel::polynomial(vec![0.47, 0.2]);
        let e1 = energy(&theta, &s, &data, &prior).unwrap();
        assert!((e0 - e1).abs() < 1e-12);
    }

    fn random_instance(seed: u64) -> (TrialDataset, LatentState, KernelParams) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut patients = Vec::new();
        let mut a = Vec::new();
        for j in 0..4 {
            let mut ws: Vec<u32> = rand::seq::index::sample(&mut rng, 35, 6).into_iter().map(|w| w as u32 + 1).collect();
            ws.sort_unstable();
            let lat: Vec<f64> = ws.iter().map(|_| StandardNormal.sample(&mut rng)).collect();
            let e = lat.iter().map(|x| *x > 0.0).collect();
            let arm = if j % 2 == 0 { Arm::Control } else { Arm::Experimental };
            patients.push(PatientSeries::new(arm, format!("p{j}"), ws, e));
            a.push(lat);
        }
        let data = TrialDataset::new(patients, 35).unwrap();
        let u = |rng: &mut ChaCha8Rng| -> f64 { rand::RngExt::random_range(rng, 0.5..2.0) };
        let theta = KernelParams::new(u(&mut rng), 2.0 + u(&mut rng), u(&mut rng));
        let state = LatentState {
            a,
            means: [MeanModel::polynomial(vec![-0.2, 0.3]), MeanModel::polynomial(vec![0.1, -0.1, 0.05])],
            kernel: theta,
            kind: KernelKind::Periodic,
        };
        (data, state, theta)
    }

    #[test]
    fn energy_grad_matches_finite_differences() {
        let prior = PriorConfig::default();
        for seed in 0..10 {
            let (data, state, theta) = random_instance(seed);
            let g = energy_grad(&theta, &state, &data, &prior).unwrap();
            let pos = theta.position(KernelKind::Periodic);
            for p in 0..3 {
                let h = 1e-5 * pos[p].abs().max(1.0);
                let mut up = pos.clone();
                up[p] += h;
                let mut dn = pos.clone();
                dn[p] -= h;
                let eu = energy(&theta.with_position(KernelKind::Periodic, &up), &state, &data, &prior).unwrap();
                let ed = energy(&theta.with_position(KernelKind::Periodic, &dn), &state, &data, &prior).unwrap();
                let fd = (eu - ed) / (2.0 * h);
                let rel = (g[p] - fd).abs() / fd.abs().max(1e-8);
                assert!(rel < 1e-5, "seed {seed} param {p}: {} vs {fd}", g[p]);
            }
        }
    }

    #[test]
    fn energy_consistent_with_joint() {
        let prior = PriorConfig::default();
        for seed in 20..25 {
            let (data, state, theta) = random_instance(seed);
            let other = KernelParams::new(theta.theta1 * 1.3, theta.theta2 - 0.4, theta.r * 0.7);
            let mut s2 = state.clone();
            s2.kernel = other;
            let dj = log_joint_latent(&s2, &data, &prior).unwrap() - log_joint_latent(&state, &data, &prior).unwrap();
            let de = energy(&other, &state, &data, &prior).unwrap() - energy(&theta, &state, &data, &prior).unwrap();
            assert!((dj + de).abs() < 1e-9, "{dj} vs {de}");
        }
    }

    #[test]
    fn prior_round_trips_json() {
        let p: PriorConfig = serde_json::from_str(r#"{"a_h": 0.5}"#).unwrap();
        assert_eq!(p.max_degree, 5);
        assert_eq!(p.sigma0_sq, 100.0);
        assert_eq!(p.a_h, 0.5);
        assert!(serde_json::from_str::<PriorConfig>(r#"{"bogus": 1}"#).is_err());
        let m = MeanModel::Trigonometric { alpha: -0.8, freq: 1.5 };
        let implied: MeanModel = serde_json::from_str(r#"{"family": "polynomial", "beta": [-1, 3.5, -1]}"#).unwrap();
        assert_eq!(implied.degree(), Some(2));
        assert!(serde_json::from_str::<MeanModel>(r#"{"family": "polynomial", "m": 1, "beta": [1, 2, 3]}"#).is_err());
        assert!(serde_json::from_str::<MeanModel>(r#"{"family": "polynomial", "beta": []}"#).is_err());
        let back: MeanModel = serde_json::from_str(&serde_json::to_string(&m).unwrap()).unwrap();
        assert_eq!(back, m);
    }
}
