//! Posterior-predictive response probabilities, the superiority probability
//! η and the three-way monitoring rule, and posterior summaries.

use std::collections::HashMap;
use std::f64::consts::SQRT_2;
use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::data::{weeks_to_times, Arm, TrialDataset};
use crate::error::{LgpError, Result};
use crate::gp::{cov_values, cross_cov, CovMatrix};
use crate::model::MeanModel;
use crate::samplers::PosteriorDraws;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastRequest {
    pub arm: Arm,
    pub patient_id: String,
    /// Weeks after the patient's last observation, strictly increasing.
    pub future_weeks: Vec<u32>,
}

/// `P(N(mean, var) > a_h)`
fn exceed_prob(a_h: f64, mean: f64, var: f64) -> f64 {
    0.5 * erfc((a_h - mean) / (var.sqrt() * SQRT_2))
}

/// Conditional moments of the latent process at future weeks given a draw's
/// latent values: `mean = μ_new + B (a − μ_obs)` and diagonal variances.
struct Predictor {
    gain: DMatrix<f64>,
    var: Vec<f64>,
}

impl Predictor {
    fn new(obs: &[f64], new: &[f64], draws: &PosteriorDraws, b: usize) -> Result<Self> {
        let rec = &draws.records[b];
        let c_oo = CovMatrix::new(cov_values(obs, draws.kind, &rec.kernel))?;
        let c_on = cross_cov(obs, new, draws.kind, &rec.kernel);
        let gain = c_oo.chol.solve(&c_on).transpose();
        let c_nn = cov_values(new, draws.kind, &rec.kernel);
        let var = (0..new.len())
            .map(|s| (c_nn[(s, s)] - gain.row(s).dot(&c_on.column(s).transpose())).max(0.0))
            .collect();
        Ok(Predictor { gain, var })
    }

    fn probs(&self, latent: &[f64], mean: &MeanModel, obs: &[f64], new: &[f64], a_h: f64) -> Vec<f64> {
        let resid = DVector::from_iterator(obs.len(), obs.iter().zip(latent).map(|(&t, a)| a - mean.eval(t)));
        let shift = &self.gain * resid;
        new.iter()
            .zip(shift.iter())
            .zip(&self.var)
            .map(|((&t, s), v)| exceed_prob(a_h, mean.eval(t) + s, *v))
            .collect()
    }
}

fn check_request(req: &ForecastRequest, data: &TrialDataset) -> Result<usize> {
    let i = data.find(req.arm, &req.patient_id).ok_or_else(|| LgpError::UnknownPatient {
        arm: req.arm.label(),
        patient_id: req.patient_id.clone(),
    })?;
    let last = data.patients[i].last_week().unwrap_or(0);
    if req.future_weeks.is_empty() {
        return Err(LgpError::InvalidArgument("no future weeks requested".into()));
    }
    if req.future_weeks[0] <= last || req.future_weeks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LgpError::InvalidArgument(format!(
            "future weeks {:?} must be increasing and after week {last} for patient {}",
            req.future_weeks, req.patient_id
        )));
    }
    Ok(i)
}

/// Monte Carlo estimate of the response probability at each future week,
/// averaged over the retained draws.
pub fn forecast_q(draws: &PosteriorDraws, req: &ForecastRequest, data: &TrialDataset) -> Result<Vec<f64>> {
    forecast_q_at(draws, req, data, draws.a_h)
}

/// [`forecast_q`] with an explicit threshold.
pub fn forecast_q_at(draws: &PosteriorDraws, req: &ForecastRequest, data: &TrialDataset, a_h: f64) -> Result<Vec<f64>> {
    Ok(forecast_batch(draws, std::slice::from_ref(req), data, a_h)?.remove(0))
}

/// Forecasts for many patients; predictors are shared by patients with the
/// same observed and requested weeks.
pub fn forecast_batch(draws: &PosteriorDraws, reqs: &[ForecastRequest], data: &TrialDataset, a_h: f64) -> Result<Vec<Vec<f64>>> {
    if draws.is_empty() {
        return Err(LgpError::InvalidArgument("no posterior draws".into()));
    }
    let idx: Vec<usize> = reqs.iter().map(|r| check_request(r, data)).collect::<Result<_>>()?;
    if draws.records.iter().any(|r| r.latents.len() != data.patients.len()) {
        return Err(LgpError::InvalidArgument("draws do not carry latent values for this dataset".into()));
    }
    let mut keys: HashMap<(&[u32], &[u32]), usize> = HashMap::new();
    let mut shapes: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let shape_of: Vec<usize> = reqs
        .iter()
        .zip(&idx)
        .map(|(r, &i)| {
            let key = (data.patients[i].weeks.as_slice(), r.future_weeks.as_slice());
            *keys.entry(key).or_insert_with(|| {
                shapes.push((
                    weeks_to_times(key.0, data.time_scale),
                    weeks_to_times(key.1, data.time_scale),
                ));
                shapes.len() - 1
            })
        })
        .collect();

    let mut out: Vec<Vec<f64>> = reqs.iter().map(|r| vec![0.0; r.future_weeks.len()]).collect();
    for b in 0..draws.len() {
        let preds: Vec<Predictor> = shapes
            .iter()
            .map(|(obs, new)| Predictor::new(obs, new, draws, b))
            .collect::<Result<_>>()?;
        let rec = &draws.records[b];
        for (slot, ((r, &i), &s)) in reqs.iter().zip(&idx).zip(&shape_of).enumerate() {
            let (obs, new) = &shapes[s];
            let p = preds[s].probs(&rec.latents[i], &rec.means[r.arm.index()], obs, new, a_h);
            for (acc, v) in out[slot].iter_mut().zip(&p) {
                *acc += v;
            }
        }
    }
    let n = draws.len() as f64;
    for row in &mut out {
        row.iter_mut().for_each(|v| *v /= n);
    }
    Ok(out)
}

fn default_delta() -> f64 {
    2.0
}
fn default_xi_upper() -> f64 {
    0.95
}
fn default_xi_lower() -> f64 {
    0.05
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonitorConfig {
    /// Superiority margin in weeks.
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_xi_upper")]
    pub xi_upper: f64,
    #[serde(default = "default_xi_lower")]
    pub xi_lower: f64,
}

impl Default for MonitorConfig {
    fn default() -> Self {
        MonitorConfig {
            delta: default_delta(),
            xi_upper: default_xi_upper(),
            xi_lower: default_xi_lower(),
        }
    }
}

impl MonitorConfig {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |x: f64| (0.0..=1.0).contains(&x);
        if !(in_unit(self.xi_lower) && in_unit(self.xi_upper) && self.xi_lower <= self.xi_upper) {
            return Err(LgpError::Validation(format!(
                "cutoffs must satisfy 0 ≤ xi_lower ≤ xi_upper ≤ 1, got {} and {}",
                self.xi_lower, self.xi_upper
            )));
        }
        if !(self.delta >= 0.0) || !self.delta.is_finite() {
            return Err(LgpError::Validation(format!("margin must be non-negative, got {}", self.delta)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StopSuperior,
    Continue,
    StopFutile,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::StopSuperior => "stop_superior",
            Verdict::Continue => "continue",
            Verdict::StopFutile => "stop_futile",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonitorDecision {
    pub eta_hat: f64,
    pub verdict: Verdict,
}

/// Fraction of `(T₁, T₂)` pairs with `T₂ > T₁ + δ`.
pub fn eta_from_ddr(pairs: &[[f64; 2]], delta: f64) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    pairs.iter().filter(|p| p[1] > p[0] + delta).count() as f64 / pairs.len() as f64
}

/// Posterior probability that the experimental arm's remission duration
/// exceeds the control arm's by more than the margin.
pub fn estimate_eta(draws: &PosteriorDraws, cfg: &MonitorConfig) -> Result<f64> {
    if draws.is_empty() {
        return Err(LgpError::InvalidArgument("no posterior draws".into()));
    }
    Ok(eta_from_ddr(&draws.ddr_pairs(), cfg.delta))
}

/// Stops for superiority when `η̂ ≥ ξ_U`, for futility when `η̂ ≤ ξ_L`.
/// A cutoff of exactly 1 (upper) or 0 (lower) switches that rule off, so
/// `ξ_L = 0, ξ_U = 1` never stops.
pub fn monitor_decision(eta_hat: f64, cfg: &MonitorConfig) -> MonitorDecision {
    let verdict = if cfg.xi_upper < 1.0 && eta_hat >= cfg.xi_upper {
        Verdict::StopSuperior
    } else if cfg.xi_lower > 0.0 && eta_hat <= cfg.xi_lower {
        Verdict::StopFutile
    } else {
        Verdict::Continue
    };
    MonitorDecision { eta_hat, verdict }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParamSummary {
    /// `None` for parameters shared by both arms.
    pub arm: Option<Arm>,
    pub param: String,
    pub mean: f64,
    pub sd: f64,
    pub lo95: f64,
    pub hi95: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PosteriorSummary {
    pub params: Vec<ParamSummary>,
    /// Posterior proportion of each degree per arm; empty for arms without
    /// data or with a trigonometric mean.
    pub degree_props: [Vec<f64>; 2],
    /// Posterior mean remission duration per arm, in weeks.
    pub ddr_mean: [Option<f64>; 2],
}

impl PosteriorSummary {
    pub fn get(&self, arm: Option<Arm>, param: &str) -> Option<&ParamSummary> {
        self.params.iter().find(|p| p.arm == arm && p.param == param)
    }

    pub fn modal_degree(&self, arm: Arm) -> Option<usize> {
        let props = &self.degree_props[arm.index()];
        (0..props.len()).max_by(|a, b| props[*a].total_cmp(&props[*b]))
    }
}

/// Type-7 sample quantile of sorted data.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn summarize(arm: Option<Arm>, param: impl Into<String>, x: &[f64]) -> ParamSummary {
    let n = x.len() as f64;
    let mean = x.iter().sum::<f64>() / n;
    let var = if x.len() > 1 {
        x.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    let mut s = x.to_vec();
    s.sort_by(f64::total_cmp);
    ParamSummary {
        arm,
        param: param.into(),
        mean,
        sd: var.sqrt(),
        lo95: quantile(&s, 0.025),
        hi95: quantile(&s, 0.975),
    }
}

pub fn posterior_summary(draws: &PosteriorDraws, max_degree: usize) -> Result<PosteriorSummary> {
    if draws.is_empty() {
        return Err(LgpError::InvalidArgument("no posterior draws".into()));
    }
    let mut params = Vec::new();
    for (i, name) in draws.kind.param_names().iter().enumerate() {
        let x: Vec<f64> = draws.records.iter().map(|r| r.kernel.position(draws.kind)[i]).collect();
        params.push(summarize(None, *name, &x));
    }
    let ddr = draws.ddr_pairs();
    let mut degree_props = [Vec::new(), Vec::new()];
    let mut ddr_mean = [None, None];
    for arm in Arm::BOTH {
        let k = arm.index();
        if !draws.arms_present[k] {
            continue;
        }
        let means: Vec<&MeanModel> = draws.records.iter().map(|r| &r.means[k]).collect();
        if means.iter().all(|m| m.degree().is_some()) {
            let degrees: Vec<usize> = means.iter().filter_map(|m| m.degree()).collect();
            let top = max_degree.max(degrees.iter().copied().max().unwrap_or(0));
            let mut props = vec![0.0; top + 1];
            for d in &degrees {
                props[*d] += 1.0 / degrees.len() as f64;
            }
            let dm: Vec<f64> = degrees.iter().map(|d| *d as f64).collect();
            params.push(summarize(Some(arm), "m", &dm));
            for (d, _) in props.iter().enumerate() {
                let ind: Vec<f64> = degrees.iter().map(|x| f64::from(u8::from(*x == d))).collect();
                params.push(summarize(Some(arm), format!("m={d}"), &ind));
            }
            for d in 0..=top {
                let coef: Vec<f64> = means
                    .iter()
                    .map(|m| m.as_polynomial().and_then(|p| p.beta.get(d).copied()).unwrap_or(0.0))
                    .collect();
                params.push(summarize(Some(arm), format!("beta_{d}"), &coef));
            }
            degree_props[k] = props;
        } else {
            let pick = |f: fn(f64, f64) -> f64| -> Vec<f64> {
                means
                    .iter()
                    .map(|m| match m {
                        MeanModel::Trigonometric { alpha, freq } => f(*alpha, *freq),
                        MeanModel::Polynomial(_) => f64::NAN,
                    })
                    .collect()
            };
            params.push(summarize(Some(arm), "alpha", &pick(|a, _| a)));
            params.push(summarize(Some(arm), "freq", &pick(|_, f| f)));
        }
        let t: Vec<f64> = ddr.iter().map(|p| p[k]).collect();
        let s = summarize(Some(arm), "ddr", &t);
        ddr_mean[k] = Some(s.mean);
        params.push(s);
    }
    Ok(PosteriorSummary { params, degree_props, ddr_mean })
}

/// `arm,param,mean,sd,lo95,hi95`; shared parameters carry the arm label `all`.
pub fn write_summary_csv<W: Write>(summary: &PosteriorSummary, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["arm", "param", "mean", "sd", "lo95", "hi95"])?;
    for p in &summary.params {
        let arm = p.arm.map_or("all".to_string(), |a| a.label().to_string());
        w.write_record([
            arm,
            p.param.clone(),
            p.mean.to_string(),
            p.sd.to_string(),
            p.lo95.to_string(),
            p.hi95.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `patient_id,week,q_hat`
pub fn write_forecast_csv<W: Write>(reqs: &[ForecastRequest], q: &[Vec<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["patient_id", "week", "q_hat"])?;
    for (r, row) in reqs.iter().zip(q) {
        for (week, v) in r.future_weeks.iter().zip(row) {
            w.write_record([r.patient_id.clone(), week.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}
