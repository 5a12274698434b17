//! Effective sample sizes, autocorrelations and trace export.

use std::io::Write;

use crate::error::{LgpError, Result};
use crate::model::MeanModel;

use super::chain::PosteriorDraws;

pub const MAX_REPORTED_LAG: usize = 50;

#[derive(Debug, Clone, PartialEq)]
pub struct ParamDiagnostics {
    pub name: String,
    pub ess: f64,
    /// Autocorrelations at lags `1..=50` (fewer for short chains).
    pub autocorr: Vec<f64>,
    /// Set when the series never moves; its ESS is then the draw count.
    pub constant: bool,
}

/// Autocorrelations at lags `0..=max_lag`.
pub fn autocorrelations(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    let mean = x.iter().sum::<f64>() / n as f64;
    let d: Vec<f64> = x.iter().map(|v| v - mean).collect();
    let c0 = d.iter().map(|v| v * v).sum::<f64>();
    (0..=max_lag.min(n.saturating_sub(1)))
        .map(|k| {
            if c0 == 0.0 {
                return if k == 0 { 1.0 } else { 0.0 };
            }
            d[..n - k].iter().zip(&d[k..]).map(|(a, b)| a * b).sum::<f64>() / c0
        })
        .collect()
}

/// Effective sample size by Geyer's initial positive sequence: sums of
/// adjacent autocorrelation pairs are accumulated until one turns
/// non-positive. Returns `(ess, constant)`.
pub fn effective_sample_size(x: &[f64]) -> (f64, bool) {
    let n = x.len();
    let constant = x.windows(2).all(|w| w[0] == w[1]);
    if constant || n < 4 {
        return (n as f64, constant);
    }
    let rho = autocorrelations(x, n - 1);
    let mut tau = -1.0;
    let mut m = 0;
    while 2 * m + 1 < rho.len() {
        let pair = rho[2 * m] + rho[2 * m + 1];
        if pair <= 0.0 {
            break;
        }
        tau += 2.0 * pair;
        m += 1;
    }
    (n as f64 / tau.max(1.0 / n as f64), false)
}

/// Scalar series tracked across draws: kernel parameters, degrees,
/// remission durations and trigonometric mean parameters.
pub fn trace_series(draws: &PosteriorDraws) -> Vec<(String, Vec<f64>)> {
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    for (i, name) in draws.kind.param_names().iter().enumerate() {
        out.push((name.to_string(), draws.records.iter().map(|r| r.kernel.position(draws.kind)[i]).collect()));
    }
    let ddr = draws.ddr_pairs();
    for arm in 0..2 {
        if !draws.arms_present[arm] {
            continue;
        }
        let label = arm + 1;
        match draws.records.first().map(|r| &r.means[arm]) {
            Some(MeanModel::Polynomial(_)) => {
                out.push((format!("m_{label}"), draws.records.iter().map(|r| r.means[arm].degree().unwrap_or(0) as f64).collect()));
            }
            Some(MeanModel::Trigonometric { .. }) => {
                let pick = |f: fn(f64, f64) -> f64| {
                    draws
                        .records
                        .iter()
                        .map(|r| match r.means[arm] {
                            MeanModel::Trigonometric { alpha, freq } => f(alpha, freq),
                            MeanModel::Polynomial(_) => f64::NAN,
                        })
                        .collect::<Vec<_>>()
                };
                out.push((format!("alpha_{label}"), pick(|a, _| a)));
                out.push((format!("freq_{label}"), pick(|_, f| f)));
            }
            None => {}
        }
        out.push((format!("ddr_{label}"), ddr.iter().map(|p| p[arm]).collect()));
    }
    out
}

pub fn diagnostics(draws: &PosteriorDraws) -> Result<Vec<ParamDiagnostics>> {
    if draws.len() < 10 {
        return Err(LgpError::InvalidArgument(format!(
            "diagnostics need at least 10 draws, got {}",
            draws.len()
        )));
    }
    Ok(trace_series(draws)
        .into_iter()
        .map(|(name, x)| {
            let (ess, constant) = effective_sample_size(&x);
            let mut autocorr = autocorrelations(&x, MAX_REPORTED_LAG);
            autocorr.remove(0);
            ParamDiagnostics { name, ess, autocorr, constant }
        })
        .collect())
}

/// Writes `iter,param,value` rows, including every polynomial coefficient.
pub fn write_trace_csv<W: Write>(draws: &PosteriorDraws, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["iter", "param", "value"])?;
    let names = draws.kind.param_names();
    for r in &draws.records {
        let it = r.iteration.to_string();
        let pos = r.kernel.position(draws.kind);
        for (name, v) in names.iter().zip(&pos) {
            w.write_record([it.as_str(), name, &v.to_string()])?;
        }
        for arm in 0..2 {
            if !draws.arms_present[arm] {
                continue;
            }
            let label = arm + 1;
            match &r.means[arm] {
                MeanModel::Polynomial(p) => {
                    w.write_record([it.as_str(), &format!("m_{label}"), &p.m.to_string()])?;
                    for (d, b) in p.beta.iter().enumerate() {
                        w.write_record([it.as_str(), &format!("beta_{label}_{d}"), &b.to_string()])?;
                    }
                }
                MeanModel::Trigonometric { alpha, freq } => {
                    w.write_record([it.as_str(), &format!("alpha_{label}"), &alpha.to_string()])?;
                    w.write_record([it.as_str(), &format!("freq_{label}"), &freq.to_string()])?;
                }
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes `param,ess,constant,acf_1,…` rows.
pub fn write_diagnostics_csv<W: Write>(diags: &[ParamDiagnostics], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let lags = diags.first().map_or(0, |d| d.autocorr.len());
    let mut header = vec!["param".to_string(), "ess".to_string(), "constant".to_string()];
    header.extend((1..=lags).map(|k| format!("acf_{k}")));
    w.write_record(&header)?;
    for d in diags {
        let mut row = vec![d.name.clone(), format!("{:.3}", d.ess), d.constant.to_string()];
        row.extend(d.autocorr.iter().map(|a| format!("{a:.6}")));
        row.resize(header.len(), String::new());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
