//! Potential energies for the hyperparameter and trigonometric-mean updates.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::data::{Arm, TrialDataset};
use crate::error::Result;
use crate::gp::factor;
use crate::groups::{GroupFactor, Layout, NestFactor};
use crate::kernel::{KernelKind, KernelParams, LagTable};
use crate::model::{normal_logpdf, LatentState, MeanModel, PriorConfig};

use super::chain::McmcConfig;
use super::hmc::{hmc_step, PotentialEnergy};

enum Residuals {
    /// `Σ r rᵀ`, cheaper when the group is large relative to its length.
    Scatter(DMatrix<f64>),
    Vectors(Vec<DVector<f64>>),
}

struct GroupResiduals {
    n: f64,
    stat: Residuals,
}

/// Energy over kernel hyperparameters with latent values and means held fixed.
pub(crate) struct ThetaTarget<'a> {
    layout: &'a Layout,
    kind: KernelKind,
    base: KernelParams,
    prior_mean: [f64; 3],
    prior_var: [f64; 3],
    groups: Vec<GroupResiduals>,
}

impl<'a> ThetaTarget<'a> {
    pub fn new(layout: &'a Layout, a: &[Vec<f64>], means: &[MeanModel; 2], kind: KernelKind, base: KernelParams, prior: &PriorConfig) -> Self {
        let groups = layout
            .groups
            .iter()
            .map(|g| {
                let k = g.k();
                let mut resid = Vec::with_capacity(g.size());
                for arm in Arm::BOTH {
                    let mu: Vec<f64> = g.times.iter().map(|&t| means[arm.index()].eval(t)).collect();
                    for &j in &g.members[arm.index()] {
                        resid.push(DVector::from_iterator(k, a[j].iter().zip(&mu).map(|(x, m)| x - m)));
                    }
                }
                let n = resid.len();
                // nested layouts share one factor, which the per-patient path uses directly
                let stat = if layout.nest.is_none() && 3 * n > 2 * k {
                    let mut s = DMatrix::zeros(k, k);
                    for r in &resid {
                        s.ger(1.0, r, r, 1.0);
                    }
                    Residuals::Scatter(s)
                } else {
                    Residuals::Vectors(resid)
                };
                GroupResiduals { n: n as f64, stat }
            })
            .collect();
        ThetaTarget {
            layout,
            kind,
            base,
            prior_mean: prior.theta_mean,
            prior_var: prior.theta_var,
            groups,
        }
    }

    pub fn params(&self, q: &[f64]) -> KernelParams {
        self.base.with_position(self.kind, q)
    }
}

impl PotentialEnergy for ThetaTarget<'_> {
    fn dim(&self) -> usize {
        self.kind.n_params()
    }

    fn energy_and_grad(&self, q: &[f64], grad: &mut [f64]) -> Option<f64> {
        let p = self.params(q);
        if !p.is_valid() {
            return None;
        }
        let table = self.layout.table(self.kind, &p, true);
        let mut by_lag = vec![0.0; table.value.len()];
        let mut e = match &self.layout.nest {
            Some(reference) => self.nested_energy(reference, &table, &mut by_lag)?,
            None => self.grouped_energy(&table, &mut by_lag)?,
        };
        for (i, gi) in grad.iter_mut().enumerate() {
            let lik: f64 = by_lag.iter().zip(&table.grad).map(|(w, d)| w * d[i]).sum();
            *gi = 0.5 * lik + (q[i] - self.prior_mean[i]) / self.prior_var[i];
            e -= normal_logpdf(q[i], self.prior_mean[i], self.prior_var[i]);
        }
        e.is_finite().then_some(e)
    }
}

impl ThetaTarget<'_> {
    /// Likelihood part of the energy with one factorization per group.
    /// Accumulates `W = n C⁻¹ − C⁻¹ S C⁻¹` by lag into `by_lag`.
    fn grouped_energy(&self, table: &LagTable, by_lag: &mut [f64]) -> Option<f64> {
        let mut e = 0.0;
        for (g, res) in self.layout.groups.iter().zip(&self.groups) {
            if res.n == 0.0 {
                continue;
            }
            let (chol, logdet) = factor(&g.cov_values(&table)).ok()?;
            let inv = chol.inverse();
            let mut w = &inv * res.n;
            let quad = match &res.stat {
                Residuals::Scatter(s) => {
                    let sc = &inv * s * &inv;
                    w -= sc;
                    inv.dot(s)
                }
                Residuals::Vectors(rs) => {
                    let mut quad = 0.0;
                    for r in rs {
                        let alpha = chol.solve(r);
                        quad += r.dot(&alpha);
                        w.ger(-1.0, &alpha, &alpha, 1.0);
                    }
                    quad
                }
            };
            e += 0.5 * (quad + res.n * logdet);
            let k = g.k();
            for v in 0..k {
                for u in 0..k {
                    by_lag[g.weeks[u].abs_diff(g.weeks[v]) as usize] += w[(u, v)];
                }
            }
        }
        Some(e)
    }

    /// Same quantity for a nested layout from a single factor: group
    /// precisions are sums of outer products of rows of `L⁻¹`, and each
    /// patient needs two triangular products.
    fn nested_energy(&self, reference: &[u32], table: &LagTable, by_lag: &mut [f64]) -> Option<f64> {
        let nf = NestFactor::new(reference, table).ok()?;
        let linv = &nf.linv;
        let kmax = reference.len();
        let mut e = 0.0;

        let mut count = vec![0.0; kmax + 1];
        for (g, res) in self.layout.groups.iter().zip(&self.groups) {
            count[g.k()] += res.n;
            e += 0.5 * res.n * nf.logdet[g.k()];
        }
        // Σ_g n_g P_{K_g} = Σ_i (patients with K > i) uᵢ uᵢᵀ
        let mut above = 0.0;
        for i in (0..kmax).rev() {
            above += count[i + 1];
            if above == 0.0 {
                continue;
            }
            for a in 0..=i {
                let ua = above * linv[(i, a)];
                by_lag[0] += ua * linv[(i, a)];
                for b in a + 1..=i {
                    by_lag[(reference[b] - reference[a]) as usize] += 2.0 * ua * linv[(i, b)];
                }
            }
        }

        let mut z = vec![0.0; kmax];
        let mut alpha = vec![0.0; kmax];
        for res in &self.groups {
            let Residuals::Vectors(rs) = &res.stat else {
                unreachable!("nested layouts keep per-patient residuals")
            };
            for r in rs {
                let k = r.len();
                z[..k].fill(0.0);
                for j in 0..k {
                    let rj = r[j];
                    for i in j..k {
                        z[i] += linv[(i, j)] * rj;
                    }
                }
                e += 0.5 * z[..k].iter().map(|v| v * v).sum::<f64>();
                for j in 0..k {
                    alpha[j] = (j..k).map(|i| linv[(i, j)] * z[i]).sum();
                }
                for a in 0..k {
                    by_lag[0] -= alpha[a] * alpha[a];
                    let two_a = 2.0 * alpha[a];
                    for b in a + 1..k {
                        by_lag[(reference[b] - reference[a]) as usize] -= two_a * alpha[b];
                    }
                }
            }
        }
        Some(e)
    }
}

/// One HMC update of the kernel hyperparameters given the rest of `state`.
pub fn hmc_update_theta<R: Rng + ?Sized>(
    state: &LatentState,
    data: &TrialDataset,
    prior: &PriorConfig,
    config: &McmcConfig,
    rng: &mut R,
) -> Result<(KernelParams, bool)> {
    let layout = Layout::new(data, prior.max_degree);
    let target = ThetaTarget::new(&layout, &state.a, &state.means, state.kind, state.kernel, prior);
    let q0 = state.kernel.position(state.kind);
    let out = hmc_step(&target, &q0, config.hmc_eps, config.hmc_steps, rng);
    Ok((target.params(&out.position), out.accepted))
}

struct TrigGroup<'a> {
    times: &'a [f64],
    prec: &'a DMatrix<f64>,
    n: f64,
    prec_sum: DVector<f64>,
}

/// Energy over `(α, freq)` of one arm's mean `α + sin(freq·π·t)` with latent
/// values and hyperparameters held fixed.
pub(crate) struct TrigMeanTarget<'a> {
    groups: Vec<TrigGroup<'a>>,
    mu0: f64,
    var0: f64,
}

impl<'a> TrigMeanTarget<'a> {
    pub fn new(layout: &'a Layout, factors: &'a [GroupFactor], a: &[Vec<f64>], arm: Arm, prior: &PriorConfig) -> Self {
        let groups = layout
            .groups
            .iter()
            .zip(factors)
            .filter(|(g, _)| !g.members[arm.index()].is_empty())
            .map(|(g, f)| {
                let members = &g.members[arm.index()];
                let mut sum = DVector::zeros(g.k());
                for &j in members {
                    for (s, x) in sum.iter_mut().zip(&a[j]) {
                        *s += x;
                    }
                }
                TrigGroup {
                    times: &g.times,
                    prec: &f.prec,
                    n: members.len() as f64,
                    prec_sum: &f.prec * sum,
                }
            })
            .collect();
        TrigMeanTarget { groups, mu0: prior.mu0, var0: prior.sigma0_sq }
    }
}

impl PotentialEnergy for TrigMeanTarget<'_> {
    fn dim(&self) -> usize {
        2
    }

    fn energy_and_grad(&self, q: &[f64], grad: &mut [f64]) -> Option<f64> {
        let (alpha, freq) = (q[0], q[1]);
        let mut e = 0.0;
        grad[0] = 0.0;
        grad[1] = 0.0;
        for g in &self.groups {
            let k = g.times.len();
            let mu = DVector::from_iterator(k, g.times.iter().map(|&t| alpha + (freq * PI * t).sin()));
            let p_mu = g.prec * &mu;
            e += 0.5 * g.n * mu.dot(&p_mu) - mu.dot(&g.prec_sum);
            let y = p_mu * g.n - &g.prec_sum;
            grad[0] += y.sum();
            grad[1] += g
                .times
                .iter()
                .zip(y.iter())
                .map(|(&t, yi)| PI * t * (freq * PI * t).cos() * yi)
                .sum::<f64>();
        }
        for (i, v) in q.iter().enumerate() {
            e -= normal_logpdf(*v, self.mu0, self.var0);
            grad[i] += (v - self.mu0) / self.var0;
        }
        e.is_finite().then_some(e)
    }
}
