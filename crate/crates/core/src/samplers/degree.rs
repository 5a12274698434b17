//! Polynomial degree drawn with the coefficients integrated out, then the
//! coefficients drawn from their Gaussian full conditional.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};

use crate::data::{Arm, TrialDataset};
use crate::error::{LgpError, Result};
use crate::gp::factor;
use crate::groups::{factorize, GroupFactor, Layout};
use crate::model::{LatentState, PriorConfig};

/// `Σ XᵀC⁻¹X` and `Σ XᵀC⁻¹a` over one arm's patients at the maximal degree.
#[derive(Debug, Clone)]
pub(crate) struct ArmStats {
    pub gram: DMatrix<f64>,
    pub cross: DVector<f64>,
}

pub(crate) fn arm_stats(layout: &Layout, factors: &[GroupFactor], a: &[Vec<f64>], arm: Arm) -> ArmStats {
    let d = layout.groups.first().map_or(1, |g| g.design.ncols());
    let mut gram = DMatrix::zeros(d, d);
    let mut cross = DVector::zeros(d);
    for (g, f) in layout.groups.iter().zip(factors) {
        let members = &g.members[arm.index()];
        if members.is_empty() {
            continue;
        }
        let mut sum = DVector::zeros(g.k());
        for &j in members {
            for (s, x) in sum.iter_mut().zip(&a[j]) {
                *s += x;
            }
        }
        let px = &f.prec * &g.design;
        gram += (g.design.transpose() * &px) * members.len() as f64;
        cross += px.transpose() * sum;
    }
    ArmStats { gram, cross }
}

/// Precision `A_h⁻¹` and vector `b_h` for degree `h`.
fn conditional_terms(stats: &ArmStats, h: usize, prior: &PriorConfig) -> (DMatrix<f64>, DVector<f64>) {
    let n = h + 1;
    let mut q = stats.gram.view((0, 0), (n, n)).into_owned();
    for i in 0..n {
        q[(i, i)] += 1.0 / prior.sigma0_sq;
    }
    let b = stats.cross.rows(0, n).map(|c| c + prior.mu0 / prior.sigma0_sq);
    (q, b)
}

/// Normalized log-probabilities of degrees `0..=M`.
pub(crate) fn log_weights_from_stats(stats: &ArmStats, prior: &PriorConfig) -> Result<Vec<f64>> {
    let mut lw = Vec::with_capacity(prior.max_degree + 1);
    for h in 0..=prior.max_degree {
        let (q, b) = conditional_terms(stats, h, prior);
        let (chol, logdet_q) = factor(&q)?;
        let mut y = b.clone();
        chol.l_dirty().solve_lower_triangular_mut(&mut y);
        let n = (h + 1) as f64;
        lw.push(
            prior.log_prior_degree() - 0.5 * logdet_q - 0.5 * n * prior.sigma0_sq.ln() + 0.5 * y.norm_squared()
                - 0.5 * n * prior.mu0 * prior.mu0 / prior.sigma0_sq,
        );
    }
    let top = lw.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !top.is_finite() {
        return Err(LgpError::Numerical("degree weights are not finite".into()));
    }
    let norm = top + lw.iter().map(|w| (w - top).exp()).sum::<f64>().ln();
    Ok(lw.into_iter().map(|w| w - norm).collect())
}

pub(crate) fn draw_index<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in log_weights.iter().enumerate() {
        acc += w.exp();
        if u < acc {
            return i;
        }
    }
    log_weights.len() - 1
}

pub(crate) fn draw_beta_from_stats<R: Rng + ?Sized>(
    stats: &ArmStats,
    m: usize,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let (q, b) = conditional_terms(stats, m, prior);
    let (chol, _) = factor(&q)?;
    let mean = chol.solve(&b);
    let mut z = DVector::from_iterator(m + 1, (0..=m).map(|_| StandardNormal.sample(rng)));
    chol.l_dirty().tr_solve_lower_triangular_mut(&mut z);
    Ok((mean + z).iter().copied().collect())
}

/// Conditional mean `A_m b_m` of the coefficients.
pub(crate) fn beta_mean_from_stats(stats: &ArmStats, m: usize, prior: &PriorConfig) -> Result<Vec<f64>> {
    let (q, b) = conditional_terms(stats, m, prior);
    let (chol, _) = factor(&q)?;
    Ok(chol.solve(&b).iter().copied().collect())
}

fn stats_for(arm: Arm, state: &LatentState, data: &TrialDataset, prior: &PriorConfig) -> Result<ArmStats> {
    let layout = Layout::new(data, prior.max_degree);
    let factors = factorize(&layout, state.kind, &state.kernel)?;
    Ok(arm_stats(&layout, &factors, &state.a, arm))
}

/// Normalized log-probabilities of each degree for `arm`, coefficients
/// integrated out.
pub fn degree_log_weights(arm: Arm, state: &LatentState, data: &TrialDataset, prior: &PriorConfig) -> Result<Vec<f64>> {
    log_weights_from_stats(&stats_for(arm, state, data, prior)?, prior)
}

pub fn sample_degree<R: Rng + ?Sized>(
    arm: Arm,
    state: &LatentState,
    data: &TrialDataset,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<usize> {
    let lw = degree_log_weights(arm, state, data, prior)?;
    Ok(draw_index(&lw, rng))
}

/// Draws the coefficients of `arm` at its current degree.
pub fn sample_beta<R: Rng + ?Sized>(
    arm: Arm,
    state: &LatentState,
    data: &TrialDataset,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let m = state.mean(arm).degree().ok_or_else(|| {
        LgpError::InvalidArgument("coefficient draws need a polynomial mean".into())
    })?;
    draw_beta_from_stats(&stats_for(arm, state, data, prior)?, m, prior, rng)
}

/// Closed-form conditional mean of the coefficients of `arm`.
pub fn beta_conditional_mean(arm: Arm, state: &LatentState, data: &TrialDataset, prior: &PriorConfig) -> Result<Vec<f64>> {
    let m = state.mean(arm).degree().ok_or_else(|| {
        LgpError::InvalidArgument("coefficient draws need a polynomial mean".into())
    })?;
    beta_mean_from_stats(&stats_for(arm, state, data, prior)?, m, prior)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::PatientSeries;
    use crate::gp::build_cov;
    use crate::kernel::{KernelKind, KernelParams};
    use crate::model::{design_matrix, MeanModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn one_patient(weeks: Vec<u32>, a: Vec<f64>) -> (TrialDataset, LatentState) {
        let e = a.iter().map(|x| *x > 0.0).collect();
        let data = TrialDataset::new(vec![PatientSeries::new(Arm::Control, "p", weeks, e)], 35).unwrap();
        let state = LatentState {
            a: vec![a],
            means: [MeanModel::polynomial(vec![0.0]), MeanModel::polynomial(vec![0.0])],
            kernel: KernelParams::new(1.0, 3.5, 2.0),
            kind: KernelKind::Periodic,
        };
        (data, state)
    }

    #[test]
    fn single_category() {
        let (data, state) = one_patient(vec![1, 2], vec![0.4, -0.3]);
        let prior = PriorConfig { max_degree: 0, ..PriorConfig::default() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(sample_degree(Arm::Control, &state, &data, &prior, &mut rng).unwrap(), 0);
        }
    }

    #[test]
    fn weights_match_prior_sampling_oracle() {
        let weeks = vec![3, 9, 15, 22, 30];
        let a = vec![-0.4, 0.1, 0.6, 0.2, 0.9];
        let (data, state) = one_patient(weeks.clone(), a.clone());
        let prior = PriorConfig { max_degree: 2, sigma0_sq: 1.0, ..PriorConfig::default() };
        let lw = degree_log_weights(Arm::Control, &state, &data, &prior).unwrap();

        // Monte Carlo marginal likelihood of each degree under prior draws of β.
        let times: Vec<f64> = weeks.iter().map(|w| *w as f64 / 10.0).collect();
        let cov = build_cov(&times, KernelKind::Periodic, &state.kernel).unwrap();
        let av = DVector::from_vec(a);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let n = 100_000;
        let mut ml = Vec::new();
        let mut se = Vec::new();
        for h in 0..=2 {
            let x = design_matrix(&times, h);
            let mut s = 0.0;
            let mut s2 = 0.0;
            for _ in 0..n {
                let beta = DVector::from_iterator(h + 1, (0..=h).map(|_| StandardNormal.sample(&mut rng)));
                let d = cov.log_density(&av, &(&x * beta)).exp();
                s += d;
                s2 += d * d;
            }
            let m = s / n as f64;
            ml.push(m);
            se.push(((s2 / n as f64 - m * m) / n as f64).sqrt());
        }
        let total: f64 = ml.iter().sum();
        for h in 0..=2 {
            let w_mc = ml[h] / total;
            let se_w = se[h] / total;
            let w = lw[h].exp();
            assert!((w - w_mc).abs() < 3.0 * se_w + 1e-3, "degree {h}: {w} vs {w_mc} ± {se_w}");
        }
    }

    #[test]
    fn weights_invariant_to_patient_order() {
        let ps = vec![
            PatientSeries::new(Arm::Control, "a", vec![1, 4, 7], vec![true, false, true]),
            PatientSeries::new(Arm::Control, "b", vec![2, 4], vec![false, true]),
            PatientSeries::new(Arm::Control, "c", vec![1, 4, 7], vec![false, false, true]),
        ];
        let a = vec![vec![0.2, -0.1, 0.7], vec![-0.5, 0.3], vec![-0.2, -0.9, 1.4]];
        let prior = PriorConfig::default();
        let build = |order: &[usize]| {
            let data = TrialDataset::new(order.iter().map(|&i| ps[i].clone()).collect(), 35).unwrap();
            let state = LatentState {
                a: order.iter().map(|&i| a[i].clone()).collect(),
                means: [MeanModel::polynomial(vec![0.0]), MeanModel::polynomial(vec![0.0])],
                kernel: KernelParams::new(1.0, 3.5, 2.0),
                kind: KernelKind::Periodic,
            };
            degree_log_weights(Arm::Control, &state, &data, &prior).unwrap()
        };
        let w1 = build(&[0, 1, 2]);
        let w2 = build(&[2, 0, 1]);
        for (x, y) in w1.iter().zip(&w2) {
            assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn empty_arm_reduces_to_prior() {
        let (data, state) = one_patient(vec![1], vec![0.3]);
        let prior = PriorConfig { mu0: 0.7, sigma0_sq: 4.0, ..PriorConfig::default() };
        let mut s = state.clone();
        s.means[1] = MeanModel::polynomial(vec![0.0, 0.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 20_000;
        let mut sum = [0.0; 2];
        let mut sq = [0.0; 2];
        for _ in 0..n {
            let b = sample_beta(Arm::Experimental, &s, &data, &prior, &mut rng).unwrap();
            for i in 0..2 {
                sum[i] += b[i];
                sq[i] += b[i] * b[i];
            }
        }
        for i in 0..2 {
            let m = sum[i] / n as f64;
            let v = sq[i] / n as f64 - m * m;
            assert!((m - 0.7).abs() < 0.05);
            assert!((v - 4.0).abs() < 0.2);
        }
        let lw = degree_log_weights(Arm::Experimental, &s, &data, &prior).unwrap();
        for w in lw {
            assert!((w.exp() - 1.0 / 6.0).abs() < 1e-9);
        }
    }

    #[test]
    fn scalar_conjugate_mean() {
        let (data, state) = one_patient(vec![6], vec![0.8]);
        let prior = PriorConfig { mu0: -0.2, sigma0_sq: 2.0, ..PriorConfig::default() };
        let c = 1.01;
        let want = (0.8 / c + -0.2 / 2.0) / (1.0 / c + 1.0 / 2.0);
        let got = beta_conditional_mean(Arm::Control, &state, &data, &prior).unwrap();
        assert!((got[0] - want).abs() < 1e-12);
    }

    #[test]
    fn beta_draws_match_closed_form() {
        let ps = vec![
            PatientSeries::new(Arm::Control, "a", vec![2, 6, 11, 20], vec![true, false, true, true]),
            PatientSeries::new(Arm::Control, "b", vec![3, 6, 18], vec![false, false, true]),
        ];
        let data = TrialDataset::new(ps, 35).unwrap();
        let state = LatentState {
            a: vec![vec![0.3, -0.2, 0.9, 1.2], vec![-0.6, -0.1, 0.4]],
            means: [MeanModel::polynomial(vec![0.0, 0.0]), MeanModel::polynomial(vec![0.0])],
            kernel: KernelParams::new(0.7, 3.5, 1.5),
            kind: KernelKind::Periodic,
        };
        let prior = PriorConfig::default();
        let want = beta_conditional_mean(Arm::Control, &state, &data, &prior).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let n = 10_000;
        let mut sum = [0.0; 2];
        for _ in 0..n {
            let b = sample_beta(Arm::Control, &state, &data, &prior, &mut rng).unwrap();
            sum[0] += b[0];
            sum[1] += b[1];
        }
        for i in 0..2 {
            assert!((sum[i] / n as f64 - want[i]).abs() < 0.02, "{i}: {} vs {}", sum[i] / n as f64, want[i]);
        }
    }
}
