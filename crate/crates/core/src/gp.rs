//! Covariance matrices, multivariate-normal draws and Gaussian conditioning.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{LgpError, Result};
use crate::kernel::{KernelKind, KernelParams};

/// A symmetric positive-definite matrix together with its Cholesky factor.
#[derive(Debug, Clone)]
pub struct CovMatrix {
    pub values: DMatrix<f64>,
    pub chol: Cholesky<f64, Dyn>,
    pub logdet: f64,
}

impl CovMatrix {
    /// Factorizes `values`. On failure the error names the first leading
    /// minor that is not positive.
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        let (chol, logdet) = factor(&values)?;
        Ok(CovMatrix { values, chol, logdet })
    }

    pub fn dim(&self) -> usize {
        self.values.nrows()
    }

    /// Lower-triangular factor `L` with `L Lᵀ = values`.
    pub fn lower(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    /// `C⁻¹ x` by two triangular solves.
    pub fn solve(&self, x: &DVector<f64>) -> DVector<f64> {
        self.chol.solve(x)
    }

    pub fn inverse(&self) -> DMatrix<f64> {
        self.chol.inverse()
    }

    /// `xᵀ C⁻¹ x`
    pub fn quad_form(&self, x: &DVector<f64>) -> f64 {
        let mut y = x.clone();
        self.chol.l_dirty().solve_lower_triangular_mut(&mut y);
        y.norm_squared()
    }

    /// Gaussian log-density of `x` under `N(mean, values)`.
    pub fn log_density(&self, x: &DVector<f64>, mean: &DVector<f64>) -> f64 {
        let n = self.dim() as f64;
        let r = x - mean;
        -0.5 * (self.quad_form(&r) + self.logdet + n * (2.0 * std::f64::consts::PI).ln())
    }
}

/// Cholesky factorization returning `(factor, log|A|)`.
pub(crate) fn factor(values: &DMatrix<f64>) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = values.nrows();
    if n != values.ncols() {
        return Err(LgpError::InvalidArgument(format!(
            "covariance must be square, got {}x{}",
            n,
            values.ncols()
        )));
    }
    let chol = Cholesky::new_unchecked(values.clone());
    let l = chol.l_dirty();
    let mut logdet = 0.0;
    for i in 0..n {
        let d = l[(i, i)];
        if !(d > 0.0 && d.is_finite()) {
            return Err(LgpError::NotPositiveDefinite { minor: i + 1, size: n });
        }
        logdet += d.ln();
    }
    Ok((chol, 2.0 * logdet))
}

/// Kernel matrix over `times` with `J²` on the diagonal.
pub fn cov_values(times: &[f64], kind: KernelKind, p: &KernelParams) -> DMatrix<f64> {
    let n = times.len();
    let nugget = p.jitter * p.jitter;
    let mut m = DMatrix::zeros(n, n);
    for j in 0..n {
        for i in j..n {
            let v = kind.smooth(times[i] - times[j], p);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
        m[(j, j)] += nugget;
    }
    m
}

/// Cross-covariance between two sets of distinct time points (no jitter).
pub fn cross_cov(rows: &[f64], cols: &[f64], kind: KernelKind, p: &KernelParams) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len(), |i, j| kind.smooth(rows[i] - cols[j], p))
}

/// Builds and factorizes the covariance matrix over `times`.
pub fn build_cov(times: &[f64], kind: KernelKind, p: &KernelParams) -> Result<CovMatrix> {
    if times.is_empty() {
        return Err(LgpError::InvalidArgument("no time points".into()));
    }
    p.validate()?;
    CovMatrix::new(cov_values(times, kind, p))
}

/// `mean + L z` with `z` standard normal.
pub fn mvn_sample<R: Rng + ?Sized>(mean: &DVector<f64>, cov: &CovMatrix, rng: &mut R) -> DVector<f64> {
    assert_eq!(mean.len(), cov.dim(), "mean and covariance dimensions differ");
    let z = DVector::from_iterator(mean.len(), (0..mean.len()).map(|_| StandardNormal.sample(rng)));
    mean + cov.chol.l_dirty().lower_triangle() * z
}

/// Conditional distribution of the process at `new_times` given values
/// observed at `obs_times`. With no observations this is the prior.
pub fn gp_conditional(
    obs_times: &[f64],
    obs_values: &[f64],
    new_times: &[f64],
    mean_at: &dyn Fn(f64) -> f64,
    kind: KernelKind,
    p: &KernelParams,
) -> Result<(DVector<f64>, CovMatrix)> {
    if obs_times.len() != obs_values.len() {
        return Err(LgpError::InvalidArgument(format!(
            "{} observation times but {} values",
            obs_times.len(),
            obs_values.len()
        )));
    }
    if new_times.is_empty() {
        return Err(LgpError::InvalidArgument("no prediction times".into()));
    }
    p.validate()?;
    let prior_mean = DVector::from_iterator(new_times.len(), new_times.iter().map(|&t| mean_at(t)));
    let c_nn = cov_values(new_times, kind, p);
    if obs_times.is_empty() {
        return Ok((prior_mean, CovMatrix::new(c_nn)?));
    }

    let c_oo = CovMatrix::new(cov_values(obs_times, kind, p))?;
    let c_on = cross_cov(obs_times, new_times, kind, p);
    let resid = DVector::from_iterator(
        obs_times.len(),
        obs_times.iter().zip(obs_values).map(|(&t, &a)| a - mean_at(t)),
    );
    let weights = c_oo.solve(&resid);
    let mean = prior_mean + c_on.transpose() * weights;

    // C_nn − V'V with V = L⁻¹ C_on
    let mut v = c_on;
    c_oo.chol.l_dirty().solve_lower_triangular_mut(&mut v);
    let mut cov = c_nn - v.transpose() * &v;
    symmetrize(&mut cov);
    Ok((mean, CovMatrix::new(cov)?))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for j in 0..n {
        for i in (j + 1)..n {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}
