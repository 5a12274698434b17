//! Stationary covariance kernels for the per-patient latent process and
//! their hyperparameter derivatives.
//!
//! Hyperparameters are ordered `(θ₁, r, θ₂)` wherever they are laid out as a
//! vector (gradients, sampler positions). The squared-exponential kernel has
//! no wavelength, so it only uses the first two slots.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{LgpError, Result};

/// Smallest admissible |θ₂| in model-time units.
pub const THETA2_FLOOR: f64 = 1e-3;

/// Default diagonal jitter `J`.
pub const DEFAULT_JITTER: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelParams {
    /// Amplitude θ₁.
    pub theta1: f64,
    /// Wavelength θ₂ of the periodic kernel.
    pub theta2: f64,
    /// Roughness r.
    pub r: f64,
    /// Fixed diagonal jitter J.
    #[serde(default = "default_jitter")]
    pub jitter: f64,
}

fn default_jitter() -> f64 {
    DEFAULT_JITTER
}

impl KernelParams {
    pub fn new(theta1: f64, theta2: f64, r: f64) -> Self {
        KernelParams {
            theta1,
            theta2,
            r,
            jitter: DEFAULT_JITTER,
        }
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let finite = [self.theta1, self.theta2, self.r, self.jitter]
            .iter()
            .all(|v| v.is_finite());
        if !finite {
            return Err(LgpError::InvalidArgument(format!("non-finite kernel parameters {self:?}")));
        }
        if self.theta2.abs() < THETA2_FLOOR {
            return Err(LgpError::InvalidArgument(format!(
                "|theta2| = {} below floor {THETA2_FLOOR}",
                self.theta2.abs()
            )));
        }
        if self.jitter <= 0.0 {
            return Err(LgpError::InvalidArgument(format!("jitter must be positive, got {}", self.jitter)));
        }
        Ok(())
    }

    pub fn is_valid(&self) -> bool {
        self.validate().is_ok()
    }

    /// The sampled coordinates for `kind`, in `(θ₁, r, θ₂)` order.
    pub fn position(&self, kind: KernelKind) -> Vec<f64> {
        let all = [self.theta1, self.r, self.theta2];
        all[..kind.n_params()].to_vec()
    }

    /// Inverse of [`KernelParams::position`]; coordinates not sampled under
    /// `kind` are carried over from `self`.
    pub fn with_position(&self, kind: KernelKind, position: &[f64]) -> KernelParams {
        assert_eq!(position.len(), kind.n_params());
        let mut out = *self;
        out.theta1 = position[0];
        out.r = position[1];
        if kind == KernelKind::Periodic {
            out.theta2 = position[2];
        }
        out
    }
}

impl Default for KernelParams {
    fn default() -> Self {
        KernelParams::new(1.0, 1.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum KernelKind {
    /// `θ₁² exp{−r² sin²(π(t_u − t_v)/θ₂)}`
    #[default]
    Periodic,
    /// `θ₁² exp{−r² (t_u − t_v)²}`
    #[serde(alias = "squared_exponential")]
    SqExp,
}

impl KernelKind {
    /// Number of sampled hyperparameters.
    pub fn n_params(self) -> usize {
        match self {
            KernelKind::Periodic => 3,
            KernelKind::SqExp => 2,
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        match self {
            KernelKind::Periodic => &["theta1", "r", "theta2"],
            KernelKind::SqExp => &["theta1", "r"],
        }
    }

    /// Kernel value at time difference `diff`, without jitter.
    #[inline]
    pub fn smooth(self, diff: f64, p: &KernelParams) -> f64 {
        let amp = p.theta1 * p.theta1;
        match self {
            KernelKind::Periodic => {
                let s = (PI * diff / p.theta2).sin();
                amp * (-p.r * p.r * s * s).exp()
            }
            KernelKind::SqExp => amp * (-p.r * p.r * diff * diff).exp(),
        }
    }

    /// Covariance between two time points; equal times pick up `J²`.
    #[inline]
    pub fn eval(self, t_u: f64, t_v: f64, p: &KernelParams) -> f64 {
        let nugget = if t_u == t_v { p.jitter * p.jitter } else { 0.0 };
        self.smooth(t_u - t_v, p) + nugget
    }

    /// Partial derivatives of the smooth part w.r.t. `(θ₁, r, θ₂)`.
    /// The θ₂ slot is zero for the squared-exponential kernel.
    #[inline]
    pub fn gradient(self, diff: f64, p: &KernelParams) -> [f64; 3] {
        match self {
            KernelKind::Periodic => {
                let arg = PI * diff / p.theta2;
                let (s, c) = arg.sin_cos();
                let e = (-p.r * p.r * s * s).exp();
                let amp = p.theta1 * p.theta1;
                [
                    2.0 * p.theta1 * e,
                    -2.0 * p.r * s * s * amp * e,
                    2.0 * p.r * p.r * amp * e * s * c * PI * diff / (p.theta2 * p.theta2),
                ]
            }
            KernelKind::SqExp => {
                let d2 = diff * diff;
                let e = (-p.r * p.r * d2).exp();
                [2.0 * p.theta1 * e, -2.0 * p.r * d2 * p.theta1 * p.theta1 * e, 0.0]
            }
        }
    }
}

/// Periodic kernel, including `J²` when `t_u == t_v`.
pub fn kernel_periodic(t_u: f64, t_v: f64, p: &KernelParams) -> f64 {
    KernelKind::Periodic.eval(t_u, t_v, p)
}

/// Squared-exponential kernel, including `J²` when `t_u == t_v`.
pub fn kernel_sqexp(t_u: f64, t_v: f64, p: &KernelParams) -> f64 {
    KernelKind::SqExp.eval(t_u, t_v, p)
}

/// `(∂C/∂θ₁, ∂C/∂r, ∂C/∂θ₂)` of the periodic kernel.
pub fn kernel_grad_periodic(t_u: f64, t_v: f64, p: &KernelParams) -> [f64; 3] {
    KernelKind::Periodic.gradient(t_u - t_v, p)
}

/// `(∂C/∂θ₁, ∂C/∂r)` of the squared-exponential kernel.
pub fn kernel_grad_sqexp(t_u: f64, t_v: f64, p: &KernelParams) -> [f64; 2] {
    let g = KernelKind::SqExp.gradient(t_u - t_v, p);
    [g[0], g[1]]
}

/// Kernel values and gradients tabulated by integer week lag.
///
/// Observation times are `week / scale`, so every covariance entry of every
/// patient is one of these `max_lag + 1` values.
#[derive(Debug, Clone)]
pub(crate) struct LagTable {
    pub value: Vec<f64>,
    pub grad: Vec<[f64; 3]>,
    pub nugget: f64,
}

impl LagTable {
    pub fn new(kind: KernelKind, p: &KernelParams, max_lag: u32, scale: f64, with_grad: bool) -> Self {
        let n = max_lag as usize + 1;
        let mut value = Vec::with_capacity(n);
        let mut grad = Vec::with_capacity(if with_grad { n } else { 0 });
        for lag in 0..n {
            let d = lag as f64 / scale;
            value.push(kind.smooth(d, p));
            if with_grad {
                grad.push(kind.gradient(d, p));
            }
        }
        LagTable {
            value,
            grad,
            nugget: p.jitter * p.jitter,
        }
    }
}
