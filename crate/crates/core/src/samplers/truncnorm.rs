//! Exact draws from univariate truncated normal distributions.

use std::f64::consts::SQRT_2;

use rand::{Rng, RngExt};
use rand_distr::{Distribution, Exp1, StandardNormal};
use statrs::function::erf::{erfc, erfc_inv};

use crate::error::{LgpError, Result};

/// Beyond this many standard deviations the inverse CDF loses precision and
/// an exponential proposal takes over.
const TAIL_CUTOFF: f64 = 5.0;

/// Draws from `N(mu, sigma²)` restricted to `(lower, upper)`. Either bound may
/// be infinite.
pub fn sample_truncnorm<R: Rng + ?Sized>(mu: f64, sigma: f64, lower: f64, upper: f64, rng: &mut R) -> Result<f64> {
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(LgpError::InvalidArgument(format!("standard deviation must be positive, got {sigma}")));
    }
    if !mu.is_finite() {
        return Err(LgpError::InvalidArgument(format!("non-finite mean {mu}")));
    }
    if !(lower < upper) {
        return Err(LgpError::InvalidArgument(format!("empty interval ({lower}, {upper})")));
    }
    let a = (lower - mu) / sigma;
    let b = (upper - mu) / sigma;
    let z = standard(a, b, rng);
    Ok((mu + sigma * z).clamp(lower, upper))
}

/// Standard normal restricted to `(a, b)`.
fn standard<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::INFINITY {
        return StandardNormal.sample(rng);
    }
    if a >= TAIL_CUTOFF {
        return tail(a, b, rng);
    }
    if b <= -TAIL_CUTOFF {
        return -tail(-b, -a, rng);
    }
    inverse_cdf(a, b, rng)
}

/// Upper-tail probability `1 − Φ(x)`.
fn upper_tail(x: f64) -> f64 {
    0.5 * erfc(x / SQRT_2)
}

fn inverse_cdf<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    // Work in the tail that keeps the probabilities away from 1.
    let (flip, lo, hi) = if a >= 0.0 { (false, a, b) } else { (true, -b, -a) };
    let p_lo = upper_tail(lo);
    let p_hi = upper_tail(hi);
    if !(p_lo > p_hi) {
        return uniform_rejection(a, b, rng);
    }
    let u: f64 = rng.random();
    let p = p_hi + u * (p_lo - p_hi);
    let z = if p <= 0.0 { hi } else { SQRT_2 * erfc_inv(2.0 * p) };
    let z = z.clamp(lo, hi);
    if flip {
        -z
    } else {
        z
    }
}

/// Standard normal on `(a, b)` with `a ≥ 5`.
fn tail<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    let lambda = 0.5 * (a + (a * a + 4.0).sqrt());
    if lambda * (b - a) < 1.0 {
        return uniform_rejection(a, b, rng);
    }
    loop {
        let e: f64 = Exp1.sample(rng);
        let z = a + e / lambda;
        if z >= b {
            continue;
        }
        let u: f64 = rng.random();
        if u <= (-0.5 * (z - lambda).powi(2)).exp() {
            return z;
        }
    }
}

/// Uniform proposal on a short finite interval.
fn uniform_rejection<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> f64 {
    // Log-density peak inside the interval.
    let peak = if a > 0.0 {
        a
    } else if b < 0.0 {
        b
    } else {
        0.0
    };
    let width = b - a;
    for _ in 0..100_000 {
        let z = a + width * rng.random::<f64>();
        let u: f64 = rng.random();
        if u.ln() <= 0.5 * (peak * peak - z * z) {
            return z;
        }
    }
    peak
}
