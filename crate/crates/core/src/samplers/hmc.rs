//! Hybrid Monte Carlo with leapfrog dynamics.

use rand::{Rng, RngExt};
use rand_distr::{Distribution, StandardNormal};

/// A potential energy `E(q)` with gradient. `None` marks an inadmissible
/// position (for example a wavelength below the floor).
pub trait PotentialEnergy {
    fn dim(&self) -> usize;
    fn energy_and_grad(&self, q: &[f64], grad: &mut [f64]) -> Option<f64>;
}

/// Runs `steps` leapfrog iterations of size `eps` in place. `grad` must hold
/// `∇E(q)` on entry and holds the gradient at the final position on exit.
/// Returns the final potential energy, or `None` if any visited position is
/// inadmissible.
pub fn leapfrog<P: PotentialEnergy + ?Sized>(
    target: &P,
    q: &mut [f64],
    w: &mut [f64],
    grad: &mut [f64],
    eps: f64,
    steps: usize,
) -> Option<f64> {
    let mut energy = None;
    for _ in 0..steps {
        for (wi, gi) in w.iter_mut().zip(grad.iter()) {
            *wi -= 0.5 * eps * gi;
        }
        for (qi, wi) in q.iter_mut().zip(w.iter()) {
            *qi += eps * wi;
        }
        let e = target.energy_and_grad(q, grad)?;
        if !e.is_finite() {
            return None;
        }
        for (wi, gi) in w.iter_mut().zip(grad.iter()) {
            *wi -= 0.5 * eps * gi;
        }
        energy = Some(e);
    }
    energy
}

#[derive(Debug, Clone, PartialEq)]
pub struct HmcOutcome {
    pub position: Vec<f64>,
    pub accepted: bool,
}

/// One HMC transition from `q0`: fresh momentum, a random direction for the
/// step size, `steps` leapfrog iterations, then a Metropolis test on the
/// Hamiltonian.
pub fn hmc_step<P: PotentialEnergy + ?Sized, R: Rng + ?Sized>(
    target: &P,
    q0: &[f64],
    eps0: f64,
    steps: usize,
    rng: &mut R,
) -> HmcOutcome {
    let n = target.dim();
    let mut grad = vec![0.0; n];
    let reject = |q0: &[f64]| HmcOutcome { position: q0.to_vec(), accepted: false };
    let e0 = match target.energy_and_grad(q0, &mut grad) {
        Some(e) if e.is_finite() => e,
        _ => return reject(q0),
    };
    let mut w: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    let lambda = if rng.random::<bool>() { 1.0 } else { -1.0 };
    let h0 = e0 + 0.5 * w.iter().map(|x| x * x).sum::<f64>();
    let mut q = q0.to_vec();
    let e1 = if steps == 0 || eps0 == 0.0 {
        Some(e0)
    } else {
        leapfrog(target, &mut q, &mut w, &mut grad, lambda * eps0, steps)
    };
    let Some(e1) = e1 else {
        return reject(q0);
    };
    let h1 = e1 + 0.5 * w.iter().map(|x| x * x).sum::<f64>();
    let log_accept = h0 - h1;
    if !log_accept.is_finite() {
        return reject(q0);
    }
    let u: f64 = rng.random();
    if log_accept >= 0.0 || u.ln() < log_accept {
        HmcOutcome { position: q, accepted: true }
    } else {
        reject(q0)
    }
}

/// Multiplicative step-size tuning during burn-in.
#[derive(Debug, Clone)]
pub(crate) struct StepAdapter {
    pub eps: f64,
    window: usize,
    tried: usize,
    accepted: usize,
}

impl StepAdapter {
    pub const WINDOW: usize = 20;

    pub fn new(eps: f64) -> Self {
        StepAdapter { eps, window: Self::WINDOW, tried: 0, accepted: 0 }
    }

    pub fn record(&mut self, accepted: bool) {
        self.tried += 1;
        self.accepted += usize::from(accepted);
        if self.tried == self.window {
            let rate = self.accepted as f64 / self.tried as f64;
            if rate > 0.9 {
                self.eps *= 1.1;
            } else if rate < 0.6 {
                self.eps *= 0.9;
            }
            self.tried = 0;
            self.accepted = 0;
        }
    }
}
