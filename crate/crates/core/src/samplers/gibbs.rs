//! Component-wise Gibbs updates of one patient's latent vector.

use nalgebra::DMatrix;
use rand::Rng;

use crate::data::TrialDataset;
use crate::error::Result;
use crate::gp::build_cov;
use crate::model::LatentState;

use super::truncnorm::sample_truncnorm;

/// One sweep over the components of `a` given precision `prec = C⁻¹`.
///
/// Each component is redrawn from its Gaussian full conditional, truncated
/// to `(a_h, ∞)` when its outcome is a response and to `(−∞, a_h]` otherwise.
pub(crate) fn gibbs_sweep<R: Rng + ?Sized>(
    a: &mut [f64],
    mean: &[f64],
    prec: &DMatrix<f64>,
    outcomes: &[bool],
    a_h: f64,
    rng: &mut R,
) -> Result<()> {
    let k = a.len();
    debug_assert_eq!(prec.nrows(), k);
    let mut resid: Vec<f64> = a.iter().zip(mean).map(|(x, m)| x - m).collect();
    for i in 0..k {
        let col = prec.column(i);
        let pii = col[i];
        let s: f64 = col.iter().zip(&resid).map(|(p, r)| p * r).sum::<f64>() - pii * resid[i];
        let cond_mean = mean[i] - s / pii;
        let sd = pii.sqrt().recip();
        let x = if outcomes[i] {
            let v = sample_truncnorm(cond_mean, sd, a_h, f64::INFINITY, rng)?;
            if v > a_h {
                v
            } else {
                a_h.next_up()
            }
        } else {
            sample_truncnorm(cond_mean, sd, f64::NEG_INFINITY, a_h, rng)?.min(a_h)
        };
        a[i] = x;
        resid[i] = x - mean[i];
    }
    Ok(())
}

/// Returns the patient's latent vector after one Gibbs cycle under `state`.
pub fn gibbs_update_latent<R: Rng + ?Sized>(
    state: &LatentState,
    patient: usize,
    data: &TrialDataset,
    a_h: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let series = &data.patients[patient];
    let times = data.times(patient);
    let cov = build_cov(&times, state.kind, &state.kernel)?;
    let prec = cov.inverse();
    let mean_fn = state.mean(series.arm);
    let mean: Vec<f64> = times.iter().map(|&t| mean_fn.eval(t)).collect();
    let mut a = state.a[patient].clone();
    gibbs_sweep(&mut a, &mean, &prec, &series.outcomes, a_h, rng)?;
    Ok(a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Arm, PatientSeries};
    use crate::gp::mvn_sample;
    use crate::kernel::{KernelKind, KernelParams};
    use crate::model::MeanModel;
    use nalgebra::DVector;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use statrs::function::erf::erfc;

    fn setup(weeks: Vec<u32>, outcomes: Vec<bool>, mean: f64) -> (TrialDataset, LatentState) {
        let a = outcomes.iter().map(|e| if *e { 0.5 } else { -0.5 }).collect();
        let data = TrialDataset::new(vec![PatientSeries::new(Arm::Control, "p", weeks, outcomes)], 35).unwrap();
        let state = LatentState {
            a: vec![a],
            means: [MeanModel::polynomial(vec![mean]), MeanModel::polynomial(vec![0.0])],
            kernel: KernelParams::new(1.0, 3.5, 2.0),
            kind: KernelKind::Periodic,
        };
        (data, state)
    }

    #[test]
    fn single_point_matches_truncated_mean() {
        let (data, mut state) = setup(vec![4], vec![true], 0.3);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 10_000;
        let mut sum = 0.0;
        for _ in 0..n {
            state.a[0] = gibbs_update_latent(&state, 0, &data, 0.0, &mut rng).unwrap();
            sum += state.a[0][0];
        }
        // N(0.3, 1.01) on (0, ∞)
        let s = 1.01f64.sqrt();
        let alpha = -0.3 / s;
        let phi = (-0.5 * alpha * alpha).exp() / (2.0 * std::f64::consts::PI).sqrt();
        let tail = 0.5 * erfc(alpha / std::f64::consts::SQRT_2);
        let want = 0.3 + s * phi / tail;
        assert!((sum / n as f64 - want).abs() < 0.02, "{} vs {want}", sum / n as f64);
    }

    #[test]
    fn all_responses_stay_positive() {
        let (data, mut state) = setup((1..=10).collect(), vec![true; 10], -2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..200 {
            state.a[0] = gibbs_update_latent(&state, 0, &data, 0.0, &mut rng).unwrap();
            assert!(state.a[0].iter().all(|x| *x > 0.0));
        }
    }

    #[test]
    fn stationary_against_rejection_sampler() {
        let weeks = vec![3, 5, 12];
        let outcomes = vec![true, false, true];
        let (data, mut state) = setup(weeks.clone(), outcomes.clone(), 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(13);

        let times: Vec<f64> = weeks.iter().map(|w| *w as f64 / 10.0).collect();
        let cov = build_cov(&times, KernelKind::Periodic, &state.kernel).unwrap();
        let mu = DVector::from_element(3, 0.2);
        let mut accepted = 0usize;
        let mut ref_sum = [0.0; 3];
        while accepted < 40_000 {
            let x = mvn_sample(&mu, &cov, &mut rng);
            if x.iter().zip(&outcomes).all(|(v, e)| (*v > 0.0) == *e) {
                accepted += 1;
                for i in 0..3 {
                    ref_sum[i] += x[i];
                }
            }
        }

        let sweeps = 10_000;
        let mut sum = [0.0; 3];
        for _ in 0..sweeps {
            state.a[0] = gibbs_update_latent(&state, 0, &data, 0.0, &mut rng).unwrap();
            for i in 0..3 {
                sum[i] += state.a[0][i];
            }
        }
        for i in 0..3 {
            let g = sum[i] / sweeps as f64;
            let r = ref_sum[i] / accepted as f64;
            assert!((g - r).abs() < 0.03, "component {i}: {g} vs {r}");
        }
    }
}
