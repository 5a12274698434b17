use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use lgp_core::gp::gp_conditional;
use lgp_core::samplers::{gibbs_update_latent, hmc_update_theta, sample_truncnorm};
use lgp_core::sim::generate_cohort;
use lgp_core::{
    forecast_batch, run_chain, ForecastRequest, KernelKind, KernelParams, LatentState, McmcConfig, MeanModel,
    PriorConfig, ScenarioTruth, TrialDataset,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn truncnorm(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    c.bench_function("truncnorm/bulk", |b| {
        b.iter(|| sample_truncnorm(black_box(0.3), 1.0, 0.0, f64::INFINITY, &mut rng).unwrap())
    });
    c.bench_function("truncnorm/far_tail", |b| {
        b.iter(|| sample_truncnorm(black_box(0.0), 1.0, 10.0, f64::INFINITY, &mut rng).unwrap())
    });
}

fn conditional(c: &mut Criterion) {
    let obs: Vec<f64> = (1..=32).map(|w| w as f64 / 10.0).collect();
    let vals: Vec<f64> = obs.iter().map(|t| (t * 2.0).sin()).collect();
    let new = [3.3, 3.4, 3.5];
    let p = KernelParams::new(1.0, 3.5, 2.0);
    c.bench_function("gp_conditional/32x3", |b| {
        b.iter(|| gp_conditional(&obs, &vals, &new, &|t| -0.8 + 0.4 * t, KernelKind::Periodic, black_box(&p)).unwrap())
    });
}

/// Scenario 2 cohort at its true state: 100 patients, weeks 1..32.
fn true_state() -> (TrialDataset, LatentState) {
    let truth = ScenarioTruth::sensitivity(2).unwrap();
    let weeks: Vec<u32> = (1..=32).collect();
    let cohort = generate_cohort(&truth, 100, &weeks, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
    let state = LatentState {
        a: cohort.latents,
        means: [MeanModel::polynomial(vec![-0.8, 0.4]), MeanModel::polynomial(vec![0.0])],
        kernel: truth.theta,
        kind: KernelKind::Periodic,
    };
    (cohort.data, state)
}

fn updates(c: &mut Criterion) {
    let (data, state) = true_state();
    let prior = PriorConfig::default();
    let config = McmcConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    c.bench_function("hmc_theta/100x32", |b| {
        b.iter(|| hmc_update_theta(&state, &data, &prior, &config, &mut rng).unwrap())
    });
    c.bench_function("gibbs_latent/one_patient_32", |b| {
        b.iter(|| gibbs_update_latent(&state, black_box(0), &data, 0.0, &mut rng).unwrap())
    });
}

fn chain_and_forecast(c: &mut Criterion) {
    let (data, _) = true_state();
    let prior = PriorConfig::default();
    let short = McmcConfig { n_iters: 60, burn_in: 20, thin: 2, ..McmcConfig::default() };
    let mut group = c.benchmark_group("chain");
    group.sample_size(10);
    group.bench_function("60_iterations/100x32", |b| b.iter(|| run_chain(&data, &prior, &short).unwrap()));
    group.finish();

    let draws = run_chain(&data, &prior, &short).unwrap();
    let reqs: Vec<ForecastRequest> = data
        .patients
        .iter()
        .map(|p| ForecastRequest { arm: p.arm, patient_id: p.patient_id.clone(), future_weeks: vec![33, 34, 35] })
        .collect();
    c.bench_function("forecast/100_patients_20_draws", |b| {
        b.iter_batched(|| reqs.clone(), |r| forecast_batch(&draws, &r, &data, 0.0).unwrap(), BatchSize::SmallInput)
    });
}

criterion_group!(benches, truncnorm, conditional, updates, chain_and_forecast);
criterion_main!(benches);
