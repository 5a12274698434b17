use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use lgp_core::data::{load_dataset, save_dataset, DEFAULT_HORIZON_WEEKS};
use lgp_core::inference::{forecast_batch, write_forecast_csv, write_summary_csv};
use lgp_core::samplers::diagnostics::{diagnostics, write_diagnostics_csv, write_trace_csv};
use lgp_core::samplers::{constraint_violations, FitOptions};
use lgp_core::sim::{generate_cohort, write_oc_csv, write_trials_csv};
use lgp_core::{
    estimate_eta, monitor_decision, operating_characteristics, posterior_summary, run_chain_with, Arm, ForecastRequest,
    LgpError, PosteriorDraws, Result, ScenarioTruth, TrialDataset, TrialDesign,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::args::{FitArgs, ForecastArgs, GenerateArgs, MonitorArgs, SimulateArgs};
use crate::config::{parse_weeks, RunConfig};

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn load_data(cfg: &RunConfig) -> Result<TrialDataset> {
    let path = cfg
        .data
        .as_ref()
        .ok_or_else(|| LgpError::InvalidArgument("no dataset given (use --data)".into()))?;
    load_dataset(path, cfg.horizon.unwrap_or(DEFAULT_HORIZON_WEEKS))
}

fn fit(cfg: &RunConfig, data: &TrialDataset, keep_latents: bool) -> Result<PosteriorDraws> {
    cfg.validate()?;
    let opts = FitOptions {
        kernel: cfg.fit.kernel,
        mean_family: cfg.fit.mean_family,
        keep_latents,
        ..FitOptions::default()
    };
    run_chain_with(data, &cfg.prior, &cfg.mcmc, &opts)
}

/// A JSON file if one exists at `spec`, otherwise a preset name.
pub fn resolve_scenario(spec: &str) -> Result<ScenarioTruth> {
    let path = PathBuf::from(spec);
    if path.is_file() {
        let text = fs::read_to_string(&path)?;
        let truth: ScenarioTruth =
            serde_json::from_str(&text).map_err(|e| LgpError::Validation(format!("{spec}: {e}")))?;
        truth.validate()?;
        return Ok(truth);
    }
    let preset = spec
        .rsplit_once('-')
        .and_then(|(family, n)| n.parse::<usize>().ok().map(|n| (family, n)));
    match preset {
        Some(("trial", n)) => ScenarioTruth::trial(n),
        Some(("sensitivity", n)) => ScenarioTruth::sensitivity(n),
        _ => Err(LgpError::Validation(format!(
            "{spec} is neither a scenario file nor a preset (trial-N, sensitivity-N)"
        ))),
    }
}

pub fn cmd_fit(args: &FitArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.model.config.as_deref())?;
    cfg.apply_data(&args.data);
    cfg.apply_model(&args.model);
    let data = load_data(&cfg)?;
    let draws = fit(&cfg, &data, true)?;
    let out = cfg.out_dir();

    let summary = posterior_summary(&draws, cfg.prior.max_degree)?;
    write_summary_csv(&summary, create(&out, "posterior_summary.csv")?)?;
    write_trace_csv(&draws, create(&out, "trace.csv")?)?;
    if draws.len() >= 10 {
        write_diagnostics_csv(&diagnostics(&draws)?, create(&out, "diagnostics.csv")?)?;
    }

    println!("retained draws: {}", draws.len());
    println!("hyperparameter acceptance: {:.3}", draws.theta_acceptance);
    for arm in Arm::BOTH {
        if let Some(t) = summary.ddr_mean[arm.index()] {
            let degree = summary
                .modal_degree(arm)
                .map_or_else(|| "-".to_string(), |m| m.to_string());
            println!("arm {}: modal degree {degree}, remission duration {t:.3} weeks", arm.label());
        }
    }
    println!("constraint violations: {}", constraint_violations(&draws, &data));
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_forecast(args: &ForecastArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.model.config.as_deref())?;
    cfg.apply_data(&args.data);
    cfg.apply_model(&args.model);
    let weeks = parse_weeks(&args.weeks)?;
    let data = load_data(&cfg)?;
    let reqs: Vec<ForecastRequest> = data
        .patients
        .iter()
        .map(|p| ForecastRequest {
            arm: p.arm,
            patient_id: p.patient_id.clone(),
            future_weeks: weeks.clone(),
        })
        .collect();
    // catch a bad week list before spending time on the fit
    let last = data.max_week();
    if weeks[0] <= last {
        return Err(LgpError::InvalidArgument(format!(
            "forecast weeks must come after the last observed week {last}"
        )));
    }
    let draws = fit(&cfg, &data, true)?;
    let q = forecast_batch(&draws, &reqs, &data, cfg.prior.a_h)?;
    let out = cfg.out_dir();
    write_forecast_csv(&reqs, &q, create(&out, "forecast.csv")?)?;

    for arm in Arm::BOTH {
        let rows: Vec<&Vec<f64>> = reqs.iter().zip(&q).filter(|(r, _)| r.arm == arm).map(|(_, v)| v).collect();
        if rows.is_empty() {
            continue;
        }
        for (s, week) in weeks.iter().enumerate() {
            let mean = rows.iter().map(|v| v[s]).sum::<f64>() / rows.len() as f64;
            println!("arm {} week {week}: mean q_hat {mean:.4}", arm.label());
        }
    }
    println!("wrote {}", out.join("forecast.csv").display());
    Ok(())
}

pub fn cmd_monitor(args: &MonitorArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.model.config.as_deref())?;
    cfg.apply_data(&args.data);
    cfg.apply_model(&args.model);
    cfg.apply_decision(&args.decision);
    cfg.validate()?;
    let data = load_data(&cfg)?;
    if !(data.has_arm(Arm::Control) && data.has_arm(Arm::Experimental)) {
        return Err(LgpError::Validation("monitoring needs patients in both arms".into()));
    }
    let draws = fit(&cfg, &data, false)?;
    let eta = estimate_eta(&draws, &cfg.monitor)?;
    let decision = monitor_decision(eta, &cfg.monitor);
    let pairs = draws.ddr_pairs();
    let mean_ddr = |k: usize| pairs.iter().map(|p| p[k]).sum::<f64>() / pairs.len() as f64;

    let out = cfg.out_dir();
    let mut w = csv::Writer::from_writer(create(&out, "monitor.csv")?);
    w.write_record(["eta_hat", "verdict", "delta", "xi_upper", "xi_lower", "ddr_1", "ddr_2"])?;
    w.write_record([
        eta.to_string(),
        decision.verdict.to_string(),
        cfg.monitor.delta.to_string(),
        cfg.monitor.xi_upper.to_string(),
        cfg.monitor.xi_lower.to_string(),
        mean_ddr(0).to_string(),
        mean_ddr(1).to_string(),
    ])?;
    w.flush()?;

    println!("eta_hat: {eta:.4}");
    println!("verdict: {}", decision.verdict);
    Ok(())
}

pub fn cmd_simulate(args: &SimulateArgs) -> Result<()> {
    let mut cfg = RunConfig::load(args.model.config.as_deref())?;
    cfg.apply_model(&args.model);
    let mut truth = resolve_scenario(&args.scenario)?;
    if let Some(ah) = args.model.ah {
        truth.a_h = ah;
    }
    cfg.prior.a_h = truth.a_h;
    if args.model.kernel.is_some() {
        truth.fit_kernel = cfg.fit.kernel;
    }
    if args.model.mean.is_some() {
        truth.fit_mean = cfg.fit.mean_family;
    }

    let mut design = if args.full_scale { TrialDesign::full_scale() } else { cfg.design.clone() };
    let m = &args.model;
    if let Some(v) = m.iters {
        design.mcmc.n_iters = v;
    }
    if let Some(v) = m.burnin {
        design.mcmc.burn_in = v;
    }
    if let Some(v) = m.thin {
        design.mcmc.thin = v;
    }
    if let Some(v) = args.replicates {
        design.replicates = v;
    }
    if let Some(v) = args.first_interim {
        design.first_interim = v;
    }
    let d = &args.decision;
    if let Some(v) = d.delta {
        design.monitor.delta = v;
    }
    if let Some(v) = d.xi_upper {
        design.monitor.xi_upper = v;
    }
    if let Some(v) = d.xi_lower {
        design.monitor.xi_lower = v;
    }
    design.validate()?;

    let seed = cfg.seed.unwrap_or(0);
    eprintln!(
        "simulating {} trials of {} ({} iterations per interim fit)",
        design.replicates, args.scenario, design.mcmc.n_iters
    );
    let records = lgp_core::sim::simulate_trials_with(&truth, &design, &cfg.prior, seed, &|r| {
        eprintln!("  trial {}: week {} {}", r.replicate, r.stop_week, r.verdict);
    })?;
    let oc = operating_characteristics(&records)?;

    let out = cfg.out_dir();
    write_trials_csv(&records, create(&out, "trials.csv")?)?;
    let name = if truth.name.is_empty() { args.scenario.clone() } else { truth.name.clone() };
    write_oc_csv(&[(name, oc.clone())], create(&out, "summary.csv")?)?;

    println!("AD {:.2}  MD {}  AP {:.2}", oc.ad, oc.md, oc.ap);
    println!(
        "superiority {:.3}  futility {:.3}  no stop {:.3}",
        oc.superiority, oc.futility, oc.no_stop
    );
    println!("wrote {}", out.display());
    Ok(())
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let mut truth = resolve_scenario(&args.scenario)?;
    if let Some(ah) = args.ah {
        truth.a_h = ah;
    }
    let weeks = match &args.weeks {
        Some(s) => parse_weeks(s)?,
        None => (1..=truth.horizon_weeks).collect(),
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let cohort = generate_cohort(&truth, args.patients, &weeks, &mut rng)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("lgp-out"));
    fs::create_dir_all(&out)?;
    save_dataset(&cohort.data, out.join("data.csv"))?;

    let mut w = csv::Writer::from_writer(create(&out, "latent.csv")?);
    w.write_record(["arm", "patient_id", "week", "latent"])?;
    for (p, a) in cohort.data.patients.iter().zip(&cohort.latents) {
        for (week, v) in p.weeks.iter().zip(a) {
            w.write_record([p.arm.label().to_string(), p.patient_id.clone(), week.to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    serde_json::to_writer_pretty(create(&out, "truth.json")?, &truth)?;

    for arm in Arm::BOTH.into_iter().take(truth.arms.len()) {
        println!("arm {}: true remission duration {:.3} weeks", arm.label(), truth.true_ddr()[arm.index()]);
    }
    println!("wrote {}", out.display());
    Ok(())
}
