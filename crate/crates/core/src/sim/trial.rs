//! Sequential two-arm trials with weekly interim looks, and their
//! operating characteristics.

use std::io::Write;

use rand::{Rng, RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Arm, PatientSeries, TrialDataset, DEFAULT_HORIZON_WEEKS};
use crate::error::{LgpError, Result};
use crate::inference::{estimate_eta, monitor_decision, MonitorConfig, Verdict};
use crate::model::PriorConfig;
use crate::samplers::{run_chain_with, McmcConfig};

use super::scenario::{draw_paths, ScenarioTruth};

fn default_max_per_arm() -> usize {
    100
}
fn default_accrual_min() -> usize {
    2
}
fn default_accrual_max() -> usize {
    4
}
fn default_first_interim() -> u32 {
    23
}
fn default_horizon() -> u32 {
    DEFAULT_HORIZON_WEEKS
}
fn default_replicates() -> usize {
    20
}
fn desk_mcmc() -> McmcConfig {
    McmcConfig {
        n_iters: 2500,
        burn_in: 500,
        thin: 10,
        ..McmcConfig::default()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrialDesign {
    #[serde(default = "default_max_per_arm")]
    pub max_per_arm: usize,
    /// New patients per arm each week, uniform on `accrual_min..=accrual_max`.
    #[serde(default = "default_accrual_min")]
    pub accrual_min: usize,
    #[serde(default = "default_accrual_max")]
    pub accrual_max: usize,
    #[serde(default = "default_first_interim")]
    pub first_interim: u32,
    #[serde(default = "default_horizon")]
    pub horizon: u32,
    #[serde(default)]
    pub monitor: MonitorConfig,
    /// Sampler settings for every interim fit; its seed is ignored.
    #[serde(default = "desk_mcmc")]
    pub mcmc: McmcConfig,
    #[serde(default = "default_replicates")]
    pub replicates: usize,
}

impl Default for TrialDesign {
    /// Desk scale: 20 replicates with 2,500-iteration interim fits.
    fn default() -> Self {
        TrialDesign {
            max_per_arm: default_max_per_arm(),
            accrual_min: default_accrual_min(),
            accrual_max: default_accrual_max(),
            first_interim: default_first_interim(),
            horizon: default_horizon(),
            monitor: MonitorConfig::default(),
            mcmc: desk_mcmc(),
            replicates: default_replicates(),
        }
    }
}

impl TrialDesign {
    /// 100 replicates with the full 10,000-iteration sampler.
    pub fn full_scale() -> Self {
        TrialDesign {
            mcmc: McmcConfig::default(),
            replicates: 100,
            ..TrialDesign::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.first_interim == 0 || self.first_interim > self.horizon {
            return Err(LgpError::Validation(format!(
                "first interim week {} must lie in 1..={}",
                self.first_interim, self.horizon
            )));
        }
        if self.replicates == 0 {
            return Err(LgpError::Validation("at least one replicate is needed".into()));
        }
        if self.max_per_arm == 0 {
            return Err(LgpError::Validation("the per-arm cap must be positive".into()));
        }
        if self.accrual_min > self.accrual_max || self.accrual_max == 0 {
            return Err(LgpError::Validation(format!(
                "weekly accrual range {}..={} is empty or zero",
                self.accrual_min, self.accrual_max
            )));
        }
        self.monitor.validate()?;
        self.mcmc.validate()
    }
}

/// Outcome of one simulated trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub replicate: usize,
    pub stop_week: u32,
    /// `Continue` means the trial ran to the horizon without a stop.
    pub verdict: Verdict,
    /// Patients per arm enrolled by the stop week.
    pub enrolled: [usize; 2],
    /// `(week, η̂)` at every look taken.
    pub eta_history: Vec<(u32, f64)>,
}

/// Every patient a trial could enrol, observed from entry to the horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialCohort {
    pub full: TrialDataset,
    /// Entry week per patient, in dataset order.
    pub entry: Vec<u32>,
}

impl TrialCohort {
    /// Data available at the end of `week`.
    pub fn at_week(&self, week: u32) -> Result<TrialDataset> {
        self.full.truncated_to(week)
    }

    pub fn enrolled_by(&self, week: u32) -> [usize; 2] {
        let mut n = [0, 0];
        for (p, &e) in self.full.patients.iter().zip(&self.entry) {
            if e <= week {
                n[p.arm.index()] += 1;
            }
        }
        n
    }
}

/// Weekly accrual and latent paths in calendar time. A patient entering at
/// week `w` is observed at `w, w+1, …, horizon`.
pub fn accrue<R: Rng + ?Sized>(truth: &ScenarioTruth, design: &TrialDesign, rng: &mut R) -> Result<TrialCohort> {
    if truth.arms.len() != 2 {
        return Err(LgpError::Validation("a trial needs a two-arm scenario".into()));
    }
    let grid: Vec<u32> = (1..=design.horizon).collect();
    let mut patients = Vec::new();
    let mut entry = Vec::new();
    for arm in Arm::BOTH {
        let mut entries = Vec::new();
        for week in 1..=design.horizon {
            let room = design.max_per_arm - entries.len();
            let n = rng.random_range(design.accrual_min..=design.accrual_max).min(room);
            entries.extend(std::iter::repeat_n(week, n));
        }
        let paths = draw_paths(truth, arm, entries.len(), &grid, rng)?;
        for (j, (&w, path)) in entries.iter().zip(paths).enumerate() {
            let from = (w - 1) as usize;
            let e = path[from..].iter().map(|&v| v > truth.a_h).collect();
            patients.push(PatientSeries::new(arm, format!("p{}", j + 1), grid[from..].to_vec(), e));
            entry.push(w);
        }
    }
    Ok(TrialCohort {
        full: TrialDataset::new(patients, design.horizon)?,
        entry,
    })
}

/// Runs one trial: accrual, then a fit and a monitoring decision every week
/// from the first interim, stopping at the first verdict other than
/// `Continue`. The decision rule also applies at the horizon.
pub fn run_trial<R: Rng + ?Sized>(
    truth: &ScenarioTruth,
    design: &TrialDesign,
    prior: &PriorConfig,
    rng: &mut R,
) -> Result<TrialRecord> {
    truth.validate()?;
    design.validate()?;
    let cohort = accrue(truth, design, rng)?;
    let opts = crate::samplers::FitOptions {
        keep_latents: false,
        ..truth.fit_options()
    };
    let mut history = Vec::new();
    for week in design.first_interim..=design.horizon {
        let data = cohort.at_week(week)?;
        let cfg = McmcConfig {
            seed: rng.next_u64(),
            ..design.mcmc.clone()
        };
        let draws = run_chain_with(&data, prior, &cfg, &opts)?;
        let eta = estimate_eta(&draws, &design.monitor)?;
        history.push((week, eta));
        let decision = monitor_decision(eta, &design.monitor);
        if decision.verdict != Verdict::Continue || week == design.horizon {
            return Ok(TrialRecord {
                replicate: 0,
                stop_week: week,
                verdict: decision.verdict,
                enrolled: cohort.enrolled_by(week),
                eta_history: history,
            });
        }
    }
    unreachable!("the look at the horizon always returns")
}

/// Runs `design.replicates` independent trials in parallel. Replicate `i`
/// draws from stream `i` of a generator seeded with `seed`, so results do not
/// depend on scheduling. `on_done` is called as each trial finishes.
pub fn simulate_trials_with(
    truth: &ScenarioTruth,
    design: &TrialDesign,
    prior: &PriorConfig,
    seed: u64,
    on_done: &(dyn Fn(&TrialRecord) + Sync),
) -> Result<Vec<TrialRecord>> {
    truth.validate()?;
    design.validate()?;
    prior.validate()?;
    (0..design.replicates)
        .into_par_iter()
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let mut rec = run_trial(truth, design, prior, &mut rng).map_err(|e| LgpError::Trial {
                replicate: i,
                source: Box::new(e),
            })?;
            rec.replicate = i;
            on_done(&rec);
            Ok(rec)
        })
        .collect()
}

pub fn simulate_trials(
    truth: &ScenarioTruth,
    design: &TrialDesign,
    prior: &PriorConfig,
    seed: u64,
) -> Result<Vec<TrialRecord>> {
    simulate_trials_with(truth, design, prior, seed, &|_| {})
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OperatingCharacteristics {
    pub n_trials: usize,
    /// Average stop week.
    pub ad: f64,
    /// Latest stop week.
    pub md: u32,
    /// Average patients per arm at the stop.
    pub ap: f64,
    pub n_superior: usize,
    pub n_futile: usize,
    pub n_no_stop: usize,
    pub superiority: f64,
    pub futility: f64,
    pub no_stop: f64,
}

pub fn operating_characteristics(records: &[TrialRecord]) -> Result<OperatingCharacteristics> {
    if records.is_empty() {
        return Err(LgpError::InvalidArgument("no trial records".into()));
    }
    let n = records.len();
    let nf = n as f64;
    let count = |v: Verdict| records.iter().filter(|r| r.verdict == v).count();
    let (n_superior, n_futile, n_no_stop) = (count(Verdict::StopSuperior), count(Verdict::StopFutile), count(Verdict::Continue));
    Ok(OperatingCharacteristics {
        n_trials: n,
        ad: records.iter().map(|r| r.stop_week as f64).sum::<f64>() / nf,
        md: records.iter().map(|r| r.stop_week).max().unwrap_or(0),
        ap: records.iter().map(|r| (r.enrolled[0] + r.enrolled[1]) as f64 / 2.0).sum::<f64>() / nf,
        n_superior,
        n_futile,
        n_no_stop,
        superiority: n_superior as f64 / nf,
        futility: n_futile as f64 / nf,
        no_stop: n_no_stop as f64 / nf,
    })
}

/// `replicate,stop_week,verdict,n1,n2,final_eta`
pub fn write_trials_csv<W: Write>(records: &[TrialRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["replicate", "stop_week", "verdict", "n1", "n2", "final_eta"])?;
    for r in records {
        let eta = r.eta_history.last().map_or(f64::NAN, |x| x.1);
        w.write_record([
            r.replicate.to_string(),
            r.stop_week.to_string(),
            r.verdict.to_string(),
            r.enrolled[0].to_string(),
            r.enrolled[1].to_string(),
            eta.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `scenario,trials,AD,MD,AP,superiority,futility,no_stop`
pub fn write_oc_csv<W: Write>(rows: &[(String, OperatingCharacteristics)], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["scenario", "trials", "AD", "MD", "AP", "superiority", "futility", "no_stop"])?;
    for (name, oc) in rows {
        w.write_record([
            name.clone(),
            oc.n_trials.to_string(),
            format!("{:.2}", oc.ad),
            oc.md.to_string(),
            format!("{:.2}", oc.ap),
            oc.superiority.to_string(),
            oc.futility.to_string(),
            oc.no_stop.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn quick_design() -> TrialDesign {
        TrialDesign {
            max_per_arm: 30,
            mcmc: McmcConfig {
                n_iters: 40,
                burn_in: 10,
                thin: 5,
                ..McmcConfig::default()
            },
            replicates: 2,
            ..TrialDesign::default()
        }
    }

    fn record(stop: u32, verdict: Verdict, n: usize) -> TrialRecord {
        TrialRecord {
            replicate: 0,
            stop_week: stop,
            verdict,
            enrolled: [n, n],
            eta_history: vec![],
        }
    }

    #[test]
    fn accrual_respects_cap_and_calendar() {
        let truth = ScenarioTruth::trial(1).unwrap();
        let design = TrialDesign::default();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let cohort = accrue(&truth, &design, &mut rng).unwrap();
        assert_eq!(cohort.full.arm_count(Arm::Control), 100);
        assert_eq!(cohort.full.arm_count(Arm::Experimental), 100);
        for (p, &e) in cohort.full.patients.iter().zip(&cohort.entry) {
            assert_eq!(p.weeks, (e..=35).collect::<Vec<_>>());
        }
        let at23 = cohort.at_week(23).unwrap();
        let n = cohort.enrolled_by(23);
        assert_eq!(at23.patients.len(), n[0] + n[1]);
        assert!((46..=92).contains(&n[0]));
        assert!(at23.patients.iter().all(|p| p.last_week() == Some(23)));
    }

    #[test]
    fn eager_cutoff_stops_at_first_look() {
        let truth = ScenarioTruth::trial(6).unwrap();
        let design = TrialDesign {
            monitor: MonitorConfig { xi_upper: 0.0, xi_lower: 0.0, ..MonitorConfig::default() },
            ..quick_design()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let r = run_trial(&truth, &design, &PriorConfig::default(), &mut rng).unwrap();
        assert_eq!((r.stop_week, r.verdict), (23, Verdict::StopSuperior));
        assert_eq!(r.eta_history.len(), 1);
    }

    #[test]
    fn inert_monitor_runs_to_horizon() {
        let truth = ScenarioTruth::trial(4).unwrap();
        let design = TrialDesign {
            monitor: MonitorConfig { xi_upper: 1.0, xi_lower: 0.0, ..MonitorConfig::default() },
            first_interim: 32,
            replicates: 1,
            ..quick_design()
        };
        let recs = simulate_trials(&truth, &design, &PriorConfig::default(), 4).unwrap();
        assert_eq!(recs[0].stop_week, 35);
        assert_eq!(recs[0].verdict, Verdict::Continue);
        assert_eq!(recs[0].eta_history.len(), 4);
        assert_eq!(operating_characteristics(&recs).unwrap().ad, 35.0);
    }

    #[test]
    fn replicates_are_reproducible_and_ordered() {
        let truth = ScenarioTruth::trial(1).unwrap();
        let design = TrialDesign { first_interim: 34, ..quick_design() };
        let a = simulate_trials(&truth, &design, &PriorConfig::default(), 11).unwrap();
        let b = simulate_trials(&truth, &design, &PriorConfig::default(), 11).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.iter().map(|r| r.replicate).collect::<Vec<_>>(), vec![0, 1]);
        assert_ne!(a[0].eta_history, a[1].eta_history);
    }

    #[test]
    fn design_validation() {
        assert!(TrialDesign::default().validate().is_ok());
        assert!(TrialDesign::full_scale().validate().is_ok());
        assert!(TrialDesign { first_interim: 36, ..TrialDesign::default() }.validate().is_err());
        assert!(TrialDesign { replicates: 0, ..TrialDesign::default() }.validate().is_err());
        assert!(TrialDesign { accrual_min: 5, ..TrialDesign::default() }.validate().is_err());
        let d: TrialDesign = serde_json::from_str(r#"{"replicates": 3, "monitor": {"delta": 1}}"#).unwrap();
        assert_eq!((d.replicates, d.mcmc.n_iters, d.monitor.delta), (3, 2500, 1.0));
        assert!(serde_json::from_str::<TrialDesign>(r#"{"replicate": 3}"#).is_err());
        let one_arm = ScenarioTruth::sensitivity(2).unwrap();
        assert!(accrue(&one_arm, &TrialDesign::default(), &mut ChaCha8Rng::seed_from_u64(0)).is_err());
    }

    #[test]
    fn oc_examples() {
        let oc = operating_characteristics(&[record(26, Verdict::StopSuperior, 70)]).unwrap();
        assert_eq!((oc.ad, oc.md, oc.ap, oc.superiority), (26.0, 26, 70.0, 1.0));
        let oc = operating_characteristics(&[record(23, Verdict::StopFutile, 69), record(35, Verdict::Continue, 100)]).unwrap();
        assert_eq!((oc.ad, oc.md), (29.0, 35));
        assert!(operating_characteristics(&[]).is_err());

        let mut buf = Vec::new();
        write_oc_csv(&[("x".into(), oc)], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("scenario,trials,AD,MD,AP,superiority,futility,no_stop\nx,2,29.00,35,84.50,0,0.5,0.5"));
    }

    proptest! {
        #[test]
        fn oc_counts_partition(picks in proptest::collection::vec((23u32..=35, 0usize..3, 40usize..=100), 1..60)) {
            let verdicts = [Verdict::StopSuperior, Verdict::Continue, Verdict::StopFutile];
            let recs: Vec<TrialRecord> = picks.iter().map(|&(w, v, n)| record(w, verdicts[v], n)).collect();
            let oc = operating_characteristics(&recs).unwrap();
            prop_assert_eq!(oc.n_superior + oc.n_futile + oc.n_no_stop, recs.len());
            prop_assert!((oc.superiority + oc.futility + oc.no_stop - 1.0).abs() <= 2.0 * f64::EPSILON);
            prop_assert!(oc.ad <= oc.md as f64 && oc.md <= 35);
        }
    }
}
