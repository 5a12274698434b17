//! Observed trial data: per-patient binary outcome series on a week grid,
//! plus CSV ingestion and export (`arm,patient_id,week,outcome`).

use std::collections::HashMap;
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{LgpError, Result};

/// Default follow-up length in weeks.
pub const DEFAULT_HORIZON_WEEKS: u32 = 35;

/// Weeks per unit of model time. A 35-week trial spans `t ∈ (0, 3.5]`.
pub const DEFAULT_TIME_SCALE: f64 = 10.0;

/// Treatment arm. Arm 1 is the standard control, arm 2 the experimental treatment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Arm {
    Control,
    Experimental,
}

impl Arm {
    pub const BOTH: [Arm; 2] = [Arm::Control, Arm::Experimental];

    /// Zero-based index, for per-arm arrays.
    pub fn index(self) -> usize {
        match self {
            Arm::Control => 0,
            Arm::Experimental => 1,
        }
    }

    /// The on-disk label, 1 or 2.
    pub fn label(self) -> u8 {
        self.index() as u8 + 1
    }

    pub fn from_label(label: u8) -> Option<Arm> {
        match label {
            1 => Some(Arm::Control),
            2 => Some(Arm::Experimental),
            _ => None,
        }
    }
}

impl TryFrom<u8> for Arm {
    type Error = String;

    fn try_from(value: u8) -> std::result::Result<Self, Self::Error> {
        Arm::from_label(value).ok_or_else(|| format!("arm must be 1 or 2, got {value}"))
    }
}

impl From<Arm> for u8 {
    fn from(arm: Arm) -> u8 {
        arm.label()
    }
}

impl fmt::Display for Arm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.label())
    }
}

/// One patient's observed outcomes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientSeries {
    pub arm: Arm,
    pub patient_id: String,
    /// Strictly increasing observation weeks, each in `1..=horizon`.
    pub weeks: Vec<u32>,
    /// `true` for a response (`e = 1`), one per week.
    pub outcomes: Vec<bool>,
}

impl PatientSeries {
    pub fn new(arm: Arm, patient_id: impl Into<String>, weeks: Vec<u32>, outcomes: Vec<bool>) -> Self {
        PatientSeries {
            arm,
            patient_id: patient_id.into(),
            weeks,
            outcomes,
        }
    }

    pub fn len(&self) -> usize {
        self.weeks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weeks.is_empty()
    }

    pub fn last_week(&self) -> Option<u32> {
        self.weeks.last().copied()
    }

    fn validate(&self, horizon: u32) -> Result<()> {
        if self.weeks.is_empty() {
            return Err(LgpError::Validation(format!(
                "patient {} has no observations",
                self.patient_id
            )));
        }
        if self.weeks.len() != self.outcomes.len() {
            return Err(LgpError::Validation(format!(
                "patient {}: {} weeks but {} outcomes",
                self.patient_id,
                self.weeks.len(),
                self.outcomes.len()
            )));
        }
        if self.weeks[0] < 1 {
            return Err(LgpError::Validation(format!(
                "patient {}: weeks start at 1",
                self.patient_id
            )));
        }
        for pair in self.weeks.windows(2) {
            if pair[1] <= pair[0] {
                return Err(LgpError::Validation(format!(
                    "patient {}: weeks not strictly increasing ({} then {})",
                    self.patient_id, pair[0], pair[1]
                )));
            }
        }
        let last = *self.weeks.last().unwrap();
        if last > horizon {
            return Err(LgpError::Validation(format!(
                "patient {}: week {last} beyond horizon {horizon}",
                self.patient_id
            )));
        }
        Ok(())
    }
}

/// Model times `t_k = week_k / scale`.
pub fn model_times(series: &PatientSeries, scale: f64) -> Vec<f64> {
    assert!(scale > 0.0, "time scale must be positive");
    weeks_to_times(&series.weeks, scale)
}

pub(crate) fn weeks_to_times(weeks: &[u32], scale: f64) -> Vec<f64> {
    weeks.iter().map(|&w| f64::from(w) / scale).collect()
}

/// A validated collection of patients observed up to some horizon.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialDataset {
    pub patients: Vec<PatientSeries>,
    pub horizon_weeks: u32,
    pub time_scale: f64,
}

impl TrialDataset {
    /// Builds and validates a dataset with the default time scale.
    pub fn new(patients: Vec<PatientSeries>, horizon_weeks: u32) -> Result<Self> {
        Self::with_scale(patients, horizon_weeks, DEFAULT_TIME_SCALE)
    }

    pub fn with_scale(patients: Vec<PatientSeries>, horizon_weeks: u32, time_scale: f64) -> Result<Self> {
        let dataset = TrialDataset {
            patients,
            horizon_weeks,
            time_scale,
        };
        dataset.validate()?;
        Ok(dataset)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.time_scale > 0.0 && self.time_scale.is_finite()) {
            return Err(LgpError::Validation(format!(
                "time scale must be positive, got {}",
                self.time_scale
            )));
        }
        if self.horizon_weeks == 0 {
            return Err(LgpError::Validation("horizon must be at least one week".into()));
        }
        if self.patients.is_empty() {
            return Err(LgpError::Validation("no patients".into()));
        }
        let mut seen = HashMap::new();
        for p in &self.patients {
            p.validate(self.horizon_weeks)?;
            if seen.insert((p.arm, p.patient_id.as_str()), ()).is_some() {
                return Err(LgpError::Validation(format!(
                    "patient {} appears twice in arm {}",
                    p.patient_id, p.arm
                )));
            }
        }
        Ok(())
    }

    /// Horizon in model-time units.
    pub fn horizon_time(&self) -> f64 {
        f64::from(self.horizon_weeks) / self.time_scale
    }

    pub fn times(&self, patient: usize) -> Vec<f64> {
        model_times(&self.patients[patient], self.time_scale)
    }

    pub fn arm_count(&self, arm: Arm) -> usize {
        self.patients.iter().filter(|p| p.arm == arm).count()
    }

    pub fn has_arm(&self, arm: Arm) -> bool {
        self.patients.iter().any(|p| p.arm == arm)
    }

    pub fn find(&self, arm: Arm, patient_id: &str) -> Option<usize> {
        self.patients
            .iter()
            .position(|p| p.arm == arm && p.patient_id == patient_id)
    }

    pub fn total_observations(&self) -> usize {
        self.patients.iter().map(PatientSeries::len).sum()
    }

    pub fn max_week(&self) -> u32 {
        self.patients
            .iter()
            .filter_map(PatientSeries::last_week)
            .max()
            .unwrap_or(0)
    }

    /// Keeps only observations at or before `week`; patients left with no
    /// observations are dropped.
    pub fn truncated_to(&self, week: u32) -> Result<TrialDataset> {
        let patients = self
            .patients
            .iter()
            .filter_map(|p| {
                let keep = p.weeks.iter().take_while(|&&w| w <= week).count();
                (keep > 0).then(|| PatientSeries {
                    arm: p.arm,
                    patient_id: p.patient_id.clone(),
                    weeks: p.weeks[..keep].to_vec(),
                    outcomes: p.outcomes[..keep].to_vec(),
                })
            })
            .collect();
        TrialDataset::with_scale(patients, self.horizon_weeks, self.time_scale)
    }

    /// Empirical response rate at `week` over patients observed then.
    pub fn response_rate(&self, week: u32) -> Option<f64> {
        let mut hits = 0usize;
        let mut n = 0usize;
        for p in &self.patients {
            if let Ok(k) = p.weeks.binary_search(&week) {
                n += 1;
                hits += usize::from(p.outcomes[k]);
            }
        }
        (n > 0).then(|| hits as f64 / n as f64)
    }
}

const HEADER: [&str; 4] = ["arm", "patient_id", "week", "outcome"];

/// Reads a dataset from a CSV file with header `arm,patient_id,week,outcome`.
pub fn load_dataset(path: impl AsRef<Path>, horizon: u32) -> Result<TrialDataset> {
    let file = std::fs::File::open(path)?;
    read_dataset(file, horizon)
}

pub fn read_dataset<R: Read>(reader: R, horizon: u32) -> Result<TrialDataset> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(reader);

    let headers = rdr.headers()?.clone();
    if !headers.is_empty() && headers.iter().ne(HEADER.iter().copied()) {
        return Err(LgpError::Parse {
            line: 1,
            message: format!("expected header {}, found {}", HEADER.join(","), headers.iter().collect::<Vec<_>>().join(",")),
        });
    }

    let mut index: HashMap<(Arm, String), usize> = HashMap::new();
    let mut rows: Vec<(Arm, String, Vec<(u32, bool)>)> = Vec::new();

    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != 4 {
            return Err(LgpError::Parse {
                line,
                message: format!("expected 4 fields, found {}", record.len()),
            });
        }
        let parse_err = |what: &str, value: &str| LgpError::Parse {
            line,
            message: format!("cannot parse {what} from {value:?}"),
        };
        let arm_label: u8 = record[0].parse().map_err(|_| parse_err("arm", &record[0]))?;
        let arm = Arm::from_label(arm_label).ok_or_else(|| LgpError::Parse {
            line,
            message: format!("arm must be 1 or 2, found {arm_label}"),
        })?;
        let patient_id = record[1].to_string();
        if patient_id.is_empty() {
            return Err(parse_err("patient_id", ""));
        }
        let week: u32 = record[2].parse().map_err(|_| parse_err("week", &record[2]))?;
        let outcome: i64 = record[3].parse().map_err(|_| parse_err("outcome", &record[3]))?;
        let outcome = match outcome {
            0 => false,
            1 => true,
            other => {
                return Err(LgpError::Validation(format!(
                    "line {line}: outcome must be 0 or 1, found {other}"
                )))
            }
        };
        if week == 0 || week > horizon {
            return Err(LgpError::Validation(format!(
                "line {line}: week {week} outside 1..={horizon}"
            )));
        }

        let slot = *index.entry((arm, patient_id.clone())).or_insert_with(|| {
            rows.push((arm, patient_id.clone(), Vec::new()));
            rows.len() - 1
        });
        let obs = &mut rows[slot].2;
        if obs.iter().any(|&(w, _)| w == week) {
            return Err(LgpError::Validation(format!(
                "line {line}: duplicate week {week} for patient {patient_id}"
            )));
        }
        obs.push((week, outcome));
    }

    let patients = rows
        .into_iter()
        .map(|(arm, id, mut obs)| {
            obs.sort_by_key(|&(w, _)| w);
            let (weeks, outcomes) = obs.into_iter().unzip();
            PatientSeries::new(arm, id, weeks, outcomes)
        })
        .collect();
    TrialDataset::new(patients, horizon)
}

/// Writes a dataset in the same CSV layout `load_dataset` reads.
pub fn save_dataset(dataset: &TrialDataset, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_dataset(dataset, file)
}

pub fn write_dataset<W: Write>(dataset: &TrialDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(HEADER)?;
    for p in &dataset.patients {
        for (&week, &outcome) in p.weeks.iter().zip(&p.outcomes) {
            wtr.write_record([
                p.arm.label().to_string(),
                p.patient_id.clone(),
                week.to_string(),
                u8::from(outcome).to_string(),
            ])?;
        }
    }
    wtr.flush()?;
    Ok(())
}
