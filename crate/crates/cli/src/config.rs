//! Run configuration: a JSON file whose sections mirror the library's
//! config types, with command-line flags applied on top.

use std::path::{Path, PathBuf};

use lgp_core::samplers::MeanFamily;
use lgp_core::{KernelKind, LgpError, McmcConfig, MonitorConfig, PriorConfig, Result, TrialDesign};
use serde::Deserialize;

use crate::args::{DataArgs, DecisionArgs, KernelArg, MeanArg, ModelArgs};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    #[serde(default)]
    pub kernel: KernelKind,
    #[serde(default)]
    pub mean_family: MeanFamily,
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            kernel: KernelKind::Periodic,
            mean_family: MeanFamily::Polynomial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub horizon: Option<u32>,
    pub seed: Option<u64>,
    pub prior: PriorConfig,
    pub mcmc: McmcConfig,
    pub monitor: MonitorConfig,
    pub design: TrialDesign,
    pub fit: FitSection,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        match path {
            None => Ok(RunConfig::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p)?;
                serde_json::from_str(&text).map_err(|e| LgpError::Validation(format!("{}: {e}", p.display())))
            }
        }
    }

    pub fn apply_model(&mut self, args: &ModelArgs) {
        if let Some(s) = args.seed {
            self.seed = Some(s);
        }
        if let Some(v) = args.iters {
            self.mcmc.n_iters = v;
        }
        if let Some(v) = args.burnin {
            self.mcmc.burn_in = v;
        }
        if let Some(v) = args.thin {
            self.mcmc.thin = v;
        }
        if let Some(v) = args.ah {
            self.prior.a_h = v;
        }
        if let Some(v) = args.max_degree {
            self.prior.max_degree = v;
        }
        if let Some(k) = args.kernel {
            self.fit.kernel = match k {
                KernelArg::Periodic => KernelKind::Periodic,
                KernelArg::Sqexp => KernelKind::SqExp,
            };
        }
        if let Some(m) = args.mean {
            self.fit.mean_family = match m {
                MeanArg::Polynomial => MeanFamily::Polynomial,
                MeanArg::Trigonometric => MeanFamily::Trigonometric,
            };
        }
        if let Some(o) = &args.out {
            self.out = Some(o.clone());
        }
        if let Some(s) = self.seed {
            self.mcmc.seed = s;
        }
    }

    pub fn apply_data(&mut self, args: &DataArgs) {
        if let Some(d) = &args.data {
            self.data = Some(d.clone());
        }
        if let Some(h) = args.horizon {
            self.horizon = Some(h);
        }
    }

    pub fn apply_decision(&mut self, args: &DecisionArgs) {
        if let Some(v) = args.delta {
            self.monitor.delta = v;
        }
        if let Some(v) = args.xi_upper {
            self.monitor.xi_upper = v;
        }
        if let Some(v) = args.xi_lower {
            self.monitor.xi_lower = v;
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        self.mcmc.validate()?;
        self.monitor.validate()
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("lgp-out"))
    }
}

/// Parses week lists such as `33-35`, `30,33,35` or `1-5,8`.
pub fn parse_weeks(spec: &str) -> Result<Vec<u32>> {
    let bad = || LgpError::InvalidArgument(format!("cannot read week list {spec:?}"));
    let mut weeks = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let a: u32 = a.trim().parse().map_err(|_| bad())?;
                let b: u32 = b.trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                weeks.extend(a..=b);
            }
            None => weeks.push(part.parse().map_err(|_| bad())?),
        }
    }
    if weeks.is_empty() {
        return Err(bad());
    }
    if weeks.windows(2).any(|w| w[1] <= w[0]) {
        return Err(LgpError::InvalidArgument(format!("weeks in {spec:?} must be strictly increasing")));
    }
    Ok(weeks)
}
