//! Run configuration. Every command-line flag overrides a key here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use sleep_hhmm::hhmm::{FitConfig, Supervision};
use sleep_hhmm::indicators::{DayCalendar, DEFAULT_MERGE_GAP};
use sleep_hhmm::preprocessing::{FilterMode, MissingThresholds};
use sleep_hhmm::synthdata::SubjectScenario;

use crate::CliError;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads; 0 lets the runtime decide.
    pub jobs: usize,
    pub paths: Paths,
    pub preprocess: PreprocessConfig,
    pub fit: FitSection,
    pub sweep: SweepConfig,
    pub indicators: IndicatorConfig,
    pub evaluate: EvaluateConfig,
    pub simulate: SimulateConfig,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub raw: Option<PathBuf>,
    pub days: Option<PathBuf>,
    pub train_days: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub predictions: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreprocessConfig {
    pub timezone: String,
    /// Per-subject overrides of `timezone`.
    pub timezones: BTreeMap<String, String>,
    /// `train`, `eval-complete` or `none`.
    pub filter: String,
    pub thresholds: MissingThresholds,
    /// Largest tolerated fraction of rejected input rows.
    pub max_rejected_fraction: f64,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        Self {
            timezone: "UTC".into(),
            timezones: BTreeMap::new(),
            filter: "train".into(),
            thresholds: MissingThresholds::default(),
            max_rejected_fraction: 0.05,
        }
    }
}

impl PreprocessConfig {
    pub fn filter_mode(&self) -> Result<Option<FilterMode>, CliError> {
        match self.filter.as_str() {
            "none" => Ok(None),
            s => s.parse().map(Some).map_err(|e: sleep_hhmm::Error| CliError::Usage(e.to_string())),
        }
    }

    /// Resolves every zone up front so a bad name fails before any work.
    pub fn zones(&self) -> Result<(Tz, BTreeMap<String, Tz>), CliError> {
        let parse = |s: &str| {
            s.parse::<Tz>()
                .map_err(|_| CliError::Usage(format!("unknown timezone {s:?}")))
        };
        let default = parse(&self.timezone)?;
        let per = self
            .timezones
            .iter()
            .map(|(k, v)| Ok((k.clone(), parse(v)?)))
            .collect::<Result<_, CliError>>()?;
        Ok((default, per))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitSection {
    pub n_states: usize,
    pub supervision: Supervision,
    pub restarts: usize,
    pub max_iters: usize,
    pub rel_tol: f64,
    pub cov_floor: f64,
}

impl Default for FitSection {
    fn default() -> Self {
        let f = FitConfig::default();
        Self {
            n_states: 6,
            supervision: Supervision::SemiSupervised { silent_states: 2 },
            restarts: 1,
            max_iters: f.max_iters,
            rel_tol: f.rel_tol,
            cov_floor: f.cov_floor,
        }
    }
}

impl FitSection {
    pub fn fit_config(&self, seed: u64) -> FitConfig {
        FitConfig {
            max_iters: self.max_iters,
            rel_tol: self.rel_tol,
            cov_floor: self.cov_floor,
            seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepConfig {
    pub min_states: usize,
    pub max_states: usize,
    pub configs: Vec<Supervision>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            min_states: 3,
            max_states: 10,
            configs: vec![
                Supervision::Unsupervised,
                Supervision::SemiSupervised { silent_states: 1 },
                Supervision::SemiSupervised { silent_states: 2 },
            ],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IndicatorConfig {
    /// Explicit asleep states; when empty the model's silent states are used,
    /// or `fallback_asleep` quiet states for an unsupervised model.
    pub asleep_states: Vec<usize>,
    pub fallback_asleep: usize,
    pub merge_gap: usize,
    pub calendar: DayCalendar,
}

impl Default for IndicatorConfig {
    fn default() -> Self {
        Self {
            asleep_states: Vec::new(),
            fallback_asleep: 2,
            merge_gap: DEFAULT_MERGE_GAP,
            calendar: DayCalendar::default(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    pub baselines: bool,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self { baselines: true }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub subjects: usize,
    pub days: usize,
    /// `csv` or `jsonl`.
    pub format: String,
    pub scenario: SubjectScenario,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            subjects: 30,
            days: 20,
            format: "csv".into(),
            scenario: SubjectScenario::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let t = &self.preprocess.thresholds;
        for (name, v) in [
            ("actigraphy", t.actigraphy),
            ("light", t.light),
            ("steps", t.steps),
            ("usage", t.usage),
            ("max_rejected_fraction", self.preprocess.max_rejected_fraction),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(CliError::Usage(format!("threshold {name} = {v} is outside [0, 1]")));
            }
        }
        if self.sweep.min_states == 0 || self.sweep.min_states > self.sweep.max_states {
            return Err(CliError::Usage("sweep state range is empty".into()));
        }
        Ok(())
    }
}
