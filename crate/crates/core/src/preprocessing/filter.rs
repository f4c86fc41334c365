use serde::{Deserialize, Serialize};

use super::day::DayVector;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterMode {
    /// Missing-fraction thresholds plus every channel present.
    Train,
    /// Every channel present at least once.
    EvalComplete,
}

impl std::str::FromStr for FilterMode {
    type Err = crate::Error;
    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "train" => Ok(FilterMode::Train),
            "eval-complete" => Ok(FilterMode::EvalComplete),
            _ => Err(crate::Error::invalid(format!("unknown filter mode {s:?}"))),
        }
    }
}

/// Largest allowed missing fraction per channel; a day passes only when
/// strictly below each.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MissingThresholds {
    pub actigraphy: f64,
    pub light: f64,
    pub steps: f64,
    pub usage: f64,
}

impl Default for MissingThresholds {
    fn default() -> Self {
        Self {
            actigraphy: 0.2,
            light: 0.3,
            steps: 0.2,
            usage: 0.2,
        }
    }
}

impl MissingThresholds {
    fn as_array(&self) -> [f64; 4] {
        [self.actigraphy, self.light, self.steps, self.usage]
    }
}

pub fn passes(day: &DayVector, mode: FilterMode, thresholds: &MissingThresholds) -> bool {
    let fractions = day.missing_fractions();
    if fractions.iter().any(|&f| f >= 1.0) {
        return false;
    }
    match mode {
        FilterMode::EvalComplete => true,
        FilterMode::Train => fractions.iter().zip(thresholds.as_array()).all(|(f, limit)| *f < limit),
    }
}

/// Splits days into (kept, dropped), preserving order.
pub fn filter_sequences(
    days: Vec<DayVector>,
    mode: FilterMode,
    thresholds: &MissingThresholds,
) -> (Vec<DayVector>, Vec<DayVector>) {
    days.into_iter().partition(|d| passes(d, mode, thresholds))
}
