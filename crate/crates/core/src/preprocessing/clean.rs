//! Per-day signal cleaning. Every statistic is computed over the observed
//! cells of the day being cleaned.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// A continuous signal with `None` for missing cells.
pub type Signal = Vec<Option<f64>>;
/// A {0, 1} signal with `None` for missing cells.
pub type BinarySignal = Vec<Option<u8>>;

/// Output of a cleaning step.
#[derive(Debug, Clone, PartialEq)]
pub struct Cleaned {
    pub values: Signal,
    /// Fewer than two observed cells: no statistics could be computed and the
    /// whole day was blanked.
    pub insufficient: bool,
}

fn observed(values: &[Option<f64>]) -> impl Iterator<Item = f64> + '_ {
    values.iter().filter_map(|v| *v)
}

/// Blanks cells farther than three (population) standard deviations from the
/// mean. One pass; the outliers themselves take part in the statistics.
pub fn remove_outliers(values: &[Option<f64>]) -> Signal {
    let n = observed(values).count();
    if n == 0 {
        return values.to_vec();
    }
    let mean = observed(values).sum::<f64>() / n as f64;
    let var = observed(values).map(|x| (x - mean).powi(2)).sum::<f64>() / n as f64;
    let limit = 3.0 * var.sqrt();
    values
        .iter()
        .map(|v| v.filter(|x| (x - mean).abs() <= limit))
        .collect()
}

/// Most frequent value after rounding to three decimals; ties go to the
/// smallest value.
pub fn signal_mode(values: &[Option<f64>]) -> Option<f64> {
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for x in observed(values) {
        *counts.entry((x * 1000.0).round() as i64).or_default() += 1;
    }
    // BTreeMap iterates ascending, so the first maximum is the smallest value.
    let mut best: Option<(i64, usize)> = None;
    for (&k, &c) in &counts {
        if best.is_none_or(|(_, bc)| c > bc) {
            best = Some((k, c));
        }
    }
    best.map(|(k, _)| k as f64 / 1000.0)
}

/// Affine map of the observed range onto [0, 1]; a constant signal maps to 0.
pub fn min_max_normalize(values: &[Option<f64>]) -> Signal {
    let lo = observed(values).fold(f64::INFINITY, f64::min);
    let hi = observed(values).fold(f64::NEG_INFINITY, f64::max);
    let span = hi - lo;
    values
        .iter()
        .map(|v| v.map(|x| if span > 0.0 { ((x - lo) / span).clamp(0.0, 1.0) } else { 0.0 }))
        .collect()
}

fn blank(len: usize) -> Cleaned {
    Cleaned {
        values: vec![None; len],
        insufficient: true,
    }
}

/// Outlier removal, mode-bias subtraction, negative dismissal, then min-max
/// normalisation.
pub fn clean_actigraphy(values: &[Option<f64>]) -> Cleaned {
    if observed(values).count() < 2 {
        return blank(values.len());
    }
    let kept = remove_outliers(values);
    let bias = signal_mode(&kept).unwrap_or(0.0);
    let debiased: Signal = kept.iter().map(|v| v.map(|x| x - bias).filter(|&x| x >= 0.0)).collect();
    Cleaned {
        values: min_max_normalize(&debiased),
        insufficient: false,
    }
}

/// Outlier removal then min-max normalisation.
pub fn clean_light(values: &[Option<f64>]) -> Cleaned {
    if observed(values).count() < 2 {
        return blank(values.len());
    }
    Cleaned {
        values: min_max_normalize(&remove_outliers(values)),
        insufficient: false,
    }
}

/// Movement indicator: 1 where the count is positive. Negative counts become
/// missing and are counted in the second return value.
pub fn binarize_steps(values: &[Option<f64>]) -> (BinarySignal, usize) {
    let mut negatives = 0;
    let out = values
        .iter()
        .map(|v| match *v {
            Some(x) if x < 0.0 => {
                negatives += 1;
                None
            }
            Some(x) => Some(u8::from(x > 0.0)),
            None => None,
        })
        .collect();
    (out, negatives)
}

/// Cellwise OR of app usage and unlocks. A missing side defers to the
/// observed one.
pub fn merge_usage(app_usage: &[Option<u8>], unlocks: &[Option<u8>]) -> Result<BinarySignal> {
    if app_usage.len() != unlocks.len() {
        return Err(Error::invalid("usage signals differ in length"));
    }
    app_usage
        .iter()
        .zip(unlocks)
        .enumerate()
        .map(|(t, (a, u))| {
            for v in [a, u].into_iter().flatten() {
                if *v > 1 {
                    return Err(Error::invalid(format!("non-binary usage value {v} at slot {t}")));
                }
            }
            Ok(match (a, u) {
                (Some(a), Some(u)) => Some(a | u),
                (Some(x), None) | (None, Some(x)) => Some(*x),
                (None, None) => None,
            })
        })
        .collect()
}
