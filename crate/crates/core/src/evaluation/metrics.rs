use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-sequence scores with asleep as the positive class. A ratio whose
/// denominator is zero is `None`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassificationMetrics {
    pub accuracy: f64,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub n_slots: usize,
}

/// Scores `pred` against `truth` over the slots where `mask` is set.
pub fn classification_metrics(pred: &[u8], truth: &[u8], mask: &[bool]) -> Result<ClassificationMetrics> {
    if pred.len() != truth.len() || mask.len() != truth.len() {
        return Err(Error::invalid("prediction, truth and mask differ in length"));
    }
    let (mut tp, mut tn, mut fp, mut fn_) = (0usize, 0usize, 0usize, 0usize);
    for ((&p, &t), _) in pred.iter().zip(truth).zip(mask).filter(|(_, &m)| m) {
        match (p == 1, t == 1) {
            (true, true) => tp += 1,
            (false, false) => tn += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
        }
    }
    let n = tp + tn + fp + fn_;
    if n == 0 {
        return Err(Error::invalid("no slots with reference labels"));
    }
    let ratio = |a: usize, b: usize| (a + b > 0).then(|| a as f64 / (a + b) as f64);
    Ok(ClassificationMetrics {
        accuracy: (tp + tn) as f64 / n as f64,
        sensitivity: ratio(tp, fn_),
        specificity: ratio(tn, fp),
        n_slots: n,
    })
}

/// Mean and population standard deviation over the defined values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanStd {
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub n: usize,
}

impl MeanStd {
    pub fn of(values: impl IntoIterator<Item = Option<f64>>) -> Self {
        let xs: Vec<f64> = values.into_iter().flatten().collect();
        if xs.is_empty() {
            return Self { mean: None, std: None, n: 0 };
        }
        let n = xs.len() as f64;
        let mean = xs.iter().sum::<f64>() / n;
        let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
        Self {
            mean: Some(mean),
            std: Some(var.sqrt()),
            n: xs.len(),
        }
    }
}

/// Errors in minutes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub rmse: f64,
    pub mae: f64,
    pub n: usize,
}

/// RMSE and MAE over `(predicted, reference)` pairs.
pub fn indicator_errors(pairs: &[(f64, f64)]) -> Result<ErrorStats> {
    if pairs.is_empty() {
        return Err(Error::invalid("no indicator pairs to compare"));
    }
    let n = pairs.len() as f64;
    let sq = pairs.iter().map(|(p, t)| (p - t).powi(2)).sum::<f64>() / n;
    let abs = pairs.iter().map(|(p, t)| (p - t).abs()).sum::<f64>() / n;
    Ok(ErrorStats {
        rmse: sq.sqrt(),
        mae: abs,
        n: pairs.len(),
    })
}
