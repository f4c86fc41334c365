use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::{Deserialize, Serialize};

use super::metrics::{classification_metrics, indicator_errors, ClassificationMetrics, ErrorStats, MeanStd};
use super::reference::{DayKey, ReferenceSet};
use crate::error::{Error, Result};
use crate::indicators::{
    daily_indicators, extract_main_sleep, weekly_from_days, DailyIndicators, DayCalendar, DayRecord, WeekKey,
    WeeklyIndicators,
};

/// Binary predictions of one method, keyed by subject and window date.
pub type Predictions = BTreeMap<DayKey, Vec<u8>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequenceScore {
    pub subject_id: String,
    pub date: chrono::NaiveDate,
    #[serde(flatten)]
    pub metrics: ClassificationMetrics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub method: String,
    pub n_sequences: usize,
    pub accuracy: MeanStd,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub per_sequence: Vec<SequenceScore>,
    /// Daily indicator errors in minutes, keyed by indicator name.
    pub daily_errors: BTreeMap<String, ErrorStats>,
    /// Weekly indicator errors in minutes, over weeks accepted on both sides.
    pub weekly_errors: BTreeMap<String, ErrorStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Class counted as positive by sensitivity.
    pub positive_class: String,
    pub methods: Vec<MethodReport>,
}

/// Settings shared by every scored method.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringRules {
    pub calendar: DayCalendar,
    pub merge_gap: usize,
}

fn day_records(days: impl Iterator<Item = (DayKey, Option<DailyIndicators>)>, calendar: &DayCalendar) -> Vec<DayRecord> {
    days.map(|((subject_id, date), indicators)| DayRecord {
        subject_id,
        date,
        day_type: calendar.classify(date),
        indicators,
    })
    .collect()
}

fn weekly_map(days: &[DayRecord]) -> BTreeMap<WeekKey, WeeklyIndicators> {
    weekly_from_days(days)
        .into_iter()
        .filter_map(|w| w.result.ok().map(|r| (w.key, r)))
        .collect()
}

fn errors_by<T>(pairs: &[(T, T)], fields: &[(&str, fn(&T) -> f64)]) -> BTreeMap<String, ErrorStats> {
    fields
        .iter()
        .filter_map(|(name, get)| {
            let xs: Vec<(f64, f64)> = pairs.iter().map(|(p, t)| (get(p), get(t))).collect();
            indicator_errors(&xs).ok().map(|e| (name.to_string(), e))
        })
        .collect()
}

fn score_one(
    method: &str,
    preds: &Predictions,
    days: &BTreeSet<DayKey>,
    reference: &ReferenceSet,
    rules: &ScoringRules,
) -> Result<MethodReport> {
    let mut per_sequence = Vec::new();
    let mut pred_days = Vec::new();
    let mut ref_days = Vec::new();
    for key in days {
        let pred = &preds[key];
        let day = &reference[key];
        if pred.len() != day.labels.len() {
            return Err(Error::invalid(format!("{method}: prediction for {} {} has the wrong length", key.0, key.1)));
        }
        let truth: Vec<u8> = day.labels.iter().map(|v| v.unwrap_or(0)).collect();
        let mask: Vec<bool> = day.labels.iter().map(Option::is_some).collect();
        let metrics = classification_metrics(pred, &truth, &mask)?;
        per_sequence.push(SequenceScore {
            subject_id: key.0.clone(),
            date: key.1,
            metrics,
        });
        pred_days.push((key.clone(), extract_main_sleep(pred, rules.merge_gap).map(daily_indicators)));
        ref_days.push((key.clone(), day.indicators));
    }

    let daily_pairs: Vec<(DailyIndicators, DailyIndicators)> = pred_days
        .iter()
        .zip(&ref_days)
        .filter_map(|((_, p), (_, t))| Some(((*p)?, (*t)?)))
        .collect();
    let daily_errors = errors_by(
        &daily_pairs,
        &[
            ("start", |d| d.start),
            ("end", |d| d.end),
            ("spt", |d| d.spt),
            ("cm", |d| d.cm),
        ],
    );

    let pw = weekly_map(&day_records(pred_days.into_iter(), &rules.calendar));
    let tw = weekly_map(&day_records(ref_days.into_iter(), &rules.calendar));
    let weekly_pairs: Vec<(WeeklyIndicators, WeeklyIndicators)> =
        pw.iter().filter_map(|(k, p)| tw.get(k).map(|t| (p.clone(), t.clone()))).collect();
    let weekly_errors = errors_by(
        &weekly_pairs,
        &[
            ("mean_start", |w| w.mean_start),
            ("mean_end", |w| w.mean_end),
            ("mean_spt", |w| w.mean_spt),
            ("max_spt", |w| w.max_spt),
            ("min_spt", |w| w.min_spt),
            ("mean_cm", |w| w.mean_cm),
            ("sj", |w| w.sj),
        ],
    );

    Ok(MethodReport {
        method: method.to_string(),
        n_sequences: per_sequence.len(),
        accuracy: MeanStd::of(per_sequence.iter().map(|s| Some(s.metrics.accuracy))),
        sensitivity: MeanStd::of(per_sequence.iter().map(|s| s.metrics.sensitivity)),
        specificity: MeanStd::of(per_sequence.iter().map(|s| s.metrics.specificity)),
        per_sequence,
        daily_errors,
        weekly_errors,
    })
}

impl EvalReport {
    /// Scores every method on the same days: those present in the reference
    /// and in every method's predictions.
    pub fn build(methods: &[(String, Predictions)], reference: &ReferenceSet, rules: &ScoringRules) -> Result<Self> {
        if methods.is_empty() {
            return Err(Error::invalid("no methods to evaluate"));
        }
        let mut days: BTreeSet<DayKey> = reference.keys().cloned().collect();
        for (_, p) in methods {
            days.retain(|k| p.contains_key(k));
        }
        if days.is_empty() {
            return Err(Error::invalid("no day has both predictions and reference labels"));
        }
        let methods = methods
            .iter()
            .map(|(name, p)| score_one(name, p, &days, reference, rules))
            .collect::<Result<_>>()?;
        Ok(Self {
            positive_class: "asleep".into(),
            methods,
        })
    }

    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.method == name)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// One row per method: mean and std of each classification metric.
    pub fn write_summary_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record([
            "method",
            "n_sequences",
            "accuracy_mean",
            "accuracy_std",
            "sensitivity_mean",
            "sensitivity_std",
            "specificity_mean",
            "specificity_std",
        ])?;
        let f = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        for m in &self.methods {
            w.write_record([
                m.method.clone(),
                m.n_sequences.to_string(),
                f(m.accuracy.mean),
                f(m.accuracy.std),
                f(m.sensitivity.mean),
                f(m.sensitivity.std),
                f(m.specificity.mean),
                f(m.specificity.std),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    /// One row per method and indicator.
    pub fn write_indicator_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["method", "level", "indicator", "rmse_min", "mae_min", "n"])?;
        for m in &self.methods {
            for (level, map) in [("daily", &m.daily_errors), ("weekly", &m.weekly_errors)] {
                for (name, e) in map {
                    w.write_record([
                        m.method.clone(),
                        level.to_string(),
                        name.clone(),
                        format!("{:.3}", e.rmse),
                        format!("{:.3}", e.mae),
                        e.n.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::evaluation::reference::ReferenceDay;
    use chrono::NaiveDate;

    fn night(start: usize, end: usize) -> Vec<u8> {
        (0..144).map(|t| u8::from(t >= start && t < end)).collect()
    }

    fn reference(days: usize) -> ReferenceSet {
        (0..days)
            .map(|d| {
                let date = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap() + chrono::Duration::days(d as i64);
                let labels = night(57, 105).into_iter().map(Some).collect();
                let ind = daily_indicators(crate::indicators::Episode { start: 57, end: 105 });
                (("s".to_string(), date), ReferenceDay { labels, indicators: Some(ind) })
            })
            .collect()
    }

    fn rules() -> ScoringRules {
        ScoringRules {
            calendar: DayCalendar::default(),
            merge_gap: 3,
        }
    }

    #[test]
    fn truth_as_prediction_scores_perfectly() {
        let r = reference(14);
        let preds: Predictions = r.keys().map(|k| (k.clone(), night(57, 105))).collect();
        let rep = EvalReport::build(&[("hhmm".into(), preds)], &r, &rules()).unwrap();
        let m = rep.method("hhmm").unwrap();
        assert_eq!(m.accuracy.mean, Some(1.0));
        assert_eq!(m.sensitivity.std, Some(0.0));
        assert_eq!(m.daily_errors["spt"].rmse, 0.0);
        assert_eq!(m.weekly_errors["sj"].mae, 0.0);
        assert!(!m.weekly_errors.is_empty());
    }

    #[test]
    fn methods_share_days_and_stats_recompute() {
        let r = reference(7);
        let a: Predictions = r.keys().map(|k| (k.clone(), night(60, 105))).collect();
        let mut b: Predictions = r.keys().map(|k| (k.clone(), vec![0; 144])).collect();
        let dropped = r.keys().next().unwrap().clone();
        b.remove(&dropped);
        let rep = EvalReport::build(&[("a".into(), a), ("b".into(), b)], &r, &rules()).unwrap();
        assert_eq!(rep.methods[0].n_sequences, 6);
        assert_eq!(rep.methods[1].n_sequences, 6);
        let m = &rep.methods[0];
        let accs: Vec<f64> = m.per_sequence.iter().map(|s| s.metrics.accuracy).collect();
        let mean = accs.iter().sum::<f64>() / accs.len() as f64;
        assert_eq!(m.accuracy.mean, Some(mean));
        assert_eq!(m.daily_errors["start"].mae, 30.0);
        // all-awake predictions: zero sensitivity and no episodes
        assert_eq!(rep.methods[1].sensitivity.mean, Some(0.0));
        assert!(rep.methods[1].daily_errors.is_empty());

        let mut buf = Vec::new();
        rep.write_summary_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(2).unwrap().starts_with("b,6,"));
    }
}
