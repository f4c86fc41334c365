//! Browser demo: simulate a subject, fit a model, decode sleep and sweep
//! the state count. Every export returns a JSON string.

use chrono::{NaiveTime, Timelike};
use serde::Serialize;
use sleep_hhmm::hhmm::{posteriors, FitConfig, ObservationSequence, Supervision};
use sleep_hhmm::indicators::{
    asleep_states, daily_indicators, predict_days, weekly_from_days, DailyIndicators, DayRecord,
};
use sleep_hhmm::model_selection::{fit_cell, sweep};
use sleep_hhmm::preprocessing::{build_day_vectors, filter_sequences, DayVector, FilterMode, MissingThresholds};
use sleep_hhmm::synthdata::{simulate_subject, Missingness, SimulatedSubject, SubjectScenario};
use wasm_bindgen::prelude::*;

/// Knobs exposed on the page.
#[derive(Debug, Clone, Copy)]
pub struct Scenario {
    pub seed: u32,
    pub days: u32,
    /// Minutes after midnight.
    pub bedtime: u32,
    pub rise_time: u32,
    pub free_day_shift: f64,
    pub missing: f64,
}

fn clock(minutes: u32) -> Result<NaiveTime, String> {
    NaiveTime::from_num_seconds_from_midnight_opt((minutes % 1440) * 60, 0).ok_or_else(|| "bad clock time".to_string())
}

fn simulate(s: &Scenario) -> Result<(SimulatedSubject, Vec<DayVector>), String> {
    if !(0.0..0.9).contains(&s.missing) {
        return Err("missingness must lie in [0, 0.9)".into());
    }
    if !(2..=60).contains(&s.days) {
        return Err("days must lie in 2..=60".into());
    }
    let scenario = SubjectScenario {
        sleep_start: clock(s.bedtime)?,
        sleep_end: clock(s.rise_time)?,
        free_day_shift_minutes: s.free_day_shift,
        missingness: Missingness::uniform(s.missing),
        seed: u64::from(s.seed),
        ..SubjectScenario::default()
    };
    let subject = simulate_subject(&scenario, "demo", s.days as usize, 0).map_err(|e| e.to_string())?;
    let (days, _) = build_day_vectors(&subject.records, |_| chrono_tz::UTC).map_err(|e| e.to_string())?;
    let (days, _) = filter_sequences(days, FilterMode::EvalComplete, &MissingThresholds::default());
    if days.is_empty() {
        return Err("no usable days; lower the missingness".into());
    }
    Ok((subject, days))
}

fn sequences(days: &[DayVector]) -> Vec<ObservationSequence> {
    days.iter().map(|d| d.sequence.clone()).collect()
}

#[derive(Serialize)]
struct Indicators {
    start: String,
    end: String,
    spt: f64,
    cm: String,
}

impl From<DailyIndicators> for Indicators {
    fn from(d: DailyIndicators) -> Self {
        let hhmm = |m: f64| {
            let t = sleep_hhmm::indicators::time_of_day(m);
            format!("{:02}:{:02}", t.hour(), t.minute())
        };
        Self {
            start: hhmm(d.start),
            end: hhmm(d.end),
            spt: d.spt,
            cm: hhmm(d.cm),
        }
    }
}

#[derive(Serialize)]
struct DecodedDay {
    date: String,
    truth: Vec<u8>,
    predicted: Vec<u8>,
    /// Posterior probability of the asleep states per slot.
    p_asleep: Vec<f64>,
    /// Cleaned actigraphy, `null` where missing.
    actigraphy: Vec<Option<f64>>,
    truth_indicators: Option<Indicators>,
    predicted_indicators: Option<Indicators>,
}

#[derive(Serialize)]
struct WeekSummary {
    week: String,
    truth_sj: Option<f64>,
    predicted_sj: Option<f64>,
}

#[derive(Serialize)]
struct Decoded {
    n_states: usize,
    asleep_states: Vec<usize>,
    loglik: f64,
    iterations: usize,
    accuracy: f64,
    days: Vec<DecodedDay>,
    weeks: Vec<WeekSummary>,
}

fn sj_by_week(records: &[DayRecord]) -> Vec<(String, Option<f64>)> {
    weekly_from_days(records)
        .into_iter()
        .map(|w| (w.key.label(), w.result.ok().map(|r| r.sj)))
        .collect()
}

/// Simulates a subject, fits a semi-supervised model with two silent states
/// and decodes every usable day.
pub fn decode(s: &Scenario, n_states: usize) -> Result<String, String> {
    let (subject, days) = simulate(s)?;
    let seqs = sequences(&days);
    let fit = FitConfig {
        seed: u64::from(s.seed),
        ..FitConfig::default()
    };
    let sup = Supervision::SemiSupervised { silent_states: 2 };
    let (out, _) = fit_cell(&seqs, n_states, sup, &fit, 1).map_err(|(e, _)| e.to_string())?;
    let asleep = asleep_states(&out.params, 2).map_err(|e| e.to_string())?;
    let preds = predict_days(&out.params, &days, &asleep, 3).map_err(|e| e.to_string())?;

    let calendar = SubjectScenario::default().calendar;
    let (mut hits, mut total) = (0usize, 0usize);
    let mut decoded = Vec::new();
    let mut truth_records = Vec::new();
    let mut pred_records = Vec::new();
    for (day, pred) in days.iter().zip(preds) {
        let Some(truth) = subject.truth.iter().find(|t| t.date == day.date) else {
            continue;
        };
        hits += truth.binary.iter().zip(&pred.binary).filter(|(a, b)| a == b).count();
        total += truth.binary.len();
        let gamma = posteriors(&out.params, &day.sequence).map_err(|e| e.to_string())?.gamma;
        let predicted = pred.episode.map(daily_indicators);
        let day_type = calendar.classify(day.date);
        truth_records.push(DayRecord {
            subject_id: subject.subject_id.clone(),
            date: day.date,
            day_type,
            indicators: Some(truth.indicators),
        });
        pred_records.push(DayRecord {
            subject_id: subject.subject_id.clone(),
            date: day.date,
            day_type,
            indicators: predicted,
        });
        decoded.push(DecodedDay {
            date: day.date.to_string(),
            truth: truth.binary.clone(),
            predicted: pred.binary,
            p_asleep: gamma.iter().map(|g| asleep.iter().map(|&q| g[q]).sum()).collect(),
            actigraphy: day.sequence.continuous_channel(0),
            truth_indicators: Some(truth.indicators.into()),
            predicted_indicators: predicted.map(Indicators::from),
        });
    }
    let predicted_sj = sj_by_week(&pred_records);
    let weeks = sj_by_week(&truth_records)
        .into_iter()
        .map(|(week, truth_sj)| WeekSummary {
            predicted_sj: predicted_sj.iter().find(|(w, _)| *w == week).and_then(|(_, v)| *v),
            week,
            truth_sj,
        })
        .collect();
    let result = Decoded {
        n_states,
        asleep_states: asleep,
        loglik: out.final_loglik(),
        iterations: out.loglik_trace.len() - 1,
        accuracy: hits as f64 / total.max(1) as f64,
        days: decoded,
        weeks,
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct SweepPoint {
    n_states: usize,
    loglik: Option<f64>,
    bic: Option<f64>,
    aic: Option<f64>,
}

#[derive(Serialize)]
struct Sweep {
    best_by_bic: Option<usize>,
    points: Vec<SweepPoint>,
}

/// BIC and AIC for every state count in `min..=max` with two silent states.
pub fn bic_sweep(s: &Scenario, min_states: usize, max_states: usize) -> Result<String, String> {
    if min_states < 2 || min_states > max_states || max_states > 12 {
        return Err("state range must satisfy 2 <= min <= max <= 12".into());
    }
    let (_, days) = simulate(s)?;
    let fit = FitConfig {
        seed: u64::from(s.seed),
        ..FitConfig::default()
    };
    let sup = Supervision::SemiSupervised { silent_states: 2 };
    let report = sweep(&sequences(&days), min_states..=max_states, &[sup], &fit, 1).map_err(|e| e.to_string())?;
    let result = Sweep {
        best_by_bic: report.best_by_bic(None).map(|r| r.n_states),
        points: report
            .rows
            .iter()
            .map(|r| SweepPoint {
                n_states: r.n_states,
                loglik: r.loglik,
                bic: r.bic,
                aic: r.aic,
            })
            .collect(),
    };
    serde_json::to_string(&result).map_err(|e| e.to_string())
}

#[allow(clippy::too_many_arguments)]
fn scenario(seed: u32, days: u32, bedtime: u32, rise_time: u32, free_day_shift: f64, missing: f64) -> Scenario {
    Scenario {
        seed,
        days,
        bedtime,
        rise_time,
        free_day_shift,
        missing,
    }
}

#[wasm_bindgen(js_name = decodeSubject)]
#[allow(clippy::too_many_arguments)]
pub fn decode_subject(
    seed: u32,
    days: u32,
    bedtime: u32,
    rise_time: u32,
    free_day_shift: f64,
    missing: f64,
    n_states: u32,
) -> Result<String, JsValue> {
    decode(&scenario(seed, days, bedtime, rise_time, free_day_shift, missing), n_states as usize).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen(js_name = bicSweep)]
#[allow(clippy::too_many_arguments)]
pub fn bic_sweep_js(
    seed: u32,
    days: u32,
    bedtime: u32,
    rise_time: u32,
    free_day_shift: f64,
    missing: f64,
    min_states: u32,
    max_states: u32,
) -> Result<String, JsValue> {
    bic_sweep(
        &scenario(seed, days, bedtime, rise_time, free_day_shift, missing),
        min_states as usize,
        max_states as usize,
    )
    .map_err(|e| JsValue::from_str(&e))
}
