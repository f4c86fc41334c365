//! Decoded state paths to sleep episodes and the daily and weekly sleep
//! indicators.
//!
//! Every time is kept as minutes since the window opens at 14:00, so a night
//! never wraps around midnight inside one window.

use std::collections::BTreeMap;
use std::io::Write;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, NaiveTime, Weekday};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hhmm::{default_window_start, viterbi, HhmmParams, SLOT_MINUTES};
use crate::preprocessing::DayVector;

/// Default number of awake slots bridged inside one sleep episode.
pub const DEFAULT_MERGE_GAP: usize = 3;

/// Days needed for a week to count.
pub const MIN_DAYS_PER_WEEK: usize = 4;

/// 1 where the path sits in an asleep state.
pub fn states_to_binary(path: &[usize], asleep_states: &[usize]) -> Vec<u8> {
    path.iter().map(|s| u8::from(asleep_states.contains(s))).collect()
}

/// Half-open slot range `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Episode {
    pub start: usize,
    pub end: usize,
}

/// Main sleep episode: asleep runs separated by at most `merge_gap` awake
/// slots are merged, and the merged run holding the most asleep slots wins
/// (earliest on ties).
pub fn extract_main_sleep(binary: &[u8], merge_gap: usize) -> Option<Episode> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    let mut t = 0;
    while t < binary.len() {
        if binary[t] == 1 {
            let s = t;
            while t < binary.len() && binary[t] == 1 {
                t += 1;
            }
            runs.push((s, t));
        } else {
            t += 1;
        }
    }
    // (start, end, asleep mass)
    let mut merged: Vec<(usize, usize, usize)> = Vec::new();
    for (s, e) in runs {
        match merged.last_mut() {
            Some(last) if s - last.1 <= merge_gap => {
                last.1 = e;
                last.2 += e - s;
            }
            _ => merged.push((s, e, e - s)),
        }
    }
    let mut best: Option<(usize, usize, usize)> = None;
    for m in merged {
        if best.is_none_or(|b| m.2 > b.2) {
            best = Some(m);
        }
    }
    best.map(|(start, end, _)| Episode { start, end })
}

/// A decoded day.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SleepPrediction {
    pub path: Vec<usize>,
    pub binary: Vec<u8>,
    pub episode: Option<Episode>,
}

impl SleepPrediction {
    pub fn new(path: Vec<usize>, asleep_states: &[usize], merge_gap: usize) -> Self {
        let binary = states_to_binary(&path, asleep_states);
        let episode = extract_main_sleep(&binary, merge_gap);
        Self { path, binary, episode }
    }
}

/// Times in minutes since the window opens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DailyIndicators {
    pub start: f64,
    pub end: f64,
    pub spt: f64,
    pub cm: f64,
}

pub fn daily_indicators(episode: Episode) -> DailyIndicators {
    let slot = f64::from(SLOT_MINUTES);
    let start = episode.start as f64 * slot;
    let end = episode.end as f64 * slot;
    let spt = end - start;
    DailyIndicators {
        start,
        end,
        spt,
        cm: start + spt / 2.0,
    }
}

/// Wall-clock instant of a window-axis time for the window opening on `date`.
pub fn clock_at(date: NaiveDate, minutes: f64) -> NaiveDateTime {
    date.and_time(default_window_start()) + Duration::seconds((minutes * 60.0).round() as i64)
}

/// Time of day of a window-axis time, wrapping past midnight.
pub fn time_of_day(minutes: f64) -> NaiveTime {
    default_window_start() + Duration::seconds((minutes * 60.0).round() as i64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DayType {
    Working,
    Free,
}

/// Which nights count as free. A window is classified by the date on which
/// its sleep ends, so with the default weekend the Friday and Saturday nights
/// are free.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DayCalendar {
    pub free_weekdays: Vec<Weekday>,
    /// Per-date overrides keyed by wake date, e.g. public holidays.
    pub overrides: BTreeMap<NaiveDate, DayType>,
}

impl Default for DayCalendar {
    fn default() -> Self {
        Self {
            free_weekdays: vec![Weekday::Sat, Weekday::Sun],
            overrides: BTreeMap::new(),
        }
    }
}

impl DayCalendar {
    /// Day type of the window opening on `window_date`.
    pub fn classify(&self, window_date: NaiveDate) -> DayType {
        let wake = window_date.succ_opt().expect("date in range");
        if let Some(&t) = self.overrides.get(&wake) {
            return t;
        }
        if self.free_weekdays.contains(&wake.weekday()) {
            DayType::Free
        } else {
            DayType::Working
        }
    }
}

/// Indicators for one subject-day; `indicators` is empty when no sleep was
/// found.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayRecord {
    pub subject_id: String,
    pub date: NaiveDate,
    pub day_type: DayType,
    pub indicators: Option<DailyIndicators>,
}

/// Weekly summaries in minutes on the window axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeeklyIndicators {
    pub mean_start: f64,
    pub mean_end: f64,
    pub mean_spt: f64,
    pub max_spt: f64,
    pub min_spt: f64,
    pub mean_cm: f64,
    pub sj: f64,
    pub n_days: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeekRejected {
    TooFewDays,
    MissingDayType,
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    s / n as f64
}

/// Weekly indicators from the days with sleep. The week needs at least
/// [`MIN_DAYS_PER_WEEK`] such days including both a working and a free day.
pub fn weekly_indicators(days: &[(DayType, DailyIndicators)]) -> std::result::Result<WeeklyIndicators, WeekRejected> {
    if days.len() < MIN_DAYS_PER_WEEK {
        return Err(WeekRejected::TooFewDays);
    }
    let cm_of = |t: DayType| days.iter().filter(move |d| d.0 == t).map(|d| d.1.cm);
    if cm_of(DayType::Free).next().is_none() || cm_of(DayType::Working).next().is_none() {
        return Err(WeekRejected::MissingDayType);
    }
    let spt = || days.iter().map(|d| d.1.spt);
    Ok(WeeklyIndicators {
        mean_start: mean(days.iter().map(|d| d.1.start)),
        mean_end: mean(days.iter().map(|d| d.1.end)),
        mean_spt: mean(spt()),
        max_spt: spt().fold(f64::NEG_INFINITY, f64::max),
        min_spt: spt().fold(f64::INFINITY, f64::min),
        mean_cm: mean(days.iter().map(|d| d.1.cm)),
        sj: (mean(cm_of(DayType::Free)) - mean(cm_of(DayType::Working))).abs(),
        n_days: days.len(),
    })
}

/// Subject and ISO week (of the window date).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct WeekKey {
    pub subject_id: String,
    pub year: i32,
    pub week: u32,
}

impl WeekKey {
    pub fn label(&self) -> String {
        format!("{}-W{:02}", self.year, self.week)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeekRecord {
    pub key: WeekKey,
    pub result: std::result::Result<WeeklyIndicators, WeekRejected>,
}

/// Groups day records by subject and ISO week and summarises each group.
/// Days without sleep are left out before the week filter.
pub fn weekly_from_days(days: &[DayRecord]) -> Vec<WeekRecord> {
    let mut groups: BTreeMap<WeekKey, Vec<(DayType, DailyIndicators)>> = BTreeMap::new();
    for d in days {
        let iso = d.date.iso_week();
        let key = WeekKey {
            subject_id: d.subject_id.clone(),
            year: iso.year(),
            week: iso.week(),
        };
        let entry = groups.entry(key).or_default();
        if let Some(ind) = d.indicators {
            entry.push((d.day_type, ind));
        }
    }
    groups
        .into_iter()
        .map(|(key, days)| WeekRecord {
            key,
            result: weekly_indicators(&days),
        })
        .collect()
}

/// States labelled asleep: the fully frozen states when there are any,
/// otherwise the `fallback_k` states with the smallest
/// `mean actigraphy + p(usage = 1)` (actigraphy is continuous channel 0,
/// usage the last discrete channel).
pub fn asleep_states(params: &HhmmParams, fallback_k: usize) -> Result<Vec<usize>> {
    let frozen = params.fully_frozen_states();
    if !frozen.is_empty() {
        return Ok(frozen);
    }
    if fallback_k == 0 || fallback_k > params.n_states() {
        return Err(Error::invalid(format!(
            "cannot label {fallback_k} of {} states asleep",
            params.n_states()
        )));
    }
    let score = |i: usize| {
        let act = params.means[i].first().copied().unwrap_or(0.0);
        let usage = params.disc_probs.last().and_then(|ch| ch[i].get(1)).copied().unwrap_or(0.0);
        act + usage
    };
    let mut order: Vec<usize> = (0..params.n_states()).collect();
    order.sort_by(|&a, &b| score(a).total_cmp(&score(b)).then(a.cmp(&b)));
    let mut chosen = order[..fallback_k].to_vec();
    chosen.sort_unstable();
    Ok(chosen)
}

/// Viterbi-decodes each day and maps it to sleep.
pub fn predict_days(
    params: &HhmmParams,
    days: &[DayVector],
    asleep_states: &[usize],
    merge_gap: usize,
) -> Result<Vec<SleepPrediction>> {
    let run = |d: &DayVector| viterbi(params, &d.sequence).map(|path| SleepPrediction::new(path, asleep_states, merge_gap));
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        days.par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        days.iter().map(run).collect()
    }
}

fn whole_minutes(x: f64) -> String {
    format!("{}", x.round() as i64)
}

pub fn write_daily_csv<W: Write>(days: &[DayRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "date", "day_type", "start", "end", "spt_min", "cm"])?;
    let iso = |dt: NaiveDateTime| dt.format("%Y-%m-%dT%H:%M:%S").to_string();
    for d in days {
        let day_type = match d.day_type {
            DayType::Working => "working",
            DayType::Free => "free",
        };
        let mut row = vec![d.subject_id.clone(), d.date.to_string(), day_type.to_string()];
        match d.indicators {
            Some(ind) => row.extend([
                iso(clock_at(d.date, ind.start)),
                iso(clock_at(d.date, ind.end)),
                whole_minutes(ind.spt),
                iso(clock_at(d.date, ind.cm)),
            ]),
            None => row.extend(std::iter::repeat_n(String::new(), 4)),
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Accepted weeks only; times of day as `HH:MM:SS`, durations in whole
/// minutes.
pub fn write_weekly_csv<W: Write>(weeks: &[WeekRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "subject_id", "week", "n_days", "mean_start", "mean_end", "mean_spt_min", "max_spt_min", "min_spt_min",
        "mean_cm", "sj_min",
    ])?;
    let tod = |m: f64| time_of_day(m).format("%H:%M:%S").to_string();
    for wk in weeks {
        let Ok(ind) = &wk.result else { continue };
        w.write_record([
            wk.key.subject_id.clone(),
            wk.key.label(),
            ind.n_days.to_string(),
            tod(ind.mean_start),
            tod(ind.mean_end),
            whole_minutes(ind.mean_spt),
            whole_minutes(ind.max_spt),
            whole_minutes(ind.min_spt),
            tod(ind.mean_cm),
            whole_minutes(ind.sj),
        ])?;
    }
    w.flush()?;
    Ok(())
}
