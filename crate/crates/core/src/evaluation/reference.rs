//! Reference sleep labels resampled onto the 10-minute window grid.

use std::collections::BTreeMap;
use std::io::{BufRead, Write};

use chrono::{DateTime, FixedOffset, NaiveDate};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::hhmm::{default_window_start, SLOT_MINUTES};
use crate::indicators::{daily_indicators, extract_main_sleep, DailyIndicators};
use crate::preprocessing::{window_position, SLOTS_PER_DAY};

/// Subject and window date.
pub type DayKey = (String, NaiveDate);

/// One reference sleep episode, e.g. from a wearable.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceEpisode {
    pub subject_id: String,
    pub sleep_start: DateTime<FixedOffset>,
    pub sleep_end: DateTime<FixedOffset>,
}

/// Labels for one day; `None` where the reference says nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceDay {
    pub labels: Vec<Option<u8>>,
    pub indicators: Option<DailyIndicators>,
}

pub type ReferenceSet = BTreeMap<DayKey, ReferenceDay>;

/// Minutes from the opening of `date`'s window to `ts`, by clock label.
fn axis_minutes(ts: &DateTime<FixedOffset>, zone: Tz, date: NaiveDate) -> f64 {
    let local = ts.with_timezone(&zone).naive_local();
    (local - date.and_time(default_window_start())).num_seconds() as f64 / 60.0
}

fn merged_intervals(mut iv: Vec<(f64, f64)>) -> Vec<(f64, f64)> {
    iv.retain(|(a, b)| b > a);
    iv.sort_by(|x, y| x.0.total_cmp(&y.0));
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in iv {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

/// Asleep where more than half of the slot is covered by an episode.
pub fn episodes_to_grid(episodes: &[ReferenceEpisode], date: NaiveDate, zone: Tz) -> Vec<u8> {
    let iv = merged_intervals(
        episodes
            .iter()
            .map(|e| (axis_minutes(&e.sleep_start, zone, date), axis_minutes(&e.sleep_end, zone, date)))
            .collect(),
    );
    let w = f64::from(SLOT_MINUTES);
    (0..SLOTS_PER_DAY)
        .map(|t| {
            let (lo, hi) = (t as f64 * w, (t + 1) as f64 * w);
            let covered: f64 = iv.iter().map(|&(a, b)| (b.min(hi) - a.max(lo)).max(0.0)).sum();
            u8::from(covered > w / 2.0)
        })
        .collect()
}

/// Builds labels for every window touched by an episode. The day's reference
/// indicators come from its longest episode clipped to the window.
pub fn reference_from_episodes(episodes: &[ReferenceEpisode], zone_for: impl Fn(&str) -> Tz) -> Result<ReferenceSet> {
    let mut by_day: BTreeMap<DayKey, Vec<&ReferenceEpisode>> = BTreeMap::new();
    for e in episodes {
        if e.sleep_end <= e.sleep_start {
            return Err(Error::invalid(format!(
                "reference episode for {} ends before it starts",
                e.subject_id
            )));
        }
        let zone = zone_for(&e.subject_id);
        let (first, _) = window_position(&e.sleep_start, zone);
        let last_instant = e.sleep_end - chrono::Duration::seconds(1);
        let (last, _) = window_position(&last_instant, zone);
        for date in first.iter_days().take_while(|d| *d <= last) {
            by_day.entry((e.subject_id.clone(), date)).or_default().push(e);
        }
    }
    let span = (SLOTS_PER_DAY as u32 * SLOT_MINUTES) as f64;
    let mut out = ReferenceSet::new();
    for ((subject, date), eps) in by_day {
        let zone = zone_for(&subject);
        let owned: Vec<ReferenceEpisode> = eps.iter().map(|e| (*e).clone()).collect();
        let labels = episodes_to_grid(&owned, date, zone).into_iter().map(Some).collect();
        let main = eps
            .iter()
            .map(|e| {
                let a = axis_minutes(&e.sleep_start, zone, date).clamp(0.0, span);
                let b = axis_minutes(&e.sleep_end, zone, date).clamp(0.0, span);
                (a, b)
            })
            .filter(|(a, b)| b > a)
            .fold(None::<(f64, f64)>, |best, c| match best {
                Some(b) if b.1 - b.0 >= c.1 - c.0 => Some(b),
                _ => Some(c),
            });
        let indicators = main.map(|(start, end)| DailyIndicators {
            start,
            end,
            spt: end - start,
            cm: (start + end) / 2.0,
        });
        out.insert((subject, date), ReferenceDay { labels, indicators });
    }
    Ok(out)
}

pub fn read_reference_jsonl<R: BufRead>(input: R) -> Result<Vec<ReferenceEpisode>> {
    let mut out = Vec::new();
    for (i, line) in input.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::invalid(format!("reference line {}: {e}", i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_reference_jsonl<W: Write>(episodes: &[ReferenceEpisode], mut out: W) -> Result<()> {
    for e in episodes {
        let line = serde_json::json!({
            "subject_id": e.subject_id,
            "sleep_start": e.sleep_start.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
            "sleep_end": e.sleep_end.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true),
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[derive(Deserialize)]
struct SlotRow {
    subject_id: String,
    date: NaiveDate,
    slot: usize,
    asleep: Option<u8>,
}

/// Per-slot CSV with columns `subject_id,date,slot,asleep` (empty = unknown).
/// Reference indicators come from the main episode of the grid.
pub fn read_reference_csv<R: std::io::Read>(input: R, merge_gap: usize) -> Result<ReferenceSet> {
    let mut rdr = csv::Reader::from_reader(input);
    let mut grids: BTreeMap<DayKey, Vec<Option<u8>>> = BTreeMap::new();
    for row in rdr.deserialize::<SlotRow>() {
        let row = row?;
        if row.slot >= SLOTS_PER_DAY {
            return Err(Error::invalid(format!("slot {} out of range", row.slot)));
        }
        if row.asleep.is_some_and(|v| v > 1) {
            return Err(Error::invalid("asleep must be 0 or 1"));
        }
        grids.entry((row.subject_id, row.date)).or_insert_with(|| vec![None; SLOTS_PER_DAY])[row.slot] = row.asleep;
    }
    Ok(grids
        .into_iter()
        .map(|(k, labels)| {
            let binary: Vec<u8> = labels.iter().map(|v| v.unwrap_or(0)).collect();
            let indicators = extract_main_sleep(&binary, merge_gap).map(daily_indicators);
            (k, ReferenceDay { labels, indicators })
        })
        .collect())
}

pub fn write_reference_csv<W: Write>(reference: &ReferenceSet, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "date", "slot", "asleep"])?;
    for ((subject, date), day) in reference {
        for (t, v) in day.labels.iter().enumerate() {
            w.write_record([
                subject.clone(),
                date.to_string(),
                t.to_string(),
                v.map(|x| x.to_string()).unwrap_or_default(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
