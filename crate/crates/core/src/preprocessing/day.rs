//! Assembly of 144-slot day vectors on the 14:00 → 14:00 window.

use std::collections::BTreeMap;

use chrono::{DateTime, Duration, FixedOffset, NaiveDate, NaiveDateTime, Offset, TimeZone};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};

use super::clean::{binarize_steps, clean_actigraphy, clean_light, merge_usage};
use super::records::{Channel, RawRecord, RejectCounts};
use crate::error::Result;
use crate::hhmm::{default_window_start, ObservationSequence, SLOT_MINUTES};

pub const SLOTS_PER_DAY: usize = 144;

/// Continuous channel order inside a day vector.
pub const CONTINUOUS_CHANNELS: [&str; 2] = ["actigraphy", "light"];
/// Discrete channel order inside a day vector.
pub const DISCRETE_CHANNELS: [&str; 2] = ["steps", "usage"];

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayFlags {
    /// The UTC offset at 14:00 differs between the window's two days.
    pub dst_transition: bool,
    /// Channels blanked for having fewer than two observed cells.
    pub insufficient: Vec<String>,
    /// Slots whose summed step count was negative.
    pub negative_steps: usize,
}

/// One subject-day. `date` is the calendar day on which the window opens.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayVector {
    pub subject_id: String,
    pub date: NaiveDate,
    pub sequence: ObservationSequence,
    #[serde(default)]
    pub flags: DayFlags,
}

impl DayVector {
    /// Fraction of missing slots per channel, in
    /// `[actigraphy, light, steps, usage]` order.
    pub fn missing_fractions(&self) -> [f64; 4] {
        let s = &self.sequence;
        [
            s.continuous_missing_fraction(0),
            s.continuous_missing_fraction(1),
            s.discrete_missing_fraction(0),
            s.discrete_missing_fraction(1),
        ]
    }
}

fn window_open(date: NaiveDate) -> NaiveDateTime {
    date.and_time(default_window_start())
}

/// Window date and slot of a timestamp, by wall-clock label in `zone`.
///
/// Slots follow clock labels, so on a daylight-saving day the repeated hour
/// folds onto the same slots and the skipped hour leaves its slots empty.
pub fn window_position(ts: &DateTime<FixedOffset>, zone: Tz) -> (NaiveDate, usize) {
    let local = ts.with_timezone(&zone).naive_local();
    let mut date = local.date();
    if local.time() < default_window_start() {
        date = date.pred_opt().expect("date in range");
    }
    let minutes = (local - window_open(date)).num_minutes();
    (date, (minutes / i64::from(SLOT_MINUTES)) as usize)
}

fn utc_offset_at(local: NaiveDateTime, zone: Tz) -> Option<i32> {
    zone.from_local_datetime(&local)
        .earliest()
        .map(|dt| dt.offset().fix().local_minus_utc())
}

/// True when the zone's UTC offset at the window's opening differs from the
/// one at its close.
pub fn spans_dst_transition(date: NaiveDate, zone: Tz) -> bool {
    let open = window_open(date);
    utc_offset_at(open, zone) != utc_offset_at(open + Duration::days(1), zone)
}

#[derive(Default, Clone)]
struct SlotAcc {
    act: (f64, usize),
    light: (f64, usize),
    steps: Option<f64>,
    app: Option<u8>,
    unlocks: Option<u8>,
}

fn or_bit(cell: &mut Option<u8>, v: f64) {
    let bit = u8::from(v > 0.0);
    *cell = Some(cell.unwrap_or(0) | bit);
}

fn assemble(subject: &str, date: NaiveDate, zone: Tz, slotted: &[(usize, &RawRecord)]) -> Result<DayVector> {
    let mut acc = vec![SlotAcc::default(); SLOTS_PER_DAY];
    for &(slot, r) in slotted {
        let Some(v) = r.value else { continue };
        let a = &mut acc[slot];
        match r.channel {
            Channel::Actigraphy => {
                a.act.0 += v;
                a.act.1 += 1;
            }
            Channel::Light => {
                a.light.0 += v;
                a.light.1 += 1;
            }
            Channel::Steps => *a.steps.get_or_insert(0.0) += v,
            Channel::AppUsage => or_bit(&mut a.app, v),
            Channel::Unlocks => or_bit(&mut a.unlocks, v),
        }
    }
    let mean = |(s, n): (f64, usize)| (n > 0).then(|| s / n as f64);
    let act: Vec<_> = acc.iter().map(|a| mean(a.act)).collect();
    let light: Vec<_> = acc.iter().map(|a| mean(a.light)).collect();
    let steps: Vec<_> = acc.iter().map(|a| a.steps).collect();
    let app: Vec<_> = acc.iter().map(|a| a.app).collect();
    let unlocks: Vec<_> = acc.iter().map(|a| a.unlocks).collect();

    let act = clean_actigraphy(&act);
    let light = clean_light(&light);
    let (steps, negative_steps) = binarize_steps(&steps);
    let usage = merge_usage(&app, &unlocks)?;

    let mut flags = DayFlags {
        dst_transition: spans_dst_transition(date, zone),
        insufficient: Vec::new(),
        negative_steps,
    };
    for (name, c) in [("actigraphy", &act), ("light", &light)] {
        if c.insufficient {
            flags.insufficient.push(name.to_string());
        }
    }
    let cont: Vec<Vec<Option<f64>>> = (0..SLOTS_PER_DAY).map(|t| vec![act.values[t], light.values[t]]).collect();
    let disc: Vec<Vec<Option<u8>>> = (0..SLOTS_PER_DAY).map(|t| vec![steps[t], usage[t]]).collect();
    Ok(DayVector {
        subject_id: subject.to_string(),
        date,
        sequence: ObservationSequence::from_rows(2, 2, &cont, &disc)?,
        flags,
    })
}

/// Builds the day vector of `subject` whose window opens on `date`, using the
/// matching records and ignoring the rest.
pub fn build_day_vector(records: &[RawRecord], subject: &str, date: NaiveDate, zone: Tz) -> Result<DayVector> {
    let slotted: Vec<(usize, &RawRecord)> = records
        .iter()
        .filter(|r| r.subject_id == subject)
        .filter_map(|r| {
            let (d, slot) = window_position(&r.timestamp, zone);
            (d == date).then_some((slot, r))
        })
        .collect();
    assemble(subject, date, zone, &slotted)
}

/// Counts gathered while turning records into day vectors.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub records_read: usize,
    pub rejected: RejectCounts,
    pub subjects: usize,
    pub days_built: usize,
    pub days_kept: usize,
    pub days_dropped: usize,
    pub dst_days: Vec<DayRef>,
    pub insufficient_channel_days: usize,
    pub negative_step_slots: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DayRef {
    pub subject_id: String,
    pub date: NaiveDate,
}

/// Every subject-day from the first to the last window that holds a record,
/// ordered by subject then date. Days inside that span with no records come
/// out fully missing.
pub fn build_day_vectors(records: &[RawRecord], zone_for: impl Fn(&str) -> Tz) -> Result<(Vec<DayVector>, RunReport)> {
    let mut by_day: BTreeMap<&str, BTreeMap<NaiveDate, Vec<(usize, &RawRecord)>>> = BTreeMap::new();
    for r in records {
        let (date, slot) = window_position(&r.timestamp, zone_for(&r.subject_id));
        by_day.entry(&r.subject_id).or_default().entry(date).or_default().push((slot, r));
    }
    let mut report = RunReport {
        records_read: records.len(),
        subjects: by_day.len(),
        ..RunReport::default()
    };
    let mut days = Vec::new();
    for (subject, dates) in &by_day {
        let zone = zone_for(subject);
        let (Some(&first), Some(&last)) = (dates.keys().next(), dates.keys().next_back()) else {
            continue;
        };
        for date in first.iter_days().take_while(|d| *d <= last) {
            let day = assemble(subject, date, zone, dates.get(&date).map_or(&[][..], Vec::as_slice))?;
            if day.flags.dst_transition {
                report.dst_days.push(DayRef {
                    subject_id: subject.to_string(),
                    date,
                });
            }
            if !day.flags.insufficient.is_empty() {
                report.insufficient_channel_days += 1;
            }
            report.negative_step_slots += day.flags.negative_steps;
            days.push(day);
        }
    }
    report.days_built = days.len();
    Ok((days, report))
}
