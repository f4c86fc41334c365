//! Synthetic subjects with known sleep schedules.
//!
//! Each night the subject sleeps from a jittered bedtime to a jittered rise
//! time. Slots more than half asleep emit sleep-like readings; the others emit
//! daytime activity. Cells go missing independently per channel.

use chrono::{Duration, NaiveDate, NaiveTime, TimeZone};
use chrono_tz::Tz;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::evaluation::{episodes_to_grid, ReferenceEpisode};
use crate::hhmm::{default_window_start, SLOT_MINUTES};
use crate::indicators::{DailyIndicators, DayCalendar, DayType};
use crate::preprocessing::{Channel, RawRecord};

/// Normal reading clipped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub mean: f64,
    pub sd: f64,
}

impl Level {
    fn draw<R: Rng>(&self, rng: &mut R) -> f64 {
        let x = if self.sd > 0.0 {
            Normal::new(self.mean, self.sd).expect("finite sd").sample(rng)
        } else {
            self.mean
        };
        x.clamp(0.0, 1.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Emissions {
    pub actigraphy_awake: Level,
    pub actigraphy_asleep: Level,
    pub light_awake: Level,
    pub light_asleep: Level,
    /// Probability of a nonzero step count in an awake slot.
    pub steps_awake: f64,
    pub app_usage_awake: f64,
    pub unlocks_awake: f64,
    /// Probability of phone or step activity while asleep; zero gives the
    /// strict silent-state behaviour.
    pub activity_asleep: f64,
}

impl Default for Emissions {
    fn default() -> Self {
        Self {
            actigraphy_awake: Level { mean: 0.5, sd: 0.2 },
            actigraphy_asleep: Level { mean: 0.05, sd: 0.03 },
            light_awake: Level { mean: 0.4, sd: 0.25 },
            light_asleep: Level { mean: 0.02, sd: 0.02 },
            steps_awake: 0.3,
            app_usage_awake: 0.3,
            unlocks_awake: 0.2,
            activity_asleep: 0.0,
        }
    }
}

/// Fraction of cells dropped per raw channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Missingness {
    pub actigraphy: f64,
    pub light: f64,
    pub steps: f64,
    pub app_usage: f64,
    pub unlocks: f64,
}

impl Missingness {
    pub fn uniform(rate: f64) -> Self {
        Self {
            actigraphy: rate,
            light: rate,
            steps: rate,
            app_usage: rate,
            unlocks: rate,
        }
    }

    fn rate(&self, ch: Channel) -> f64 {
        match ch {
            Channel::Actigraphy => self.actigraphy,
            Channel::Light => self.light,
            Channel::Steps => self.steps,
            Channel::AppUsage => self.app_usage,
            Channel::Unlocks => self.unlocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SubjectScenario {
    pub sleep_start: NaiveTime,
    pub sleep_end: NaiveTime,
    /// Standard deviation of bedtime and rise time, in minutes.
    pub jitter_minutes: f64,
    /// Added to both bedtime and rise time on free days, in minutes.
    pub free_day_shift_minutes: f64,
    pub emissions: Emissions,
    pub missingness: Missingness,
    pub calendar: DayCalendar,
    pub timezone: String,
    pub start_date: NaiveDate,
    pub seed: u64,
}

impl Default for SubjectScenario {
    /// 23:30 to 07:30 (48 slots), 15 min jitter, 10 % missingness.
    fn default() -> Self {
        Self {
            sleep_start: NaiveTime::from_hms_opt(23, 30, 0).expect("valid time"),
            sleep_end: NaiveTime::from_hms_opt(7, 30, 0).expect("valid time"),
            jitter_minutes: 15.0,
            free_day_shift_minutes: 0.0,
            emissions: Emissions::default(),
            missingness: Missingness::uniform(0.1),
            calendar: DayCalendar::default(),
            timezone: "UTC".into(),
            start_date: NaiveDate::from_ymd_opt(2024, 1, 1).expect("valid date"),
            seed: 0,
        }
    }
}

/// Ground truth for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthDay {
    pub date: NaiveDate,
    pub binary: Vec<u8>,
    pub indicators: DailyIndicators,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedSubject {
    pub subject_id: String,
    pub records: Vec<RawRecord>,
    pub truth: Vec<TruthDay>,
    pub episodes: Vec<ReferenceEpisode>,
}

const DAY_MINUTES: f64 = 1440.0;

fn axis(t: NaiveTime) -> f64 {
    let m = (t - default_window_start()).num_seconds() as f64 / 60.0;
    m.rem_euclid(DAY_MINUTES)
}

impl SubjectScenario {
    pub fn validate(&self) -> Result<Tz> {
        let rates = [
            self.missingness.actigraphy,
            self.missingness.light,
            self.missingness.steps,
            self.missingness.app_usage,
            self.missingness.unlocks,
            self.emissions.steps_awake,
            self.emissions.app_usage_awake,
            self.emissions.unlocks_awake,
            self.emissions.activity_asleep,
        ];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::invalid("rates must lie in [0, 1]"));
        }
        if !(self.jitter_minutes >= 0.0) {
            return Err(Error::invalid("jitter must be non-negative"));
        }
        let (s, e) = (axis(self.sleep_start), axis(self.sleep_end));
        if !(s < e) {
            return Err(Error::invalid("sleep window must open after 14:00 and close before the next 14:00"));
        }
        self.timezone
            .parse::<Tz>()
            .map_err(|_| Error::invalid(format!("unknown timezone {:?}", self.timezone)))
    }
}

/// Simulates `n_days` windows starting at the scenario's start date.
/// Deterministic in the scenario seed and `stream`, which separates subjects
/// sharing a scenario.
pub fn simulate_subject(scenario: &SubjectScenario, subject_id: &str, n_days: usize, stream: u64) -> Result<SimulatedSubject> {
    if n_days == 0 {
        return Err(Error::invalid("n_days must be at least 1"));
    }
    let zone = scenario.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    rng.set_stream(stream);
    let jitter = Normal::new(0.0, scenario.jitter_minutes).map_err(|e| Error::invalid(e.to_string()))?;
    let (s0, e0) = (axis(scenario.sleep_start), axis(scenario.sleep_end));
    let em = &scenario.emissions;

    let mut out = SimulatedSubject {
        subject_id: subject_id.to_string(),
        records: Vec::new(),
        truth: Vec::with_capacity(n_days),
        episodes: Vec::with_capacity(n_days),
    };
    for d in 0..n_days {
        let date = scenario.start_date + Duration::days(d as i64);
        let open = date.and_time(default_window_start());
        let shift = match scenario.calendar.classify(date) {
            DayType::Free => scenario.free_day_shift_minutes,
            DayType::Working => 0.0,
        };
        let start = (s0 + shift + jitter.sample(&mut rng)).clamp(0.0, DAY_MINUTES);
        let end = (e0 + shift + jitter.sample(&mut rng)).clamp(0.0, DAY_MINUTES);
        if end <= start {
            return Err(Error::invalid(format!("jitter produced an empty night on {date}")));
        }
        let to_instant = |minutes: f64| {
            let local = open + Duration::seconds((minutes * 60.0).round() as i64);
            zone.from_local_datetime(&local)
                .earliest()
                .or_else(|| zone.from_local_datetime(&(local + Duration::hours(1))).earliest())
                .map(|t| t.fixed_offset())
                .ok_or_else(|| Error::invalid(format!("cannot place {local} in {zone}")))
        };
        let episode = ReferenceEpisode {
            subject_id: subject_id.to_string(),
            sleep_start: to_instant(start)?,
            sleep_end: to_instant(end)?,
        };
        let binary = episodes_to_grid(std::slice::from_ref(&episode), date, zone);

        for (t, &asleep) in binary.iter().enumerate() {
            let minutes = t as f64 * f64::from(SLOT_MINUTES) + f64::from(SLOT_MINUTES) / 2.0;
            let local = open + Duration::seconds((minutes * 60.0) as i64);
            let asleep = asleep == 1;
            let active = |p: f64, rng: &mut ChaCha8Rng| rng.random_bool(if asleep { em.activity_asleep } else { p });
            let act = if asleep { em.actigraphy_asleep } else { em.actigraphy_awake }.draw(&mut rng);
            let light = if asleep { em.light_asleep } else { em.light_awake }.draw(&mut rng);
            let steps = if active(em.steps_awake, &mut rng) {
                f64::from(rng.random_range(1u32..120))
            } else {
                0.0
            };
            let app = f64::from(u8::from(active(em.app_usage_awake, &mut rng)));
            let unlocks = f64::from(u8::from(active(em.unlocks_awake, &mut rng)));
            // draw every value before masking so missingness does not shift the stream
            let values = [
                (Channel::Actigraphy, (act * 1000.0).round() / 1000.0),
                (Channel::Light, (light * 1000.0).round() / 1000.0),
                (Channel::Steps, steps),
                (Channel::AppUsage, app),
                (Channel::Unlocks, unlocks),
            ];
            let masks: Vec<bool> = values
                .iter()
                .map(|(ch, _)| rng.random_bool(scenario.missingness.rate(*ch)))
                .collect();
            // a local time skipped by a DST jump has no instant; nothing is recorded
            let Some(ts) = zone.from_local_datetime(&local).earliest() else { continue };
            for ((channel, v), missing) in values.into_iter().zip(masks) {
                out.records.push(RawRecord {
                    subject_id: subject_id.to_string(),
                    timestamp: ts.fixed_offset(),
                    channel,
                    value: (!missing).then_some(v),
                });
            }
        }
        out.truth.push(TruthDay {
            date,
            binary,
            indicators: DailyIndicators {
                start,
                end,
                spt: end - start,
                cm: (start + end) / 2.0,
            },
        });
        out.episodes.push(episode);
    }
    Ok(out)
}

/// Subject ids for a cohort: `s000`, `s001`, ...
pub fn subject_id(index: usize) -> String {
    format!("s{index:03}")
}

/// `n_subjects` subjects sharing one scenario, each on its own random stream.
pub fn simulate_cohort(scenario: &SubjectScenario, n_subjects: usize, n_days: usize) -> Result<Vec<SimulatedSubject>> {
    let run = |i: usize| simulate_subject(scenario, &subject_id(i), n_days, i as u64);
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n_subjects).into_par_iter().map(run).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n_subjects).map(run).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::preprocessing::SLOTS_PER_DAY;

    fn quiet() -> SubjectScenario {
        SubjectScenario {
            jitter_minutes: 0.0,
            missingness: Missingness::uniform(0.0),
            ..SubjectScenario::default()
        }
    }

    #[test]
    fn noise_free_schedule_arithmetic() {
        let sim = simulate_subject(&quiet(), "a", 2, 0).unwrap();
        let day = &sim.truth[0];
        assert_eq!(day.indicators.spt, 480.0);
        assert_eq!(day.indicators.cm, 810.0);
        assert_eq!(day.binary.iter().map(|&b| b as usize).sum::<usize>(), 48);
        assert_eq!(day.binary[57], 1);
        assert_eq!(day.binary[105], 0);
        assert_eq!(sim.records.len(), 2 * SLOTS_PER_DAY * 5);
        assert!(sim.records.iter().all(|r| r.value.is_some()));
    }

    #[test]
    fn asleep_slots_are_silent() {
        let sim = simulate_subject(&SubjectScenario::default(), "a", 5, 1).unwrap();
        for r in &sim.records {
            let (date, slot) = crate::preprocessing::window_position(&r.timestamp, Tz::UTC);
            let day = sim.truth.iter().find(|t| t.date == date).unwrap();
            if day.binary[slot] == 1 && matches!(r.channel, Channel::Steps | Channel::AppUsage | Channel::Unlocks) {
                assert!(r.value.is_none_or(|v| v == 0.0));
            }
        }
    }

    #[test]
    fn missingness_rate_concentrates() {
        let sc = SubjectScenario {
            missingness: Missingness {
                actigraphy: 0.2,
                ..Missingness::uniform(0.0)
            },
            ..SubjectScenario::default()
        };
        let sim = simulate_subject(&sc, "a", 100, 0).unwrap();
        let act: Vec<_> = sim.records.iter().filter(|r| r.channel == Channel::Actigraphy).collect();
        let observed = act.iter().filter(|r| r.value.is_some()).count() as f64 / act.len() as f64;
        assert!((observed - 0.8).abs() < 0.03, "{observed}");
    }

    #[test]
    fn seeded_and_streamed() {
        let sc = SubjectScenario::default();
        let a = simulate_subject(&sc, "a", 3, 0).unwrap();
        assert_eq!(a, simulate_subject(&sc, "a", 3, 0).unwrap());
        assert_ne!(a.records, simulate_subject(&sc, "a", 3, 1).unwrap().records);
    }

    #[test]
    fn infeasible_schedules_rejected() {
        let bad = SubjectScenario {
            sleep_start: NaiveTime::from_hms_opt(8, 0, 0).unwrap(),
            sleep_end: NaiveTime::from_hms_opt(1, 0, 0).unwrap(),
            ..SubjectScenario::default()
        };
        assert!(simulate_subject(&bad, "a", 1, 0).is_err());
        let bad_rate = SubjectScenario {
            missingness: Missingness::uniform(1.5),
            ..SubjectScenario::default()
        };
        assert!(simulate_subject(&bad_rate, "a", 1, 0).is_err());
        assert!(simulate_subject(&SubjectScenario::default(), "a", 0, 0).is_err());
    }
}
