//! Simulate a small cohort, fit a semi-supervised model and print the
//! decoded sleep of the first few days.
//!
//! cargo run --release -p sleep-hhmm --example quickstart

use sleep_hhmm::hhmm::{FitConfig, Supervision};
use sleep_hhmm::indicators::{asleep_states, daily_indicators, predict_days, time_of_day};
use sleep_hhmm::model_selection::fit_cell;
use sleep_hhmm::preprocessing::{build_day_vectors, filter_sequences, FilterMode, MissingThresholds, RawRecord};
use sleep_hhmm::synthdata::{simulate_cohort, SubjectScenario};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cohort = simulate_cohort(&SubjectScenario::default(), 5, 14)?;
    let records: Vec<RawRecord> = cohort.iter().flat_map(|s| s.records.iter().cloned()).collect();
    let (days, report) = build_day_vectors(&records, |_| chrono_tz::UTC)?;
    let (train, _) = filter_sequences(days.clone(), FilterMode::Train, &MissingThresholds::default());
    println!("{} days built, {} pass the training filter", report.days_built, train.len());

    let seqs: Vec<_> = train.iter().map(|d| d.sequence.clone()).collect();
    let semi2 = Supervision::SemiSupervised { silent_states: 2 };
    let (fit, _) = fit_cell(&seqs, 6, semi2, &FitConfig::default(), 1).map_err(|(e, _)| e)?;
    println!("log-likelihood {:.1} after {} iterations", fit.final_loglik(), fit.loglik_trace.len() - 1);

    let asleep = asleep_states(&fit.params, 2)?;
    let preds = predict_days(&fit.params, &days, &asleep, 3)?;
    for (day, pred) in days.iter().zip(&preds).take(7) {
        match pred.episode.map(daily_indicators) {
            Some(ind) => println!(
                "{} {}: asleep {} to {}, {} min",
                day.subject_id,
                day.date,
                time_of_day(ind.start).format("%H:%M"),
                time_of_day(ind.end).format("%H:%M"),
                ind.spt
            ),
            None => println!("{} {}: no sleep found", day.subject_id, day.date),
        }
    }
    Ok(())
}
