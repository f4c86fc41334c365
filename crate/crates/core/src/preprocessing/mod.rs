//! From raw sensor records to cleaned, filtered day vectors.
//!
//! Each day is cleaned on its own: outlier rejection, bias removal and
//! normalisation use only that day's observed cells.

mod clean;
mod day;
mod filter;
mod records;

pub use clean::{
    binarize_steps, clean_actigraphy, clean_light, merge_usage, min_max_normalize, remove_outliers, signal_mode,
    BinarySignal, Cleaned, Signal,
};
pub use day::{
    build_day_vector, build_day_vectors, spans_dst_transition, window_position, DayFlags, DayRef, DayVector,
    RunReport, CONTINUOUS_CHANNELS, DISCRETE_CHANNELS, SLOTS_PER_DAY,
};
pub use filter::{filter_sequences, passes, FilterMode, MissingThresholds};
pub use records::{
    read_records, write_records_csv, write_records_jsonl, Channel, RawRecord, RecordBatch, RecordFormat,
    RejectCounts,
};

use std::io::{BufRead, Write};

use crate::error::Result;

pub fn read_day_vectors<R: BufRead>(input: R) -> Result<Vec<DayVector>> {
    let mut out = Vec::new();
    for line in input.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

pub fn write_day_vectors<W: Write>(days: &[DayVector], mut out: W) -> Result<()> {
    for d in days {
        serde_json::to_writer(&mut out, d)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}
