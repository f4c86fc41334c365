//! Raw sensor records as CSV or JSON lines.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use chrono::{DateTime, FixedOffset};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Channel {
    Actigraphy,
    Light,
    Steps,
    AppUsage,
    Unlocks,
}

impl Channel {
    pub const ALL: [Channel; 5] = [
        Channel::Actigraphy,
        Channel::Light,
        Channel::Steps,
        Channel::AppUsage,
        Channel::Unlocks,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Channel::Actigraphy => "actigraphy",
            Channel::Light => "light",
            Channel::Steps => "steps",
            Channel::AppUsage => "app_usage",
            Channel::Unlocks => "unlocks",
        }
    }
}

impl fmt::Display for Channel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Channel {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Channel::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::invalid(format!("unknown channel {s:?}")))
    }
}

/// One sensor reading. `value: None` is an explicit missing reading.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub subject_id: String,
    pub timestamp: DateTime<FixedOffset>,
    pub channel: Channel,
    pub value: Option<f64>,
}

/// Why input rows were skipped.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RejectCounts {
    pub bad_timestamp: usize,
    pub unknown_channel: usize,
    pub bad_value: usize,
    pub malformed: usize,
}

impl RejectCounts {
    pub fn total(&self) -> usize {
        self.bad_timestamp + self.unknown_channel + self.bad_value + self.malformed
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct RecordBatch {
    pub records: Vec<RawRecord>,
    pub rejected: RejectCounts,
}

impl RecordBatch {
    fn push(&mut self, subject: &str, timestamp: &str, channel: &str, value: Option<&str>) {
        let Ok(ts) = DateTime::parse_from_rfc3339(timestamp.trim()) else {
            self.rejected.bad_timestamp += 1;
            return;
        };
        let Ok(channel) = channel.trim().parse() else {
            self.rejected.unknown_channel += 1;
            return;
        };
        let value = match value.map(str::trim) {
            None | Some("") | Some("null") | Some("NA") | Some("NaN") => None,
            Some(v) => match v.parse::<f64>() {
                Ok(x) if x.is_finite() => Some(x),
                _ => {
                    self.rejected.bad_value += 1;
                    return;
                }
            },
        };
        self.records.push(RawRecord {
            subject_id: subject.to_string(),
            timestamp: ts,
            channel,
            value,
        });
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RecordFormat {
    Csv,
    JsonLines,
}

impl RecordFormat {
    /// `.jsonl`/`.ndjson`/`.json` read as JSON lines, anything else as CSV.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("jsonl" | "ndjson" | "json") => RecordFormat::JsonLines,
            _ => RecordFormat::Csv,
        }
    }
}

/// Reads records, counting rows that cannot be used instead of failing on
/// them. Only a missing or wrong CSV header is an error.
pub fn read_records<R: BufRead>(input: R, format: RecordFormat) -> Result<RecordBatch> {
    match format {
        RecordFormat::Csv => read_csv(input),
        RecordFormat::JsonLines => read_jsonl(input),
    }
}

fn read_csv<R: BufRead>(input: R) -> Result<RecordBatch> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(input);
    let headers = rdr.headers()?.clone();
    let col = |name: &str| {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::invalid(format!("CSV header lacks column {name:?}")))
    };
    let (s, t, c, v) = (col("subject_id")?, col("timestamp")?, col("channel")?, col("value")?);
    let mut batch = RecordBatch::default();
    for row in rdr.records() {
        let Ok(row) = row else {
            batch.rejected.malformed += 1;
            continue;
        };
        match (row.get(s), row.get(t), row.get(c)) {
            (Some(subject), Some(ts), Some(ch)) => batch.push(subject, ts, ch, row.get(v)),
            _ => batch.rejected.malformed += 1,
        }
    }
    Ok(batch)
}

#[derive(Deserialize)]
struct LooseRecord {
    subject_id: serde_json::Value,
    timestamp: String,
    channel: String,
    #[serde(default)]
    value: serde_json::Value,
}

fn read_jsonl<R: BufRead>(input: R) -> Result<RecordBatch> {
    let mut batch = RecordBatch::default();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let Ok(rec) = serde_json::from_str::<LooseRecord>(&line) else {
            batch.rejected.malformed += 1;
            continue;
        };
        let subject = match rec.subject_id {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            _ => {
                batch.rejected.malformed += 1;
                continue;
            }
        };
        let value = match &rec.value {
            serde_json::Value::Null => None,
            serde_json::Value::Number(n) => Some(n.to_string()),
            serde_json::Value::String(s) => Some(s.clone()),
            _ => Some("invalid".to_string()),
        };
        batch.push(&subject, &rec.timestamp, &rec.channel, value.as_deref());
    }
    Ok(batch)
}

fn timestamp_text(ts: &DateTime<FixedOffset>) -> String {
    ts.to_rfc3339_opts(chrono::SecondsFormat::AutoSi, true)
}

pub fn write_records_csv<W: Write>(records: &[RawRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["subject_id", "timestamp", "channel", "value"])?;
    for r in records {
        w.write_record([
            r.subject_id.clone(),
            timestamp_text(&r.timestamp),
            r.channel.to_string(),
            r.value.map(|v| v.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_records_jsonl<W: Write>(records: &[RawRecord], mut out: W) -> Result<()> {
    for r in records {
        let line = serde_json::json!({
            "subject_id": r.subject_id,
            "timestamp": timestamp_text(&r.timestamp),
            "channel": r.channel,
            "value": r.value,
        });
        writeln!(out, "{line}")?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_with_gaps_and_junk() {
        let text = "subject_id,timestamp,channel,value\n\
                    s1,2024-01-01T14:00:00+01:00,actigraphy,0.5\n\
                    s1,2024-01-01T14:10:00+01:00,light,\n\
                    s1,not-a-time,light,0.1\n\
                    s1,2024-01-01T14:10:00+01:00,gyro,0.1\n\
                    s1,2024-01-01T14:10:00+01:00,steps,lots\n\
                    s1,2024-01-01T14:20:00Z,unlocks,null\n";
        let batch = read_records(text.as_bytes(), RecordFormat::Csv).unwrap();
        assert_eq!(batch.records.len(), 3);
        assert_eq!(batch.records[1].value, None);
        assert_eq!(batch.records[2].channel, Channel::Unlocks);
        assert_eq!(
            batch.rejected,
            RejectCounts {
                bad_timestamp: 1,
                unknown_channel: 1,
                bad_value: 1,
                malformed: 0
            }
        );
    }

    #[test]
    fn missing_header_column_is_an_error() {
        assert!(read_records("subject_id,timestamp,value\n".as_bytes(), RecordFormat::Csv).is_err());
    }

    #[test]
    fn jsonl_round_trip() {
        let text = "{\"subject_id\":\"a\",\"timestamp\":\"2024-03-02T09:30:00-05:00\",\"channel\":\"app_usage\",\"value\":1}\n\
                    \n\
                    {\"subject_id\":7,\"timestamp\":\"2024-03-02T09:40:00-05:00\",\"channel\":\"light\",\"value\":null}\n\
                    {broken\n";
        let batch = read_records(text.as_bytes(), RecordFormat::JsonLines).unwrap();
        assert_eq!(batch.records.len(), 2);
        assert_eq!(batch.records[1].subject_id, "7");
        assert_eq!(batch.rejected.malformed, 1);

        let mut buf = Vec::new();
        write_records_jsonl(&batch.records, &mut buf).unwrap();
        let back = read_records(buf.as_slice(), RecordFormat::JsonLines).unwrap();
        assert_eq!(back.records, batch.records);

        let mut buf = Vec::new();
        write_records_csv(&batch.records, &mut buf).unwrap();
        let back = read_records(buf.as_slice(), RecordFormat::Csv).unwrap();
        assert_eq!(back.records, batch.records);
        assert_eq!(back.rejected.total(), 0);
    }
}
