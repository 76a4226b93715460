//! Turning detection events into tables and map layers.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::{self, BufRead, Write};

use chrono::{NaiveDate, Timelike};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::engine::{DetectionEvent, Direction, SignalKind};
use crate::model::StopId;

/// Column set of the summary table, in order.
pub const SUMMARY_COLUMNS: [&str; 7] = [
    "signal",
    "date",
    "records",
    "increases",
    "reductions",
    "median_s",
    "std_s",
];

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("invalid hour slice [{from}, {to}): need 0 <= from < to <= 24")]
    InvalidHours { from: u8, to: u8 },
    #[error("line {line}: {source}")]
    Parse {
        line: usize,
        source: serde_json::Error,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DailySummary {
    pub signal: SignalKind,
    pub date: NaiveDate,
    pub records: u64,
    pub increases: u64,
    pub reductions: u64,
    /// Lower median of |value| over the day's detections.
    pub median_s: Option<f64>,
    /// Population standard deviation of |value|.
    pub std_s: Option<f64>,
}

impl DailySummary {
    pub fn detections(&self) -> u64 {
        self.increases + self.reductions
    }
}

fn lower_median(sorted: &[i64]) -> Option<f64> {
    if sorted.is_empty() {
        None
    } else {
        Some(sorted[(sorted.len() - 1) / 2] as f64)
    }
}

fn population_std(values: &[i64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let n = values.len() as f64;
    let mean = values.iter().map(|&v| v as f64).sum::<f64>() / n;
    let ss: f64 = values.iter().map(|&v| (v as f64 - mean).powi(2)).sum();
    Some((ss / n).sqrt())
}

/// One row per (signal, calendar day in `tz`).
///
/// Days come from both `records_per_day` and the events; signals from both
/// `signals` and the events. Rows are ordered by signal, then date.
pub fn summarize(
    events: &[DetectionEvent],
    records_per_day: &BTreeMap<NaiveDate, u64>,
    signals: &[SignalKind],
    tz: Tz,
) -> Vec<DailySummary> {
    let mut groups: BTreeMap<(SignalKind, NaiveDate), (u64, u64, Vec<i64>)> = BTreeMap::new();
    let all_signals: BTreeSet<SignalKind> = signals
        .iter()
        .copied()
        .chain(events.iter().map(|e| e.signal))
        .collect();
    for &signal in &all_signals {
        for &date in records_per_day.keys() {
            groups.entry((signal, date)).or_default();
        }
    }
    for e in events {
        let date = e.event_time.with_timezone(&tz).date_naive();
        let g = groups.entry((e.signal, date)).or_default();
        match e.direction {
            Direction::Increase => g.0 += 1,
            Direction::Reduction => g.1 += 1,
        }
        g.2.push(e.value.abs());
    }
    groups
        .into_iter()
        .map(|((signal, date), (increases, reductions, mut values))| {
            values.sort_unstable();
            DailySummary {
                signal,
                date,
                records: records_per_day.get(&date).copied().unwrap_or(0),
                increases,
                reductions,
                median_s: lower_median(&values),
                std_s: population_std(&values),
            }
        })
        .collect()
}

/// Events whose hour of day in `tz` lies in `[from, to)`.
pub fn slice_hours(
    events: &[DetectionEvent],
    from: u8,
    to: u8,
    tz: Tz,
) -> Result<Vec<DetectionEvent>, ReportError> {
    if from >= to || to > 24 {
        return Err(ReportError::InvalidHours { from, to });
    }
    Ok(events
        .iter()
        .filter(|e| {
            let hour = e.event_time.with_timezone(&tz).hour() as u8;
            hour >= from && hour < to
        })
        .cloned()
        .collect())
}

/// Point layer of detections at their destination stops.
#[derive(Debug, Clone, PartialEq)]
pub struct GeoLayer {
    pub collection: Value,
    /// Events whose destination stop has no known position.
    pub unplaced: Vec<DetectionEvent>,
}

impl GeoLayer {
    pub fn feature_count(&self) -> usize {
        self.collection["features"].as_array().map_or(0, Vec::len)
    }
}

pub fn to_geojson(events: &[DetectionEvent], positions: &HashMap<StopId, (f64, f64)>) -> GeoLayer {
    let mut features = Vec::new();
    let mut unplaced = Vec::new();
    for e in events {
        let Some(&(lat, lon)) = positions.get(&e.key.curr) else {
            unplaced.push(e.clone());
            continue;
        };
        features.push(json!({
            "type": "Feature",
            "geometry": { "type": "Point", "coordinates": [lon, lat] },
            "properties": {
                "direction": e.direction,
                "signal": e.signal,
                "detector": e.detector,
                "time": e.event_time.to_rfc3339(),
                "key": e.key.to_string(),
                "value": e.value,
            },
        }));
    }
    GeoLayer {
        collection: json!({ "type": "FeatureCollection", "features": features }),
        unplaced,
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.1}")).unwrap_or_default()
}

pub fn write_summary_csv<W: Write>(writer: W, rows: &[DailySummary]) -> Result<(), ReportError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(SUMMARY_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.signal.as_str().to_owned(),
            r.date.to_string(),
            r.records.to_string(),
            r.increases.to_string(),
            r.reductions.to_string(),
            fmt_opt(r.median_s),
            fmt_opt(r.std_s),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_summary_json<W: Write>(
    mut writer: W,
    rows: &[DailySummary],
) -> Result<(), ReportError> {
    serde_json::to_writer_pretty(&mut writer, rows)?;
    writer.write_all(b"\n")?;
    writer.flush()?;
    Ok(())
}

pub fn write_detections<W: Write>(
    mut writer: W,
    events: &[DetectionEvent],
) -> Result<(), ReportError> {
    for e in events {
        serde_json::to_writer(&mut writer, e)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Reads one event per line; blank lines are ignored, anything else that
/// does not parse is an error.
pub fn read_detections<R: BufRead>(reader: R) -> Result<Vec<DetectionEvent>, ReportError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line).map_err(|source| ReportError::Parse {
                line: i + 1,
                source,
            })?,
        );
    }
    Ok(out)
}
