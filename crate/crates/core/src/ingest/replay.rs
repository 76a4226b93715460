use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use chrono::{DateTime, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use super::IngestError;
use crate::model::{StopId, VehicleSnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ServiceStatus {
    InService,
    NotInService,
}

/// One line of a snapshot file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawLocationRecord {
    pub event_time: DateTime<Utc>,
    pub vehicle: String,
    #[serde(default)]
    pub line: Option<String>,
    pub course: String,
    pub lat: f64,
    pub lon: f64,
    #[serde(default)]
    pub curr_stop: Option<StopId>,
    #[serde(default)]
    pub prev_stop: Option<StopId>,
    #[serde(default)]
    pub real_dep_curr: Option<DateTime<Utc>>,
    #[serde(default)]
    pub real_dep_prev: Option<DateTime<Utc>>,
    pub status: ServiceStatus,
}

impl RawLocationRecord {
    pub fn from_snapshot(snapshot: &VehicleSnapshot, vehicle: impl Into<String>) -> Self {
        Self {
            event_time: snapshot.event_time,
            vehicle: vehicle.into(),
            line: Some(snapshot.line.clone()),
            course: snapshot.course.clone(),
            lat: snapshot.lat,
            lon: snapshot.lon,
            curr_stop: Some(snapshot.curr_stop.clone()),
            prev_stop: Some(snapshot.prev_stop.clone()),
            real_dep_curr: snapshot.real_dep_curr,
            real_dep_prev: snapshot.real_dep_prev,
            status: if snapshot.in_service {
                ServiceStatus::InService
            } else {
                ServiceStatus::NotInService
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScheduleEntry {
    pub line: String,
    pub course: String,
    pub stop: StopId,
    pub sched_departure: DateTime<Utc>,
    pub service_date: NaiveDate,
}

/// Planned departures indexed by (course, stop).
///
/// A loop course departs its terminus twice; lookups pick the planned time
/// nearest to the observed departure.
#[derive(Debug, Clone, Default)]
pub struct Schedule {
    index: HashMap<String, HashMap<StopId, Vec<DateTime<Utc>>>>,
    lines: HashMap<String, String>,
    len: usize,
}

impl Schedule {
    pub fn new(entries: impl IntoIterator<Item = ScheduleEntry>) -> Self {
        let mut s = Self::default();
        for e in entries {
            s.insert(e);
        }
        s
    }

    pub fn insert(&mut self, entry: ScheduleEntry) {
        self.lines.insert(entry.course.clone(), entry.line);
        let times = self
            .index
            .entry(entry.course)
            .or_default()
            .entry(entry.stop)
            .or_default();
        times.push(entry.sched_departure);
        times.sort();
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn line_of(&self, course: &str) -> Option<&str> {
        self.lines.get(course).map(String::as_str)
    }

    pub fn lookup(
        &self,
        course: &str,
        stop: &StopId,
        observed: DateTime<Utc>,
    ) -> Option<DateTime<Utc>> {
        let times = self.index.get(course)?.get(stop)?;
        times
            .iter()
            .copied()
            .min_by_key(|t| ((observed - *t).num_seconds().abs(), *t))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, IngestError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut schedule = Schedule::default();
        for row in rdr.deserialize::<ScheduleEntry>() {
            schedule.insert(row?);
        }
        Ok(schedule)
    }

    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let file = File::open(path).map_err(|e| IngestError::open(path, e))?;
        Self::read_csv(BufReader::new(file))
    }
}

pub fn write_schedule_csv<W: Write>(
    writer: W,
    entries: &[ScheduleEntry],
) -> Result<(), IngestError> {
    let mut w = csv::Writer::from_writer(writer);
    for e in entries {
        w.serialize(e)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_snapshots_jsonl<W: Write>(
    mut writer: W,
    records: impl IntoIterator<Item = RawLocationRecord>,
) -> Result<(), IngestError> {
    for record in records {
        serde_json::to_writer(&mut writer, &record)?;
        writer.write_all(b"\n")?;
    }
    writer.flush()?;
    Ok(())
}

/// Latitude/longitude bounds a record must fall in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundingBox {
    pub min_lat: f64,
    pub max_lat: f64,
    pub min_lon: f64,
    pub max_lon: f64,
}

impl BoundingBox {
    pub const WORLD: BoundingBox = BoundingBox {
        min_lat: -90.0,
        max_lat: 90.0,
        min_lon: -180.0,
        max_lon: 180.0,
    };

    pub fn contains(&self, lat: f64, lon: f64) -> bool {
        (self.min_lat..=self.max_lat).contains(&lat) && (self.min_lon..=self.max_lon).contains(&lon)
    }
}

impl Default for BoundingBox {
    fn default() -> Self {
        Self::WORLD
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub total: u64,
    pub linked: u64,
    pub skipped_not_in_service: u64,
    pub skipped_unusable: u64,
    pub skipped_unlinked: u64,
    pub skipped_unparseable: u64,
}

impl IngestStats {
    pub fn linked_ratio(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.linked as f64 / self.total as f64
        }
    }

    pub fn skipped(&self) -> u64 {
        self.skipped_not_in_service
            + self.skipped_unusable
            + self.skipped_unlinked
            + self.skipped_unparseable
    }
}

enum Outcome {
    Linked(VehicleSnapshot),
    NotInService,
    Unusable,
    Unlinked,
}

fn link(record: RawLocationRecord, schedule: &Schedule, bbox: &BoundingBox) -> Outcome {
    if record.status == ServiceStatus::NotInService {
        return Outcome::NotInService;
    }
    let (Some(curr), Some(prev), Some(real_curr)) =
        (record.curr_stop, record.prev_stop, record.real_dep_curr)
    else {
        return Outcome::Unusable;
    };
    if curr == prev || !bbox.contains(record.lat, record.lon) || record.event_time < real_curr {
        return Outcome::Unusable;
    }
    if record.real_dep_prev.is_some_and(|p| p > real_curr) {
        return Outcome::Unusable;
    }
    let Some(sched_curr) = schedule.lookup(&record.course, &curr, real_curr) else {
        return Outcome::Unlinked;
    };
    let sched_prev = record
        .real_dep_prev
        .and_then(|t| schedule.lookup(&record.course, &prev, t));
    let line = record
        .line
        .or_else(|| schedule.line_of(&record.course).map(str::to_owned))
        .unwrap_or_default();
    Outcome::Linked(VehicleSnapshot {
        event_time: record.event_time,
        line,
        course: record.course,
        lat: record.lat,
        lon: record.lon,
        curr_stop: curr,
        prev_stop: prev,
        real_dep_curr: Some(real_curr),
        sched_dep_curr: Some(sched_curr),
        real_dep_prev: record.real_dep_prev,
        sched_dep_prev: sched_prev,
        in_service: true,
    })
}

#[derive(Debug, Clone, Default)]
pub struct ReplayOptions {
    pub bbox: BoundingBox,
}

/// Reads snapshot lines, joins them with the schedule and returns the
/// linked in-service snapshots ordered by event time (stable for ties).
pub fn replay_reader<R: BufRead>(
    reader: R,
    schedule: &Schedule,
    options: &ReplayOptions,
) -> Result<(Vec<VehicleSnapshot>, IngestStats), IngestError> {
    let mut stats = IngestStats::default();
    let mut out = Vec::new();
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        stats.total += 1;
        let Ok(record) = serde_json::from_str::<RawLocationRecord>(&line) else {
            stats.skipped_unparseable += 1;
            continue;
        };
        match link(record, schedule, &options.bbox) {
            Outcome::Linked(s) => {
                stats.linked += 1;
                out.push(s);
            }
            Outcome::NotInService => stats.skipped_not_in_service += 1,
            Outcome::Unusable => stats.skipped_unusable += 1,
            Outcome::Unlinked => stats.skipped_unlinked += 1,
        }
    }
    out.sort_by_key(|s| s.event_time);
    Ok((out, stats))
}

pub fn replay(
    path: &Path,
    schedule: &Schedule,
    options: &ReplayOptions,
) -> Result<(Vec<VehicleSnapshot>, IngestStats), IngestError> {
    let file = File::open(path).map_err(|e| IngestError::open(path, e))?;
    replay_reader(BufReader::new(file), schedule, options)
}
