//! Getting vehicle snapshots into the engine: replay of recorded feeds and a
//! synthetic city generator.

pub mod replay;
pub mod synth;

use std::collections::BTreeMap;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, Utc};
use chrono_tz::Tz;
use thiserror::Error;

use crate::engine::{detector_id, DetectorKey, KeyingMode};
use crate::model::VehicleSnapshot;

pub use replay::{
    replay, replay_reader, BoundingBox, IngestStats, RawLocationRecord, ReplayOptions, Schedule,
    ScheduleEntry, ServiceStatus,
};
pub use synth::{
    generate, GroundTruth, PerturbationKind, PerturbationSpec, Scenario, ScenarioFiles,
    ScenarioSpec,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("cannot open {path}: {source}")]
    Open { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("schedule: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
}

impl IngestError {
    pub fn open(path: &Path, source: io::Error) -> Self {
        IngestError::Open {
            path: path.to_owned(),
            source,
        }
    }
}

/// Service day of an instant: days run from 03:00 UTC to 03:00 UTC.
pub fn service_date(t: DateTime<Utc>) -> NaiveDate {
    (t - Duration::hours(i64::from(synth::SERVICE_DAY_START_HOUR))).date_naive()
}

/// Observations each detector would receive, without running any detector.
pub fn shuffle_preview<'a, I>(stream: I, mode: KeyingMode, tz: Tz) -> BTreeMap<DetectorKey, u64>
where
    I: IntoIterator<Item = &'a VehicleSnapshot>,
{
    let mut counts = BTreeMap::new();
    for s in stream.into_iter().filter(|s| s.in_service) {
        *counts.entry(detector_id(s, mode, tz)).or_insert(0) += 1;
    }
    counts
}
