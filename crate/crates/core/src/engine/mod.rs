//! Keyed change detection over a vehicle snapshot stream.
//!
//! Every usable snapshot is mapped to a [`DetectorKey`] (its edge, optionally
//! with the hour of day), the keyed detector is created on first sight, and
//! the delay or delay-change value is fed to it. Detectors are key-local, so
//! the stream may be split by key across workers as long as each key sees
//! its observations in stream order.

mod keys;

use std::collections::hash_map::{DefaultHasher, Entry};
use std::collections::{BTreeMap, HashMap};
use std::hash::{Hash, Hasher};

use chrono::{DateTime, NaiveDate, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{ChangeDetector, Detector, DetectorConfig, DetectorError, DetectorKind};
use crate::model::{StopId, VehicleSnapshot};

pub use keys::{detector_id, DetectorKey, KeyingMode, SignalKind};

pub const DEFAULT_LATE_TOLERANCE_S: i64 = 120;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error("worker thread panicked")]
    WorkerPanicked,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Direction {
    Increase,
    Reduction,
}

impl Direction {
    pub fn from_means(pre: f64, post: f64) -> Self {
        if post > pre {
            Direction::Increase
        } else {
            Direction::Reduction
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionEvent {
    pub key: DetectorKey,
    pub detector: DetectorKind,
    pub signal: SignalKind,
    pub event_time: DateTime<Utc>,
    /// Triggering observation in seconds.
    pub value: i64,
    pub pre_mean: f64,
    pub post_mean: f64,
    pub direction: Direction,
    pub course: String,
    /// Position of the destination stop, when known.
    pub lat: Option<f64>,
    pub lon: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct EngineConfig {
    pub mode: KeyingMode,
    pub signal: SignalKind,
    pub detector: DetectorConfig,
    pub timezone: Tz,
    /// Records older than the stream's high-water mark by more than this are skipped.
    pub late_tolerance_s: i64,
}

impl EngineConfig {
    pub fn new(mode: KeyingMode, signal: SignalKind, detector: DetectorConfig) -> Self {
        Self {
            mode,
            signal,
            detector,
            timezone: Tz::UTC,
            late_tolerance_s: DEFAULT_LATE_TOLERANCE_S,
        }
    }

    pub fn with_timezone(mut self, tz: Tz) -> Self {
        self.timezone = tz;
        self
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EngineStats {
    pub records_seen: u64,
    pub records_processed: u64,
    pub skipped_not_in_service: u64,
    pub skipped_unusable: u64,
    pub skipped_late: u64,
    pub detections: u64,
    pub increases: u64,
    pub reductions: u64,
    /// Processed records per calendar day in the run timezone.
    pub records_per_day: BTreeMap<NaiveDate, u64>,
}

/// Detectors by key, created lazily.
#[derive(Debug, Clone, Default)]
pub struct DetectorRegistry {
    detectors: HashMap<DetectorKey, Detector>,
    created: u64,
}

impl DetectorRegistry {
    pub fn created_count(&self) -> u64 {
        self.created
    }

    pub fn len(&self) -> usize {
        self.detectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.detectors.is_empty()
    }

    pub fn get(&self, key: &DetectorKey) -> Option<&Detector> {
        self.detectors.get(key)
    }

    pub fn get_or_create(
        &mut self,
        key: DetectorKey,
        config: &DetectorConfig,
    ) -> Result<&mut Detector, DetectorError> {
        match self.detectors.entry(key) {
            Entry::Occupied(e) => Ok(e.into_mut()),
            Entry::Vacant(e) => {
                let detector = config.build()?;
                self.created += 1;
                Ok(e.insert(detector))
            }
        }
    }

    /// Observation count per key, in key order.
    pub fn observation_counts(&self) -> BTreeMap<DetectorKey, u64> {
        self.detectors
            .iter()
            .map(|(k, d)| (k.clone(), d.observed_count()))
            .collect()
    }

    /// Number of detectors per edge (hour component dropped).
    pub fn detectors_per_edge(&self) -> BTreeMap<DetectorKey, usize> {
        let mut out = BTreeMap::new();
        for key in self.detectors.keys() {
            *out.entry(key.edge_key()).or_insert(0) += 1;
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&DetectorKey, &Detector)> {
        self.detectors.iter()
    }

    fn absorb(&mut self, other: DetectorRegistry) {
        self.created += other.created;
        self.detectors.extend(other.detectors);
    }

    fn split_off(&mut self, workers: usize) -> Vec<DetectorRegistry> {
        let mut shards: Vec<DetectorRegistry> =
            (0..workers).map(|_| DetectorRegistry::default()).collect();
        for (key, det) in self.detectors.drain() {
            shards[shard_of(&key, workers)].detectors.insert(key, det);
        }
        shards
    }
}

fn shard_of(key: &DetectorKey, workers: usize) -> usize {
    let mut h = DefaultHasher::new();
    key.hash(&mut h);
    (h.finish() % workers as u64) as usize
}

/// Snapshot reduced to what a detector needs.
#[derive(Debug, Clone)]
struct Routed {
    seq: usize,
    key: DetectorKey,
    value: i64,
    event_time: DateTime<Utc>,
    course: String,
}

pub struct Engine {
    config: EngineConfig,
    registry: DetectorRegistry,
    stats: EngineStats,
    high_water: Option<DateTime<Utc>>,
    stop_positions: HashMap<StopId, (f64, f64)>,
    learn_positions: bool,
    seq: usize,
}

impl Engine {
    pub fn new(config: EngineConfig) -> Result<Self, EngineError> {
        config.detector.validate()?;
        Ok(Self {
            config,
            registry: DetectorRegistry::default(),
            stats: EngineStats::default(),
            high_water: None,
            stop_positions: HashMap::new(),
            learn_positions: true,
            seq: 0,
        })
    }

    /// Uses a fixed stop table for event positions instead of learning
    /// positions from the first departure seen at each stop.
    pub fn with_stop_positions(
        mut self,
        positions: impl IntoIterator<Item = (StopId, (f64, f64))>,
    ) -> Self {
        self.stop_positions = positions.into_iter().collect();
        self.learn_positions = false;
        self
    }

    pub fn config(&self) -> &EngineConfig {
        &self.config
    }

    pub fn registry(&self) -> &DetectorRegistry {
        &self.registry
    }

    pub fn stats(&self) -> &EngineStats {
        &self.stats
    }

    pub fn stop_positions(&self) -> &HashMap<StopId, (f64, f64)> {
        &self.stop_positions
    }

    /// Bookkeeping half of processing: filters, keys and values a snapshot
    /// without touching any detector.
    fn route(&mut self, snapshot: &VehicleSnapshot) -> Option<Routed> {
        self.stats.records_seen += 1;
        let seq = self.seq;
        self.seq += 1;
        if !snapshot.in_service {
            self.stats.skipped_not_in_service += 1;
            return None;
        }
        if snapshot.edge().is_err() {
            self.stats.skipped_unusable += 1;
            return None;
        }
        let Ok(value) = self.config.signal.value_of(snapshot) else {
            self.stats.skipped_unusable += 1;
            return None;
        };
        if let Some(high) = self.high_water {
            if (high - snapshot.event_time).num_seconds() > self.config.late_tolerance_s {
                self.stats.skipped_late += 1;
                return None;
            }
        }
        self.high_water = Some(
            self.high_water
                .map_or(snapshot.event_time, |h| h.max(snapshot.event_time)),
        );

        self.stats.records_processed += 1;
        let day = snapshot
            .event_time
            .with_timezone(&self.config.timezone)
            .date_naive();
        *self.stats.records_per_day.entry(day).or_insert(0) += 1;
        if self.learn_positions {
            self.stop_positions
                .entry(snapshot.curr_stop.clone())
                .or_insert((snapshot.lat, snapshot.lon));
        }
        Some(Routed {
            seq,
            key: detector_id(snapshot, self.config.mode, self.config.timezone),
            value,
            event_time: snapshot.event_time,
            course: snapshot.course.clone(),
        })
    }

    fn finish(&mut self, event: &DetectionEvent) {
        self.stats.detections += 1;
        match event.direction {
            Direction::Increase => self.stats.increases += 1,
            Direction::Reduction => self.stats.reductions += 1,
        }
    }

    fn position_of(&self, stop: &StopId) -> (Option<f64>, Option<f64>) {
        match self.stop_positions.get(stop) {
            Some(&(lat, lon)) => (Some(lat), Some(lon)),
            None => (None, None),
        }
    }

    /// Processes one snapshot, returning a detection if its detector fired.
    pub fn process(
        &mut self,
        snapshot: &VehicleSnapshot,
    ) -> Result<Option<DetectionEvent>, EngineError> {
        let Some(routed) = self.route(snapshot) else {
            return Ok(None);
        };
        let event = feed(&mut self.registry, &self.config, routed)?.map(|(_, mut e)| {
            (e.lat, e.lon) = self.position_of(&e.key.curr);
            e
        });
        if let Some(e) = &event {
            self.finish(e);
        }
        Ok(event)
    }

    /// Lazily detects over a source; events come out in processing order.
    pub fn detections<'a, I>(
        &'a mut self,
        source: I,
    ) -> impl Iterator<Item = Result<DetectionEvent, EngineError>> + 'a
    where
        I: IntoIterator<Item = VehicleSnapshot> + 'a,
    {
        source
            .into_iter()
            .filter_map(move |s| self.process(&s).transpose())
    }

    pub fn run<I>(&mut self, source: I) -> Result<Vec<DetectionEvent>, EngineError>
    where
        I: IntoIterator<Item = VehicleSnapshot>,
    {
        let mut out = Vec::new();
        for snapshot in source {
            if let Some(e) = self.process(&snapshot)? {
                out.push(e);
            }
        }
        Ok(out)
    }

    /// Same result as [`Engine::run`], with detectors sharded by key hash
    /// across `workers` threads. Events are returned in stream order.
    pub fn run_parallel(
        &mut self,
        source: &[VehicleSnapshot],
        workers: usize,
    ) -> Result<Vec<DetectionEvent>, EngineError> {
        let workers = workers.max(1);
        if workers == 1 {
            return self.run(source.iter().cloned());
        }
        let mut shards: Vec<Vec<Routed>> = vec![Vec::new(); workers];
        for snapshot in source {
            if let Some(r) = self.route(snapshot) {
                shards[shard_of(&r.key, workers)].push(r);
            }
        }
        let registries = self.registry.split_off(workers);
        let config = &self.config;
        let results: Vec<Result<ShardOutput, EngineError>> = std::thread::scope(|scope| {
            let handles: Vec<_> = shards
                .into_iter()
                .zip(registries)
                .map(|(routed, mut registry)| {
                    scope.spawn(move || {
                        let mut events = Vec::new();
                        for r in routed {
                            if let Some(e) = feed(&mut registry, config, r)? {
                                events.push(e);
                            }
                        }
                        Ok((registry, events))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().unwrap_or(Err(EngineError::WorkerPanicked)))
                .collect()
        });

        let mut events = Vec::new();
        for result in results {
            let (registry, shard_events) = result?;
            self.registry.absorb(registry);
            events.extend(shard_events);
        }
        events.sort_by_key(|(seq, _)| *seq);
        let mut out = Vec::with_capacity(events.len());
        for (_, mut e) in events {
            (e.lat, e.lon) = self.position_of(&e.key.curr);
            self.finish(&e);
            out.push(e);
        }
        Ok(out)
    }
}

type ShardOutput = (DetectorRegistry, Vec<(usize, DetectionEvent)>);

fn feed(
    registry: &mut DetectorRegistry,
    config: &EngineConfig,
    routed: Routed,
) -> Result<Option<(usize, DetectionEvent)>, EngineError> {
    let detector = registry.get_or_create(routed.key.clone(), &config.detector)?;
    if !detector.add_value(routed.value as f64)? {
        return Ok(None);
    }
    let (pre_mean, post_mean) = detector.pre_post_means()?;
    Ok(Some((
        routed.seq,
        DetectionEvent {
            key: routed.key,
            detector: config.detector.kind,
            signal: config.signal,
            event_time: routed.event_time,
            value: routed.value,
            pre_mean,
            post_mean,
            direction: Direction::from_means(pre_mean, post_mean),
            course: routed.course,
            lat: None,
            lon: None,
        },
    )))
}
