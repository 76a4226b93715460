//! Synthetic transit city with known delay regimes.
//!
//! Stops are scattered in a bounding box; each line is a loop built by a
//! short nearest-neighbour walk. Courses leave the terminus every headway
//! during service hours and the terminus is a timing point: courses depart it
//! on time. Running times get zero-mean Gaussian noise that accumulates along
//! the loop, so delays propagate downstream.
//!
//! A perturbation holds vehicles at the destination stop of one edge for
//! `added_delay_s` seconds. The hold is absorbed by the next running time, so
//! only that edge's delay regime changes.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, Duration, NaiveDate, TimeZone, Timelike, Utc};
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::replay::{
    write_schedule_csv, write_snapshots_jsonl, BoundingBox, RawLocationRecord, ScheduleEntry,
};
use super::{service_date, IngestError};
use crate::model::{Edge, StopId, VehicleSnapshot};

pub const SNAPSHOT_FILE: &str = "snapshots.jsonl";
pub const SCHEDULE_FILE: &str = "schedule.csv";
pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PerturbationKind {
    /// Active for whole service days from `start_day`.
    Step,
    /// Active only for departures inside `[from_hour, to_hour)` each day.
    Hourly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerturbationSpec {
    /// Edge given by its stops...
    #[serde(default)]
    pub from: Option<StopId>,
    #[serde(default)]
    pub to: Option<StopId>,
    /// ...or by line index and edge position along the loop.
    #[serde(default)]
    pub line: Option<usize>,
    #[serde(default)]
    pub position: Option<usize>,
    pub kind: PerturbationKind,
    /// First affected service day, 0-based.
    #[serde(default)]
    pub start_day: u32,
    /// First unaffected service day; open-ended when absent.
    #[serde(default)]
    pub end_day: Option<u32>,
    #[serde(default)]
    pub from_hour: Option<u8>,
    #[serde(default)]
    pub to_hour: Option<u8>,
    pub added_delay_s: i64,
}

impl PerturbationSpec {
    pub fn step_at(line: usize, position: usize, start_day: u32, added_delay_s: i64) -> Self {
        Self {
            from: None,
            to: None,
            line: Some(line),
            position: Some(position),
            kind: PerturbationKind::Step,
            start_day,
            end_day: None,
            from_hour: None,
            to_hour: None,
            added_delay_s,
        }
    }

    pub fn hourly_at(
        line: usize,
        position: usize,
        from_hour: u8,
        to_hour: u8,
        added_delay_s: i64,
    ) -> Self {
        Self {
            kind: PerturbationKind::Hourly,
            from_hour: Some(from_hour),
            to_hour: Some(to_hour),
            ..Self::step_at(line, position, 0, added_delay_s)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RouteSpec {
    pub name: String,
    pub stops: Vec<StopId>,
}

/// Accepts both a TOML local date (`2021-12-18`) and a quoted string.
fn date_or_string<'de, D: serde::Deserializer<'de>>(d: D) -> Result<NaiveDate, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Text(String),
        Toml(toml::value::Datetime),
    }
    let text = match Raw::deserialize(d)? {
        Raw::Text(s) => s,
        Raw::Toml(t) => t.to_string(),
    };
    text.parse().map_err(serde::de::Error::custom)
}

fn default_start_date() -> NaiveDate {
    NaiveDate::from_ymd_opt(2021, 12, 18).expect("valid date")
}
fn default_stops_per_line() -> usize {
    10
}
fn default_headway() -> u32 {
    600
}
fn default_service_start() -> u8 {
    5
}
fn default_service_end() -> u8 {
    23
}
fn default_noise() -> f64 {
    20.0
}
fn default_speed() -> f64 {
    20.0
}
fn default_dwell() -> u32 {
    20
}
fn default_min_run() -> u32 {
    90
}
fn default_bbox() -> BoundingBox {
    BoundingBox {
        min_lat: 52.20,
        max_lat: 52.26,
        min_lon: 20.96,
        max_lon: 21.06,
    }
}

/// Scenario description, usually read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub rng_seed: u64,
    /// Seed for the stop layout and line shapes; defaults to `rng_seed`.
    #[serde(default)]
    pub layout_seed: Option<u64>,
    #[serde(default = "default_start_date", deserialize_with = "date_or_string")]
    pub start_date: NaiveDate,
    pub days: u32,
    pub stops: usize,
    /// Number of generated lines; ignored when `routes` is given.
    #[serde(default)]
    pub lines: usize,
    #[serde(default = "default_stops_per_line")]
    pub stops_per_line: usize,
    /// Explicit line loops over generated stop ids (`S001`, `S002`, ...).
    #[serde(default)]
    pub routes: Vec<RouteSpec>,
    #[serde(default = "default_headway")]
    pub headway_s: u32,
    #[serde(default = "default_service_start")]
    pub service_start_hour: u8,
    #[serde(default = "default_service_end")]
    pub service_end_hour: u8,
    #[serde(default = "default_noise")]
    pub noise_std_s: f64,
    #[serde(default = "default_speed")]
    pub speed_kmh: f64,
    #[serde(default = "default_dwell")]
    pub dwell_s: u32,
    #[serde(default = "default_min_run")]
    pub min_run_s: u32,
    #[serde(default = "default_bbox")]
    pub bbox: BoundingBox,
    #[serde(default)]
    pub perturbations: Vec<PerturbationSpec>,
}

impl ScenarioSpec {
    /// A city with generated lines and the default timetable.
    pub fn city(rng_seed: u64, stops: usize, lines: usize, days: u32) -> Self {
        Self {
            rng_seed,
            layout_seed: None,
            start_date: default_start_date(),
            days,
            stops,
            lines,
            stops_per_line: default_stops_per_line(),
            routes: Vec::new(),
            headway_s: default_headway(),
            service_start_hour: default_service_start(),
            service_end_hour: default_service_end(),
            noise_std_s: default_noise(),
            speed_kmh: default_speed(),
            dwell_s: default_dwell(),
            min_run_s: default_min_run(),
            bbox: default_bbox(),
            perturbations: Vec::new(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, IngestError> {
        let spec: ScenarioSpec =
            toml::from_str(text).map_err(|e| IngestError::InvalidSpec(e.to_string()))?;
        Ok(spec)
    }

    pub fn from_path(path: &Path) -> Result<Self, IngestError> {
        let text = std::fs::read_to_string(path).map_err(|e| IngestError::open(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serialises")
    }

    /// Stop layout and line loops, without generating any traffic.
    pub fn layout(&self) -> Result<Layout, IngestError> {
        self.validate_shape()?;
        let mut rng = ChaCha8Rng::seed_from_u64(self.layout_seed.unwrap_or(self.rng_seed));
        let stops: Vec<StopPosition> = (0..self.stops)
            .map(|i| StopPosition {
                id: StopId::new(format!("S{:03}", i + 1)).expect("non-empty"),
                lat: round6(rng.random_range(self.bbox.min_lat..=self.bbox.max_lat)),
                lon: round6(rng.random_range(self.bbox.min_lon..=self.bbox.max_lon)),
            })
            .collect();

        let lines = if self.routes.is_empty() {
            (0..self.lines)
                .map(|l| Line {
                    name: format!("L{:02}", l + 1),
                    stops: walk_loop(&stops, self.stops_per_line, &mut rng)
                        .into_iter()
                        .map(|i| stops[i].id.clone())
                        .collect(),
                })
                .collect()
        } else {
            self.routes
                .iter()
                .map(|r| Line {
                    name: r.name.clone(),
                    stops: r.stops.clone(),
                })
                .collect()
        };
        let layout = Layout { stops, lines };
        layout.validate()?;
        Ok(layout)
    }

    fn validate_shape(&self) -> Result<(), IngestError> {
        let fail = |m: &str| Err(IngestError::InvalidSpec(m.to_owned()));
        if self.days == 0 {
            return fail("days must be at least 1");
        }
        if self.stops < 2 {
            return fail("at least 2 stops are required");
        }
        if self.routes.is_empty() {
            if self.lines == 0 {
                return fail("either lines > 0 or explicit routes are required");
            }
            if self.stops_per_line < 2 || self.stops_per_line > self.stops {
                return fail("stops_per_line must be in 2..=stops");
            }
        }
        if self.headway_s == 0 {
            return fail("headway_s must be positive");
        }
        if !(self.noise_std_s.is_finite() && self.noise_std_s >= 0.0) {
            return fail("noise_std_s must be finite and non-negative");
        }
        if !(self.speed_kmh.is_finite() && self.speed_kmh > 0.0) {
            return fail("speed_kmh must be positive");
        }
        if self.service_start_hour >= self.service_end_hour || self.service_end_hour > 24 {
            return fail("service hours must satisfy start < end <= 24");
        }
        if self.service_start_hour < SERVICE_DAY_START_HOUR {
            return fail("service must start at or after the 03:00 service-day boundary");
        }
        Ok(())
    }

    fn resolve(&self, layout: &Layout) -> Result<Vec<Perturbation>, IngestError> {
        self.perturbations
            .iter()
            .map(|p| {
                let edge = match (&p.from, &p.to, p.line, p.position) {
                    (Some(from), Some(to), None, None) => Edge::new(from.clone(), to.clone())
                        .map_err(|e| IngestError::InvalidSpec(e.to_string()))?,
                    (None, None, Some(line), Some(position)) => {
                        let line = layout.lines.get(line).ok_or_else(|| {
                            IngestError::InvalidSpec(format!(
                                "perturbation refers to missing line {line}"
                            ))
                        })?;
                        line.edges().nth(position).ok_or_else(|| {
                            IngestError::InvalidSpec(format!(
                                "line {} has no edge position {position}",
                                line.name
                            ))
                        })?
                    }
                    _ => {
                        return Err(IngestError::InvalidSpec(
                            "perturbation needs either from/to or line/position".into(),
                        ))
                    }
                };
                if !layout.lines.iter().any(|l| l.edges().any(|e| e == edge)) {
                    return Err(IngestError::InvalidSpec(format!(
                        "perturbation edge {edge} is not on any line"
                    )));
                }
                if p.end_day.is_some_and(|end| end <= p.start_day) {
                    return Err(IngestError::InvalidSpec(
                        "end_day must be after start_day".into(),
                    ));
                }
                let hours = match p.kind {
                    PerturbationKind::Step => (0, 24),
                    PerturbationKind::Hourly => match (p.from_hour, p.to_hour) {
                        (Some(f), Some(t)) if f < t && t <= 24 => (f, t),
                        _ => {
                            return Err(IngestError::InvalidSpec(
                                "hourly perturbation needs from_hour < to_hour <= 24".into(),
                            ))
                        }
                    },
                };
                Ok(Perturbation {
                    edge,
                    kind: p.kind,
                    days: (p.start_day, p.end_day.unwrap_or(self.days)),
                    hours,
                    added: p.added_delay_s,
                })
            })
            .collect()
    }
}

/// Service days run from 03:00 to 03:00 the next calendar day.
pub const SERVICE_DAY_START_HOUR: u8 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopPosition {
    pub id: StopId,
    pub lat: f64,
    pub lon: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Line {
    pub name: String,
    /// Loop order; the last stop connects back to the first.
    pub stops: Vec<StopId>,
}

impl Line {
    pub fn edges(&self) -> impl Iterator<Item = Edge> + '_ {
        let k = self.stops.len();
        (0..k).map(move |j| Edge {
            prev: self.stops[j].clone(),
            curr: self.stops[(j + 1) % k].clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub stops: Vec<StopPosition>,
    pub lines: Vec<Line>,
}

impl Layout {
    fn validate(&self) -> Result<(), IngestError> {
        for line in &self.lines {
            if line.stops.len() < 2 {
                return Err(IngestError::InvalidSpec(format!(
                    "line {} needs at least 2 stops",
                    line.name
                )));
            }
            for (i, s) in line.stops.iter().enumerate() {
                if self.position(s).is_none() {
                    return Err(IngestError::InvalidSpec(format!(
                        "line {} uses unknown stop {s}",
                        line.name
                    )));
                }
                if line.stops[i + 1..].contains(s) {
                    return Err(IngestError::InvalidSpec(format!(
                        "line {} visits {s} twice",
                        line.name
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn position(&self, stop: &StopId) -> Option<(f64, f64)> {
        self.stops
            .iter()
            .find(|s| &s.id == stop)
            .map(|s| (s.lat, s.lon))
    }

    pub fn positions(&self) -> impl Iterator<Item = (StopId, (f64, f64))> + '_ {
        self.stops.iter().map(|s| (s.id.clone(), (s.lat, s.lon)))
    }
}

#[derive(Debug, Clone)]
struct Perturbation {
    edge: Edge,
    kind: PerturbationKind,
    days: (u32, u32),
    hours: (u8, u8),
    added: i64,
}

impl Perturbation {
    /// Hold added at the edge's destination for a departure that would
    /// otherwise leave at `base_departure` on service day `day`.
    fn hold(&self, edge: &Edge, day: u32, base_departure: DateTime<Utc>) -> i64 {
        if &self.edge != edge || day < self.days.0 || day >= self.days.1 {
            return 0;
        }
        match self.kind {
            PerturbationKind::Step => self.added,
            PerturbationKind::Hourly => {
                // the held departure itself must fall inside the window
                let hour = (base_departure + Duration::seconds(self.added)).hour() as u8;
                if hour >= self.hours.0 && hour < self.hours.1 {
                    self.added
                } else {
                    0
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthEntry {
    pub edge: Edge,
    pub kind: PerturbationKind,
    pub added_delay_s: i64,
    pub start: DateTime<Utc>,
    pub end: DateTime<Utc>,
    pub from_hour: u8,
    pub to_hour: u8,
    /// Departures that actually received the hold.
    pub affected_departures: u64,
    /// Edge whose delay change absorbs the hold (the next edge of each affected course).
    pub recovery_edges: Vec<Edge>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EdgeCount {
    pub edge: Edge,
    pub traversals: u64,
}

/// Everything the generator knows about the regimes it produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub perturbations: Vec<TruthEntry>,
    /// Traversals emitted per edge.
    pub dispatch: Vec<EdgeCount>,
    pub layout: Layout,
    pub service_days: Vec<NaiveDate>,
}

impl GroundTruth {
    pub fn dispatch_map(&self) -> BTreeMap<Edge, u64> {
        self.dispatch
            .iter()
            .map(|c| (c.edge.clone(), c.traversals))
            .collect()
    }

    pub fn perturbed_edges(&self) -> Vec<Edge> {
        self.perturbations.iter().map(|p| p.edge.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub snapshots: Vec<VehicleSnapshot>,
    /// Vehicle id of each snapshot, parallel to `snapshots`.
    pub vehicles: Vec<String>,
    pub schedule: Vec<ScheduleEntry>,
    pub truth: GroundTruth,
}

impl Scenario {
    pub fn records(&self) -> impl Iterator<Item = RawLocationRecord> + '_ {
        self.snapshots
            .iter()
            .zip(&self.vehicles)
            .map(|(s, v)| RawLocationRecord::from_snapshot(s, v.clone()))
    }

    /// Writes the snapshot, schedule and ground-truth files into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<ScenarioFiles, IngestError> {
        std::fs::create_dir_all(dir).map_err(|e| IngestError::open(dir, e))?;
        let files = ScenarioFiles::in_dir(dir);
        let create = |p: &Path| {
            File::create(p)
                .map(BufWriter::new)
                .map_err(|e| IngestError::open(p, e))
        };
        write_snapshots_jsonl(create(&files.snapshots)?, self.records())?;
        write_schedule_csv(create(&files.schedule)?, &self.schedule)?;
        let mut truth = create(&files.ground_truth)?;
        serde_json::to_writer_pretty(&mut truth, &self.truth)?;
        truth.write_all(b"\n")?;
        truth.flush()?;
        Ok(files)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ScenarioFiles {
    pub snapshots: PathBuf,
    pub schedule: PathBuf,
    pub ground_truth: PathBuf,
}

impl ScenarioFiles {
    pub fn in_dir(dir: &Path) -> Self {
        Self {
            snapshots: dir.join(SNAPSHOT_FILE),
            schedule: dir.join(SCHEDULE_FILE),
            ground_truth: dir.join(GROUND_TRUTH_FILE),
        }
    }
}

fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

fn haversine_km(a: &StopPosition, b: &StopPosition) -> f64 {
    let (lat1, lat2) = (a.lat.to_radians(), b.lat.to_radians());
    let dlat = lat2 - lat1;
    let dlon = (b.lon - a.lon).to_radians();
    let h = (dlat / 2.0).sin().powi(2) + lat1.cos() * lat2.cos() * (dlon / 2.0).sin().powi(2);
    2.0 * 6371.0 * h.sqrt().asin()
}

/// Random start, then repeatedly one of the three nearest unvisited stops.
fn walk_loop(stops: &[StopPosition], len: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut visited = vec![false; stops.len()];
    let mut current = rng.random_range(0..stops.len());
    let mut order = vec![current];
    visited[current] = true;
    while order.len() < len {
        let mut candidates: Vec<(f64, usize)> = (0..stops.len())
            .filter(|&i| !visited[i])
            .map(|i| (haversine_km(&stops[current], &stops[i]), i))
            .collect();
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let pick = index::sample(rng, candidates.len().min(3), 1).index(0);
        current = candidates[pick].1;
        visited[current] = true;
        order.push(current);
    }
    order
}

/// Generates the scenario. Same spec, same output, byte for byte.
pub fn generate(spec: &ScenarioSpec) -> Result<Scenario, IngestError> {
    let layout = spec.layout()?;
    let perturbations = spec.resolve(&layout)?;
    let mut noise_rng = ChaCha8Rng::seed_from_u64(spec.rng_seed ^ 0x5d_cd_5d_cd);
    let noise = if spec.noise_std_s > 0.0 {
        Some(
            Normal::new(0.0, spec.noise_std_s)
                .map_err(|e| IngestError::InvalidSpec(e.to_string()))?,
        )
    } else {
        None
    };
    // one draw per running time, in generation order
    let mut draw = move || noise.map_or(0, |n| n.sample(&mut noise_rng).round() as i64);

    let position_index: BTreeMap<&StopId, &StopPosition> =
        layout.stops.iter().map(|s| (&s.id, s)).collect();
    let run_time = |a: &StopId, b: &StopId| -> i64 {
        let km = haversine_km(position_index[a], position_index[b]);
        let travel = (km / spec.speed_kmh * 3600.0).round() as i64;
        travel.max(i64::from(spec.min_run_s)) + i64::from(spec.dwell_s)
    };

    let mut snapshots = Vec::new();
    let mut vehicles = Vec::new();
    let mut schedule = Vec::new();
    let mut dispatch: BTreeMap<Edge, u64> = BTreeMap::new();
    let mut affected = vec![0u64; perturbations.len()];
    let mut recovery: Vec<Vec<Edge>> = vec![Vec::new(); perturbations.len()];
    let n_lines = layout.lines.len() as i64;

    for (li, line) in layout.lines.iter().enumerate() {
        let runs: Vec<i64> = line.edges().map(|e| run_time(&e.prev, &e.curr)).collect();
        let loop_s: i64 = runs.iter().sum();
        let fleet = (loop_s / i64::from(spec.headway_s) + 2) as usize;
        let offset = li as i64 * i64::from(spec.headway_s) / n_lines.max(1);
        for day in 0..spec.days {
            let date = spec.start_date + Duration::days(i64::from(day));
            let midnight = Utc.from_utc_datetime(&date.and_hms_opt(0, 0, 0).expect("midnight"));
            let first = midnight
                + Duration::hours(i64::from(spec.service_start_hour))
                + Duration::seconds(offset);
            let last = midnight + Duration::hours(i64::from(spec.service_end_hour));
            let mut departure = first;
            let mut n = 0usize;
            while departure < last {
                let course = format!("{}-{}-{:03}", line.name, date.format("%Y%m%d"), n);
                let vehicle = format!("{}-V{:02}", line.name, n % fleet);
                let mut sched = departure;
                let mut base = departure;
                let mut real = base;
                schedule.push(ScheduleEntry {
                    line: line.name.clone(),
                    course: course.clone(),
                    stop: line.stops[0].clone(),
                    sched_departure: sched,
                    service_date: date,
                });
                let mut held_prev: Vec<usize> = Vec::new();
                for (j, edge) in line.edges().enumerate() {
                    let sched_prev = sched;
                    let real_prev = real;
                    sched += Duration::seconds(runs[j]);
                    base += Duration::seconds((runs[j] + draw()).max(1));
                    let mut hold = 0;
                    let mut held_now = Vec::new();
                    for (pi, p) in perturbations.iter().enumerate() {
                        let h = p.hold(&edge, day, base);
                        if h != 0 {
                            hold += h;
                            affected[pi] += 1;
                            held_now.push(pi);
                        }
                    }
                    for &pi in &held_prev {
                        if !recovery[pi].contains(&edge) {
                            recovery[pi].push(edge.clone());
                        }
                    }
                    held_prev = held_now;
                    real = (base + Duration::seconds(hold)).max(real_prev + Duration::seconds(1));

                    let (lat, lon) = {
                        let p = position_index[&edge.curr];
                        (p.lat, p.lon)
                    };
                    // the closing edge re-enters the terminus, listed again in the schedule
                    schedule.push(ScheduleEntry {
                        line: line.name.clone(),
                        course: course.clone(),
                        stop: edge.curr.clone(),
                        sched_departure: sched,
                        service_date: date,
                    });
                    *dispatch.entry(edge.clone()).or_insert(0) += 1;
                    snapshots.push(VehicleSnapshot {
                        event_time: real,
                        line: line.name.clone(),
                        course: course.clone(),
                        lat,
                        lon,
                        curr_stop: edge.curr,
                        prev_stop: edge.prev,
                        real_dep_curr: Some(real),
                        sched_dep_curr: Some(sched),
                        real_dep_prev: Some(real_prev),
                        sched_dep_prev: Some(sched_prev),
                        in_service: true,
                    });
                    vehicles.push(vehicle.clone());
                }
                n += 1;
                departure = first + Duration::seconds(i64::from(spec.headway_s) * n as i64);
            }
        }
    }

    let mut order: Vec<usize> = (0..snapshots.len()).collect();
    order.sort_by_key(|&i| snapshots[i].event_time);
    let snapshots: Vec<_> = order.iter().map(|&i| snapshots[i].clone()).collect();
    let vehicles: Vec<_> = order.iter().map(|&i| vehicles[i].clone()).collect();

    let day_start = |d: u32| {
        let date = spec.start_date + Duration::days(i64::from(d));
        Utc.from_utc_datetime(
            &date
                .and_hms_opt(u32::from(SERVICE_DAY_START_HOUR), 0, 0)
                .expect("valid time"),
        )
    };
    let truth = GroundTruth {
        perturbations: perturbations
            .iter()
            .enumerate()
            .map(|(i, p)| TruthEntry {
                edge: p.edge.clone(),
                kind: p.kind,
                added_delay_s: p.added,
                start: day_start(p.days.0),
                end: day_start(p.days.1),
                from_hour: p.hours.0,
                to_hour: p.hours.1,
                affected_departures: affected[i],
                recovery_edges: recovery[i].clone(),
            })
            .collect(),
        dispatch: dispatch
            .into_iter()
            .map(|(edge, traversals)| EdgeCount { edge, traversals })
            .collect(),
        service_days: {
            let mut days: Vec<NaiveDate> = snapshots
                .iter()
                .map(|s| service_date(s.event_time))
                .collect();
            days.dedup();
            days
        },
        layout,
    };
    Ok(Scenario {
        snapshots,
        vehicles,
        schedule,
        truth,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(seed: u64) -> ScenarioSpec {
        let mut spec = ScenarioSpec::city(seed, 12, 2, 2);
        spec.stops_per_line = 5;
        spec.headway_s = 1800;
        spec
    }

    #[test]
    fn zero_noise_runs_on_time() {
        let mut spec = small(1);
        spec.noise_std_s = 0.0;
        let scenario = generate(&spec).unwrap();
        assert!(!scenario.snapshots.is_empty());
        for s in &scenario.snapshots {
            assert_eq!(s.delay(), Ok(0));
            assert_eq!(s.delta_delay(), Ok(0));
        }
    }

    #[test]
    fn deterministic_under_seed() {
        let a = generate(&small(5)).unwrap();
        let b = generate(&small(5)).unwrap();
        assert_eq!(a.snapshots, b.snapshots);
        assert_eq!(a.schedule, b.schedule);
        assert_eq!(a.truth, b.truth);
        let c = generate(&small(6)).unwrap();
        assert_ne!(a.snapshots, c.snapshots);
    }

    #[test]
    fn snapshots_are_time_ordered_and_valid() {
        let scenario = generate(&small(2)).unwrap();
        let s = &scenario.snapshots;
        assert!(s.windows(2).all(|w| w[0].event_time <= w[1].event_time));
        for snap in s {
            assert_ne!(snap.curr_stop, snap.prev_stop);
            assert!(snap.real_dep_prev.unwrap() < snap.real_dep_curr.unwrap());
            assert!(snap.sched_dep_prev.unwrap() < snap.sched_dep_curr.unwrap());
        }
    }

    #[test]
    fn dispatch_ledger_counts_snapshots() {
        let scenario = generate(&small(3)).unwrap();
        let total: u64 = scenario.truth.dispatch.iter().map(|c| c.traversals).sum();
        assert_eq!(total as usize, scenario.snapshots.len());
    }

    #[test]
    fn days_map_to_service_days() {
        let mut spec = small(4);
        spec.days = 4;
        let scenario = generate(&spec).unwrap();
        assert_eq!(scenario.truth.service_days.len(), 4);
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut spec = small(1);
        spec.days = 0;
        assert!(generate(&spec).is_err());

        let mut spec = small(1);
        spec.noise_std_s = -1.0;
        assert!(generate(&spec).is_err());

        let mut spec = small(1);
        spec.perturbations.push(PerturbationSpec {
            from: Some(StopId::new("S001").unwrap()),
            to: Some(StopId::new("S999").unwrap()),
            ..PerturbationSpec::step_at(0, 0, 0, 60)
        });
        assert!(generate(&spec).is_err());

        let mut spec = small(1);
        spec.perturbations
            .push(PerturbationSpec::step_at(0, 42, 0, 60));
        assert!(generate(&spec).is_err());

        let mut spec = small(1);
        spec.perturbations.push(PerturbationSpec {
            to_hour: Some(8),
            ..PerturbationSpec::hourly_at(0, 0, 8, 8, 60)
        });
        assert!(generate(&spec).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let mut spec = small(9);
        spec.perturbations
            .push(PerturbationSpec::hourly_at(0, 1, 8, 9, 120));
        let text = spec.to_toml();
        assert_eq!(ScenarioSpec::from_toml(&text).unwrap(), spec);
        assert!(ScenarioSpec::from_toml("rng_seed = 1\nbogus = 2\n").is_err());
        let bare = ScenarioSpec::from_toml(
            "rng_seed = 1\ndays = 1\nstops = 3\nlines = 1\nstart_date = 2022-01-03\n",
        );
        assert_eq!(
            bare.unwrap().start_date,
            NaiveDate::from_ymd_opt(2022, 1, 3).unwrap()
        );
    }

    #[test]
    fn step_mean_within_three_standard_errors() {
        let mut spec = ScenarioSpec::city(11, 20, 3, 4);
        spec.headway_s = 300;
        spec.perturbations
            .push(PerturbationSpec::step_at(1, 0, 1, 120));
        let scenario = generate(&spec).unwrap();
        let truth = &scenario.truth.perturbations[0];
        let after: Vec<i64> = scenario
            .snapshots
            .iter()
            .filter(|s| s.edge().unwrap() == truth.edge && s.event_time >= truth.start)
            .map(|s| s.delay().unwrap())
            .collect();
        let n = after.len() as f64;
        assert!(n > 100.0);
        let mean = after.iter().sum::<i64>() as f64 / n;
        let bound = 3.0 * spec.noise_std_s / n.sqrt();
        assert!((mean - 120.0).abs() <= bound, "mean {mean} bound {bound}");
        assert_eq!(truth.affected_departures as usize, after.len());
    }

    #[test]
    fn hourly_hold_stays_inside_its_hour() {
        let mut spec = small(7);
        spec.headway_s = 300;
        spec.noise_std_s = 0.0;
        spec.perturbations
            .push(PerturbationSpec::hourly_at(0, 1, 8, 9, 120));
        let scenario = generate(&spec).unwrap();
        let edge = scenario.truth.perturbations[0].edge.clone();
        let mut held = 0;
        for s in scenario
            .snapshots
            .iter()
            .filter(|s| s.edge().unwrap() == edge)
        {
            if s.delay().unwrap() > 0 {
                held += 1;
                assert_eq!(s.event_time.hour(), 8);
            }
        }
        assert!(held > 0);
        assert_eq!(held, scenario.truth.perturbations[0].affected_departures);
    }
}
