//! Transport network and vehicle snapshot types, plus delay arithmetic.
//!
//! A line is a loop of stops; consecutive stops of any line form a directed
//! [`Edge`]. Every AVL record is reduced to a [`VehicleSnapshot`] carrying the
//! two most recently departed stops of one vehicle course, with real and
//! scheduled departure times at both.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{DateTime, Timelike, Utc};
use chrono_tz::Tz;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("stop identifier must be non-empty")]
    EmptyStopId,
    #[error("edge endpoints must differ (stop {0})")]
    SelfLoop(StopId),
    #[error("missing departure timestamp at {0} stop")]
    MissingDeparture(&'static str),
    #[error("record has no course identifier")]
    MissingCourse,
}

/// Opaque stop identifier.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct StopId(String);

impl StopId {
    pub fn new(id: impl Into<String>) -> Result<Self, ModelError> {
        let id = id.into();
        if id.is_empty() {
            return Err(ModelError::EmptyStopId);
        }
        Ok(Self(id))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for StopId {
    type Error = ModelError;

    fn try_from(value: String) -> Result<Self, Self::Error> {
        Self::new(value)
    }
}

impl From<StopId> for String {
    fn from(value: StopId) -> Self {
        value.0
    }
}

impl fmt::Display for StopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl fmt::Debug for StopId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "StopId({})", self.0)
    }
}

/// Directed pair of consecutively visited stops.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Edge {
    pub prev: StopId,
    pub curr: StopId,
}

impl Edge {
    pub fn new(prev: StopId, curr: StopId) -> Result<Self, ModelError> {
        if prev == curr {
            return Err(ModelError::SelfLoop(prev));
        }
        Ok(Self { prev, curr })
    }
}

impl fmt::Display for Edge {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}->{}", self.prev, self.curr)
    }
}

/// Directed graph of stops and the edges observed between them.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TransportGraph {
    stops: BTreeSet<StopId>,
    edges: BTreeSet<Edge>,
}

impl TransportGraph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn stops(&self) -> &BTreeSet<StopId> {
        &self.stops
    }

    pub fn edges(&self) -> &BTreeSet<Edge> {
        &self.edges
    }

    pub fn contains_edge(&self, edge: &Edge) -> bool {
        self.edges.contains(edge)
    }

    /// Adds both stops of the snapshot and the edge between them.
    pub fn extend(&mut self, snapshot: &VehicleSnapshot) -> Result<(), ModelError> {
        let edge = snapshot.edge()?;
        self.insert_edge(edge);
        Ok(())
    }

    pub fn insert_edge(&mut self, edge: Edge) {
        self.stops.insert(edge.prev.clone());
        self.stops.insert(edge.curr.clone());
        self.edges.insert(edge);
    }
}

/// Returns the graph with the snapshot's edge added.
pub fn extend_graph(
    mut graph: TransportGraph,
    snapshot: &VehicleSnapshot,
) -> Result<TransportGraph, ModelError> {
    graph.extend(snapshot)?;
    Ok(graph)
}

/// One schedule-linked AVL record of a vehicle course.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleSnapshot {
    pub event_time: DateTime<Utc>,
    pub line: String,
    pub course: String,
    pub lat: f64,
    pub lon: f64,
    /// Most recently departed stop.
    pub curr_stop: StopId,
    /// Stop departed before `curr_stop`.
    pub prev_stop: StopId,
    pub real_dep_curr: Option<DateTime<Utc>>,
    pub sched_dep_curr: Option<DateTime<Utc>>,
    pub real_dep_prev: Option<DateTime<Utc>>,
    pub sched_dep_prev: Option<DateTime<Utc>>,
    pub in_service: bool,
}

impl VehicleSnapshot {
    pub fn edge(&self) -> Result<Edge, ModelError> {
        Edge::new(self.prev_stop.clone(), self.curr_stop.clone())
    }

    /// Delay at the current stop in whole seconds, positive when late.
    pub fn delay(&self) -> Result<i64, ModelError> {
        match (self.real_dep_curr, self.sched_dep_curr) {
            (Some(real), Some(sched)) => Ok(whole_seconds(real, sched)),
            _ => Err(ModelError::MissingDeparture("current")),
        }
    }

    /// Delay at the previous stop in whole seconds.
    pub fn delay_at_prev(&self) -> Result<i64, ModelError> {
        match (self.real_dep_prev, self.sched_dep_prev) {
            (Some(real), Some(sched)) => Ok(whole_seconds(real, sched)),
            _ => Err(ModelError::MissingDeparture("previous")),
        }
    }

    /// Delay gained along the edge; negative when the vehicle recovered time.
    pub fn delta_delay(&self) -> Result<i64, ModelError> {
        if self.course.is_empty() {
            return Err(ModelError::MissingCourse);
        }
        Ok(self.delay()? - self.delay_at_prev()?)
    }

    pub fn hour(&self, tz: Tz) -> u8 {
        hour_of(self.event_time, tz)
    }

    pub fn observation(&self, tz: Tz) -> Result<DelayObservation, ModelError> {
        Ok(DelayObservation {
            edge: self.edge()?,
            event_time: self.event_time,
            course: self.course.clone(),
            d: self.delay()?,
            delta_d: self.delta_delay()?,
            hour: self.hour(tz),
        })
    }
}

/// Derived delay sample for one edge traversal.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayObservation {
    pub edge: Edge,
    pub event_time: DateTime<Utc>,
    pub course: String,
    pub d: i64,
    pub delta_d: i64,
    pub hour: u8,
}

pub fn delay(snapshot: &VehicleSnapshot) -> Result<i64, ModelError> {
    snapshot.delay()
}

pub fn delta_delay(snapshot: &VehicleSnapshot) -> Result<i64, ModelError> {
    snapshot.delta_delay()
}

pub fn hour_of(time: DateTime<Utc>, tz: Tz) -> u8 {
    time.with_timezone(&tz).hour() as u8
}

// chrono truncates toward zero, which drops sub-second AVL precision.
fn whole_seconds(real: DateTime<Utc>, sched: DateTime<Utc>) -> i64 {
    (real - sched).num_seconds()
}
