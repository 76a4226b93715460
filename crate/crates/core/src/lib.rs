//! Streaming detection of significant delay changes in public transport.
//!
//! Vehicle snapshots are keyed by the edge they just traversed (optionally
//! by hour of day too), each key gets its own change detector, and every
//! detector firing becomes a [`engine::DetectionEvent`].

pub mod cli;
pub mod detectors;
pub mod engine;
pub mod ingest;
pub mod model;
pub mod report;
