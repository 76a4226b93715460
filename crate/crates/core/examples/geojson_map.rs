//! Writes detections of a synthetic run as a GeoJSON point layer.
//!
//!     cargo run --example geojson_map -- detections.geojson

use sdcd::detectors::{DetectorConfig, DetectorKind};
use sdcd::engine::{Engine, EngineConfig, KeyingMode, SignalKind};
use sdcd::ingest::{self, PerturbationSpec, ScenarioSpec};
use sdcd::report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "detections.geojson".into());

    let mut spec = ScenarioSpec::city(42, 50, 8, 4);
    spec.perturbations
        .push(PerturbationSpec::step_at(0, 3, 1, 120));
    spec.perturbations
        .push(PerturbationSpec::step_at(5, 6, 2, 90));
    let scenario = ingest::generate(&spec)?;

    let config = EngineConfig::new(
        KeyingMode::Edge,
        SignalKind::DeltaDelay,
        DetectorConfig::new(DetectorKind::Adwin),
    );
    let mut engine = Engine::new(config)?.with_stop_positions(scenario.truth.layout.positions());
    let events = engine.run(scenario.snapshots.iter().cloned())?;

    let layer = report::to_geojson(&events, engine.stop_positions());
    std::fs::write(&out, serde_json::to_string_pretty(&layer.collection)?)?;
    println!(
        "{} features ({} unplaced) -> {out}",
        layer.feature_count(),
        layer.unplaced.len()
    );
    Ok(())
}
