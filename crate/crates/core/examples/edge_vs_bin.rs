//! One detector per edge against one per (edge, hour): a daily 08:00 hold is
//! a change for the former and the normal state for the latter.
//!
//!     cargo run --example edge_vs_bin

use std::collections::BTreeMap;

use sdcd::detectors::{DetectorConfig, DetectorKind};
use sdcd::engine::{Engine, EngineConfig, KeyingMode, SignalKind};
use sdcd::ingest::{self, PerturbationSpec, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ScenarioSpec::city(7, 50, 8, 4);
    spec.headway_s = 300;
    spec.perturbations
        .push(PerturbationSpec::hourly_at(2, 0, 8, 9, 120));
    let scenario = ingest::generate(&spec)?;
    let held = scenario.truth.perturbations[0].edge.clone();

    for mode in [KeyingMode::Edge, KeyingMode::EdgeHour] {
        let config = EngineConfig::new(
            mode,
            SignalKind::Delay,
            DetectorConfig::new(DetectorKind::Adwin),
        );
        let mut engine = Engine::new(config)?;
        let events = engine.run(scenario.snapshots.iter().cloned())?;
        let mut per_key: BTreeMap<String, usize> = BTreeMap::new();
        for e in events
            .iter()
            .filter(|e| e.key.prev == held.prev && e.key.curr == held.curr)
        {
            *per_key.entry(e.key.to_string()).or_default() += 1;
        }
        println!(
            "{mode}: {} detectors, {} detections overall, on {held}: {per_key:?}",
            engine.registry().created_count(),
            events.len()
        );
    }
    Ok(())
}
