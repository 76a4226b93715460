//! Morning peak versus evening: detections on a city where one edge is held
//! between 08:00 and 09:00 every day.
//!
//!     cargo run --example peak_hours

use chrono_tz::Tz;
use sdcd::detectors::{DetectorConfig, DetectorKind};
use sdcd::engine::{Engine, EngineConfig, KeyingMode, SignalKind};
use sdcd::ingest::{self, PerturbationSpec, ScenarioSpec};
use sdcd::report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ScenarioSpec::city(8, 40, 6, 4);
    spec.headway_s = 300;
    spec.perturbations
        .push(PerturbationSpec::hourly_at(2, 0, 8, 9, 120));
    let scenario = ingest::generate(&spec)?;
    let held = &scenario.truth.perturbations[0].edge;

    let config = EngineConfig::new(
        KeyingMode::Edge,
        SignalKind::Delay,
        DetectorConfig::new(DetectorKind::Adwin),
    );
    let events = Engine::new(config)?.run(scenario.snapshots.iter().cloned())?;

    for (name, from, to) in [("morning", 6, 10), ("midday", 10, 16), ("evening", 16, 20)] {
        let slice = report::slice_hours(&events, from, to, Tz::UTC)?;
        let on_held = slice
            .iter()
            .filter(|e| e.key.prev == held.prev && e.key.curr == held.curr)
            .count();
        println!(
            "{name:>8} [{from:02}, {to:02}): {:3} detections, {on_held} on the held edge {held}",
            slice.len()
        );
    }
    Ok(())
}
