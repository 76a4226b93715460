//! All three detectors on both signals over the same city.
//!
//!     cargo run --release --example detector_matrix

use sdcd::detectors::{DetectorConfig, DetectorKind};
use sdcd::engine::{Engine, EngineConfig, KeyingMode, SignalKind};
use sdcd::ingest::{self, PerturbationSpec, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ScenarioSpec::city(42, 50, 8, 4);
    spec.perturbations
        .push(PerturbationSpec::step_at(0, 3, 1, 120));
    spec.perturbations
        .push(PerturbationSpec::hourly_at(2, 1, 8, 9, 120));
    let scenario = ingest::generate(&spec)?;

    println!(
        "{:<10}{:<8}{:>12}{:>12}{:>12}",
        "detector", "signal", "detections", "increases", "reductions"
    );
    for kind in DetectorKind::ALL {
        for signal in SignalKind::ALL {
            let config = EngineConfig::new(KeyingMode::Edge, signal, DetectorConfig::new(kind));
            let mut engine = Engine::new(config)?;
            engine.run(scenario.snapshots.iter().cloned())?;
            let s = engine.stats();
            println!(
                "{:<10}{:<8}{:>12}{:>12}{:>12}",
                kind.to_string(),
                signal.as_str(),
                s.detections,
                s.increases,
                s.reductions
            );
        }
    }
    Ok(())
}
