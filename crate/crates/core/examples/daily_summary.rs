//! Runs edge-keyed ADWIN on both signals over a synthetic city and prints
//! the per-day summary table.
//!
//!     cargo run --example daily_summary

use chrono_tz::Tz;
use sdcd::detectors::{DetectorConfig, DetectorKind};
use sdcd::engine::{Engine, EngineConfig, KeyingMode, SignalKind};
use sdcd::ingest::{self, PerturbationSpec, ScenarioSpec};
use sdcd::report;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut spec = ScenarioSpec::city(42, 50, 8, 4);
    spec.perturbations
        .push(PerturbationSpec::step_at(0, 3, 1, 120));
    spec.perturbations
        .push(PerturbationSpec::hourly_at(2, 1, 8, 9, 120));
    let scenario = ingest::generate(&spec)?;

    let mut rows = Vec::new();
    for signal in SignalKind::ALL {
        let config = EngineConfig::new(
            KeyingMode::Edge,
            signal,
            DetectorConfig::new(DetectorKind::Adwin),
        );
        let mut engine = Engine::new(config)?;
        let events = engine.run(scenario.snapshots.iter().cloned())?;
        rows.extend(report::summarize(
            &events,
            &engine.stats().records_per_day,
            &[signal],
            Tz::UTC,
        ));
    }
    report::write_summary_csv(std::io::stdout().lock(), &rows)?;
    Ok(())
}
