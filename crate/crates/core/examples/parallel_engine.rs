//! Sequential and key-sharded runs over the same stream give the same
//! events.
//!
//!     cargo run --release --example parallel_engine -- 4

use std::time::Instant;

use sdcd::detectors::{DetectorConfig, DetectorKind};
use sdcd::engine::{Engine, EngineConfig, KeyingMode, SignalKind};
use sdcd::ingest::{self, PerturbationSpec, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let workers: usize = std::env::args().nth(1).map_or(Ok(4), |a| a.parse())?;
    let mut spec = ScenarioSpec::city(3, 60, 20, 5);
    spec.headway_s = 180;
    spec.perturbations
        .push(PerturbationSpec::step_at(4, 2, 2, 150));
    let scenario = ingest::generate(&spec)?;
    let config = EngineConfig::new(
        KeyingMode::EdgeHour,
        SignalKind::Delay,
        DetectorConfig::new(DetectorKind::Adwin),
    );

    let start = Instant::now();
    let sequential = Engine::new(config.clone())?.run(scenario.snapshots.iter().cloned())?;
    let t_seq = start.elapsed();

    let start = Instant::now();
    let parallel = Engine::new(config)?.run_parallel(&scenario.snapshots, workers)?;
    let t_par = start.elapsed();

    println!("{} snapshots", scenario.snapshots.len());
    println!("sequential: {} events in {t_seq:.2?}", sequential.len());
    println!(
        "{workers} workers: {} events in {t_par:.2?}",
        parallel.len()
    );
    assert_eq!(sequential, parallel);
    Ok(())
}
