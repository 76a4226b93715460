//! Generates a small synthetic city and writes snapshots, schedule and
//! ground truth to a directory.
//!
//!     cargo run --example synthetic_city -- /tmp/city

use std::path::PathBuf;

use sdcd::ingest::{self, PerturbationSpec, ScenarioSpec};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .unwrap_or_else(|| "city-out".into())
        .into();

    let mut spec = ScenarioSpec::city(42, 50, 8, 4);
    spec.perturbations
        .push(PerturbationSpec::step_at(0, 3, 1, 120));
    spec.perturbations
        .push(PerturbationSpec::hourly_at(2, 1, 8, 9, 120));

    let scenario = ingest::generate(&spec)?;
    let files = scenario.write_to(&out)?;

    println!(
        "{} snapshots, {} schedule rows",
        scenario.snapshots.len(),
        scenario.schedule.len()
    );
    for line in &scenario.truth.layout.lines {
        let stops: Vec<&str> = line.stops.iter().map(|s| s.as_str()).collect();
        println!("  {}: {}", line.name, stops.join(" "));
    }
    for p in &scenario.truth.perturbations {
        println!(
            "  {:?} +{}s on {} from {} to {}, hours [{}, {}), {} departures held",
            p.kind,
            p.added_delay_s,
            p.edge,
            p.start,
            p.end,
            p.from_hour,
            p.to_hour,
            p.affected_departures
        );
    }
    println!("wrote {}", files.snapshots.parent().unwrap().display());
    Ok(())
}
