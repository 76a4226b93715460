//! Replays a snapshot file against its schedule. Without arguments a
//! synthetic city is written to a temporary directory first, with a few
//! records from an unknown course mixed in.
//!
//!     cargo run --example replay_files -- snapshots.jsonl schedule.csv

use std::io::Write;
use std::path::PathBuf;

use sdcd::ingest::{self, ReplayOptions, ScenarioSpec, Schedule};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    let tmp = std::env::temp_dir().join(format!("sdcd-replay-{}", std::process::id()));
    let (snapshots, schedule): (PathBuf, PathBuf) = match args.as_slice() {
        [s, c] => (s.into(), c.into()),
        _ => {
            let scenario = ingest::generate(&ScenarioSpec::city(7, 20, 3, 1))?;
            let files = scenario.write_to(&tmp)?;
            let mut f = std::fs::OpenOptions::new()
                .append(true)
                .open(&files.snapshots)?;
            for mut r in scenario.records().take(5) {
                r.course = "unknown-course".into();
                writeln!(f, "{}", serde_json::to_string(&r)?)?;
            }
            writeln!(f, "not json")?;
            (files.snapshots, files.schedule)
        }
    };

    let schedule = Schedule::from_path(&schedule)?;
    let (stream, stats) = ingest::replay(&snapshots, &schedule, &ReplayOptions::default())?;
    println!("{stats:#?}");
    println!("linked ratio {:.2}%", 100.0 * stats.linked_ratio());
    if let (Some(first), Some(last)) = (stream.first(), stream.last()) {
        println!(
            "{} snapshots from {} to {}",
            stream.len(),
            first.event_time,
            last.event_time
        );
    }
    let _ = std::fs::remove_dir_all(&tmp);
    Ok(())
}
