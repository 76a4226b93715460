use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sdcd::cli::RunReport;
use sdcd::engine::DetectionEvent;
use sdcd::ingest::{GroundTruth, PerturbationSpec, ScenarioSpec};

fn sdcd(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sdcd"))
        .args(args)
        .env_remove("SDCD_OUT")
        .output()
        .unwrap()
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn write_spec(dir: &Path, spec: &ScenarioSpec) -> PathBuf {
    let p = dir.join("city.toml");
    fs::write(&p, spec.to_toml()).unwrap();
    p
}

fn hourly_city() -> ScenarioSpec {
    let mut spec = ScenarioSpec::city(3, 30, 4, 3);
    spec.headway_s = 300;
    spec.perturbations
        .push(PerturbationSpec::hourly_at(0, 0, 8, 9, 120));
    spec
}

#[test]
fn run_on_synthetic_city_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &hourly_city());
    let out = dir.path().join("out");
    let o = sdcd(&[
        "run",
        "--synth",
        path(&spec),
        "--mode",
        "edge",
        "--signal",
        "delay",
        "--detector",
        "adwin",
        "--out",
        path(&out),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in [
        "detections.jsonl",
        "summary.csv",
        "summary.json",
        "detections.geojson",
        "run.json",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("detectors created"), "{stdout}");
    assert!(stdout.contains("increases"), "{stdout}");
    assert!(!fs::read_dir(&out).unwrap().any(|e| e
        .unwrap()
        .file_name()
        .to_string_lossy()
        .starts_with(".staging")));
}

#[test]
fn bin_mode_reports_at_most_24_detectors_per_edge() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &hourly_city());
    let out = dir.path().join("bin");
    let o = sdcd(&[
        "run",
        "--spec",
        path(&spec),
        "--mode",
        "bin",
        "--out",
        path(&out),
        "--timezone",
        "Europe/Warsaw",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let report: RunReport =
        serde_json::from_slice(&fs::read(out.join("run.json")).unwrap()).unwrap();
    assert!(report.max_detectors_per_edge <= 24);
    assert!(report.max_detectors_per_edge > 1);
    assert!(report.detectors_created > report.edges_observed as u64);
}

#[test]
fn missing_schedule_names_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let snapshots = dir.path().join("snapshots.jsonl");
    fs::write(&snapshots, "").unwrap();
    let missing = dir.path().join("no-such-schedule.csv");
    let out = dir.path().join("out");
    let o = sdcd(&[
        "run",
        "--source",
        path(&snapshots),
        "--schedule",
        path(&missing),
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("no-such-schedule.csv"));
}

#[test]
fn source_selection_is_exclusive() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    assert_ne!(sdcd(&["run", "--out", path(&out)]).status.code(), Some(0));
    let spec = write_spec(dir.path(), &hourly_city());
    let o = sdcd(&[
        "run",
        "--spec",
        path(&spec),
        "--source",
        "x",
        "--schedule",
        "y",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = sdcd(&[
        "run",
        "--spec",
        path(&spec),
        "--timezone",
        "Mars/Olympus",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
    let o = sdcd(&[
        "run",
        "--spec",
        path(&spec),
        "--confidence",
        "1.5",
        "--out",
        path(&out),
    ]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn synth_minimal_spec_writes_three_files() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("tiny.toml");
    fs::write(
        &spec,
        "rng_seed = 1\ndays = 1\nstops = 2\nlines = 1\nstops_per_line = 2\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    let o = sdcd(&["synth", "--spec", path(&spec), "--out", path(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["snapshots.jsonl", "schedule.csv", "ground_truth.json"] {
        assert!(fs::metadata(out.join(f)).unwrap().len() > 0, "{f}");
    }
}

#[test]
fn synth_days_span_service_days_and_repeat_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = hourly_city();
    spec.days = 4;
    let spec = write_spec(dir.path(), &spec);
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    for out in [&a, &b] {
        assert!(sdcd(&[
            "synth",
            "--spec",
            path(&spec),
            "--out",
            path(out),
            "--seed",
            "11"
        ])
        .status
        .success());
    }
    for f in ["snapshots.jsonl", "schedule.csv", "ground_truth.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
    let truth: GroundTruth =
        serde_json::from_slice(&fs::read(a.join("ground_truth.json")).unwrap()).unwrap();
    assert_eq!(truth.service_days.len(), 4);
}

#[test]
fn synth_rejects_invalid_spec() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("bad.toml");
    fs::write(
        &spec,
        "rng_seed = 1\ndays = 1\nstops = 5\nlines = 1\nstops_per_line = 3\nnoise_std_s = -4.0\n",
    )
    .unwrap();
    let o = sdcd(&[
        "synth",
        "--spec",
        path(&spec),
        "--out",
        path(&dir.path().join("out")),
    ]);
    assert_eq!(o.status.code(), Some(2));
    assert!(!dir.path().join("out").join("snapshots.jsonl").exists());
}

#[test]
fn summarize_reproduces_run_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &hourly_city());
    let out = dir.path().join("out");
    assert!(sdcd(&["run", "--spec", path(&spec), "--out", path(&out)])
        .status
        .success());
    let o = sdcd(&["summarize", path(&out.join("detections.jsonl"))]);
    assert!(o.status.success());
    assert_eq!(o.stdout, fs::read(out.join("summary.csv")).unwrap());
}

#[test]
fn evening_slice_has_no_perturbed_edge_detections() {
    let dir = tempfile::tempdir().unwrap();
    let scenario_spec = hourly_city();
    let spec = write_spec(dir.path(), &scenario_spec);
    let out = dir.path().join("out");
    assert!(sdcd(&["run", "--spec", path(&spec), "--out", path(&out)])
        .status
        .success());
    let truth = sdcd::ingest::generate(&scenario_spec).unwrap().truth;
    let edge = &truth.perturbations[0].edge;
    let text = fs::read_to_string(out.join("detections.jsonl")).unwrap();
    let on_edge: Vec<&str> = text
        .lines()
        .filter(|l| {
            let e: DetectionEvent = serde_json::from_str(l).unwrap();
            e.key.prev == edge.prev && e.key.curr == edge.curr
        })
        .collect();
    assert!(!on_edge.is_empty());
    let filtered = dir.path().join("edge.jsonl");
    fs::write(&filtered, on_edge.join("\n") + "\n").unwrap();

    let evening = sdcd(&[
        "summarize",
        path(&filtered),
        "--from-hour",
        "16",
        "--to-hour",
        "20",
    ]);
    assert!(evening.status.success());
    let rows = String::from_utf8(evening.stdout).unwrap();
    assert_eq!(rows.lines().count(), 1, "{rows}");

    let morning = sdcd(&[
        "summarize",
        path(&filtered),
        "--from-hour",
        "6",
        "--to-hour",
        "10",
    ]);
    assert!(String::from_utf8(morning.stdout).unwrap().lines().count() > 1);
}

#[test]
fn summarize_empty_and_unparsable_files() {
    let dir = tempfile::tempdir().unwrap();
    let empty = dir.path().join("empty.jsonl");
    fs::write(&empty, "").unwrap();
    let o = sdcd(&["summarize", path(&empty)]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(
        String::from_utf8(o.stdout).unwrap(),
        "signal,date,records,increases,reductions,median_s,std_s\n"
    );

    let bad = dir.path().join("bad.jsonl");
    fs::write(&bad, "this is not an event\n").unwrap();
    assert_eq!(sdcd(&["summarize", path(&bad)]).status.code(), Some(3));
    assert_eq!(
        sdcd(&[
            "summarize",
            path(&empty),
            "--from-hour",
            "9",
            "--to-hour",
            "3"
        ])
        .status
        .code(),
        Some(2)
    );
}

#[test]
fn matrix_writes_six_runs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &hourly_city());
    let out = dir.path().join("m");
    let o = sdcd(&[
        "run",
        "--spec",
        path(&spec),
        "--matrix",
        "--out",
        path(&out),
        "--emit",
        "summary",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let mut dirs: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    dirs.sort();
    assert_eq!(
        dirs,
        [
            "adwin-delay",
            "adwin-delta",
            "hddm-delay",
            "hddm-delta",
            "kswin-delay",
            "kswin-delta"
        ]
    );
    assert!(out.join("kswin-delta").join("summary.csv").exists());
    assert!(!out.join("kswin-delta").join("detections.jsonl").exists());
}

#[test]
fn out_dir_falls_back_to_environment() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &hourly_city());
    let out = dir.path().join("env-out");
    let o = Command::new(env!("CARGO_BIN_EXE_sdcd"))
        .args(["run", "--spec", path(&spec), "--emit", "summary"])
        .env("SDCD_OUT", &out)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("summary.csv").exists());
}

#[test]
fn failed_run_leaves_no_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &hourly_city());
    let out = dir.path().join("out");
    // a non-empty directory where the detections file should go
    fs::create_dir_all(out.join("detections.jsonl").join("blocker")).unwrap();
    let o = sdcd(&["run", "--spec", path(&spec), "--out", path(&out)]);
    assert_eq!(o.status.code(), Some(4));
    let mut left: Vec<String> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    left.sort();
    assert_eq!(left, ["detections.jsonl"]);
}

#[test]
fn replay_run_matches_synthetic_run() {
    let dir = tempfile::tempdir().unwrap();
    let spec = write_spec(dir.path(), &hourly_city());
    let files = dir.path().join("files");
    assert!(
        sdcd(&["synth", "--spec", path(&spec), "--out", path(&files)])
            .status
            .success()
    );
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(sdcd(&[
        "run",
        "--spec",
        path(&spec),
        "--out",
        path(&a),
        "--emit",
        "detections,summary"
    ])
    .status
    .success());
    let o = sdcd(&[
        "run",
        "--source",
        path(&files.join("snapshots.jsonl")),
        "--schedule",
        path(&files.join("schedule.csv")),
        "--out",
        path(&b),
        "--emit",
        "detections,summary",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stdout).contains("linked"));
    assert_eq!(
        fs::read(a.join("detections.jsonl")).unwrap(),
        fs::read(b.join("detections.jsonl")).unwrap()
    );
    assert_eq!(
        fs::read(a.join("summary.csv")).unwrap(),
        fs::read(b.join("summary.csv")).unwrap()
    );
}
