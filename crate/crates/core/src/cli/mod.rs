//! `sdcd` command line: `run`, `synth` and `summarize`.
//!
//! Exit codes: 0 success, 2 configuration error, 3 input parse error,
//! 4 runtime failure.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use chrono::NaiveDate;
use chrono_tz::Tz;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detectors::{DetectorConfig, DetectorError, DetectorKind, DEFAULT_CONFIDENCE};
use crate::engine::{
    DetectionEvent, Engine, EngineConfig, EngineError, EngineStats, KeyingMode, SignalKind,
};
use crate::ingest::{self, IngestError, IngestStats, ReplayOptions, ScenarioSpec, Schedule};
use crate::model::{StopId, VehicleSnapshot};
use crate::report::{self, ReportError};

pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const SUMMARY_JSON: &str = "summary.json";
pub const GEOJSON_FILE: &str = "detections.geojson";
pub const UNPLACED_FILE: &str = "unplaced.jsonl";
pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Parse(_) => 3,
            CliError::Runtime(_) => 4,
        }
    }
}

impl From<IngestError> for CliError {
    fn from(e: IngestError) -> Self {
        match e {
            IngestError::Open { .. } | IngestError::InvalidSpec(_) => {
                CliError::Config(e.to_string())
            }
            IngestError::Csv(_) | IngestError::Json(_) => CliError::Parse(e.to_string()),
            IngestError::Io(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        match e {
            ReportError::InvalidHours { .. } => CliError::Config(e.to_string()),
            ReportError::Parse { .. } | ReportError::Json(_) => CliError::Parse(e.to_string()),
            ReportError::Io(_) | ReportError::Csv(_) => CliError::Runtime(e.to_string()),
        }
    }
}

impl From<EngineError> for CliError {
    fn from(e: EngineError) -> Self {
        match e {
            EngineError::Detector(
                DetectorError::InvalidConfidence(_) | DetectorError::InvalidConfig(_),
            ) => CliError::Config(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CliError + '_ {
    move |e| CliError::Runtime(format!("{}: {e}", path.display()))
}

#[derive(Debug, Parser)]
#[command(
    name = "sdcd",
    version,
    about = "Significant delay change detection over vehicle location streams"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Detect delay changes over a recorded or synthetic snapshot stream.
    Run(RunArgs),
    /// Generate a synthetic city: snapshots, schedule and ground truth.
    Synth(SynthArgs),
    /// Rebuild the daily summary from a detections file.
    Summarize(SummarizeArgs),
}

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, ValueEnum, Serialize, Deserialize,
)]
#[serde(rename_all = "lowercase")]
pub enum Emit {
    Detections,
    Summary,
    Geojson,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// Snapshot file (one JSON record per line).
    #[arg(long, requires = "schedule", conflicts_with = "spec")]
    pub source: Option<PathBuf>,
    /// Schedule CSV joined to the snapshot file.
    #[arg(long, requires = "source")]
    pub schedule: Option<PathBuf>,
    /// Scenario spec (TOML) generated in memory.
    #[arg(long, alias = "synth")]
    pub spec: Option<PathBuf>,
    #[arg(long, default_value = "edge")]
    pub mode: KeyingMode,
    #[arg(long, default_value = "delay")]
    pub signal: SignalKind,
    #[arg(long, default_value = "adwin")]
    pub detector: DetectorKind,
    #[arg(long, default_value_t = DEFAULT_CONFIDENCE)]
    pub confidence: f64,
    /// IANA timezone for hour bins and calendar days.
    #[arg(long, default_value = "UTC")]
    pub timezone: String,
    #[arg(long, env = "SDCD_OUT")]
    pub out: PathBuf,
    /// Detector worker threads [default: available parallelism].
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides the scenario's rng_seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run all three detectors on both signals, one subdirectory each.
    #[arg(long)]
    pub matrix: bool,
    #[arg(long, value_delimiter = ',', default_values = ["detections", "summary", "geojson"])]
    pub emit: Vec<Emit>,
    /// Restrict summary and map to events from this hour on.
    #[arg(long)]
    pub from_hour: Option<u8>,
    /// Restrict summary and map to events before this hour.
    #[arg(long)]
    pub to_hour: Option<u8>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long, env = "SDCD_OUT")]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
pub struct SummarizeArgs {
    /// Detections file written by `run`.
    pub detections: PathBuf,
    #[arg(long)]
    pub from_hour: Option<u8>,
    #[arg(long)]
    pub to_hour: Option<u8>,
    /// Run statistics for record counts [default: run.json next to the detections].
    #[arg(long)]
    pub records: Option<PathBuf>,
    /// Timezone for calendar days [default: the run's, else UTC].
    #[arg(long)]
    pub timezone: Option<String>,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    /// Write summary.csv and summary.json here instead of printing.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    Replay { path: PathBuf, schedule: PathBuf },
    Synth { spec: PathBuf, seed: Option<u64> },
}

/// One detection run, fully resolved.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: Source,
    pub mode: KeyingMode,
    pub signal: SignalKind,
    pub detector: DetectorConfig,
    pub timezone: Tz,
    pub out_dir: PathBuf,
    pub emit: Vec<Emit>,
    pub hours: Option<(u8, u8)>,
    pub workers: usize,
}

fn parse_tz(name: &str) -> Result<Tz, CliError> {
    name.parse::<Tz>()
        .map_err(|_| CliError::Config(format!("unknown timezone {name:?}")))
}

fn hour_slice(from: Option<u8>, to: Option<u8>) -> Result<Option<(u8, u8)>, CliError> {
    let slice = match (from, to) {
        (None, None) => return Ok(None),
        (f, t) => (f.unwrap_or(0), t.unwrap_or(24)),
    };
    if slice.0 >= slice.1 || slice.1 > 24 {
        return Err(ReportError::InvalidHours {
            from: slice.0,
            to: slice.1,
        }
        .into());
    }
    Ok(Some(slice))
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl RunArgs {
    /// The configurations this invocation runs; six with `--matrix`.
    pub fn configs(&self) -> Result<Vec<RunConfig>, CliError> {
        let source = match (&self.source, &self.schedule, &self.spec) {
            (Some(path), Some(schedule), None) => Source::Replay {
                path: path.clone(),
                schedule: schedule.clone(),
            },
            (None, None, Some(spec)) => Source::Synth {
                spec: spec.clone(),
                seed: self.seed,
            },
            _ => {
                return Err(CliError::Config(
                    "exactly one source is required: --source with --schedule, or --spec".into(),
                ))
            }
        };
        if self.seed.is_some() && matches!(source, Source::Replay { .. }) {
            return Err(CliError::Config(
                "--seed only applies to --spec sources".into(),
            ));
        }
        if self.workers == Some(0) {
            return Err(CliError::Config("--workers must be at least 1".into()));
        }
        let timezone = parse_tz(&self.timezone)?;
        let hours = hour_slice(self.from_hour, self.to_hour)?;
        let mut emit = self.emit.clone();
        emit.sort();
        emit.dedup();
        let base = RunConfig {
            source,
            mode: self.mode,
            signal: self.signal,
            detector: DetectorConfig::new(self.detector).with_confidence(self.confidence),
            timezone,
            out_dir: self.out.clone(),
            emit,
            hours,
            workers: self.workers.unwrap_or_else(default_workers),
        };
        base.detector
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        if !self.matrix {
            return Ok(vec![base]);
        }
        let mut out = Vec::new();
        for kind in DetectorKind::ALL {
            for signal in SignalKind::ALL {
                out.push(RunConfig {
                    signal,
                    detector: DetectorConfig::new(kind).with_confidence(self.confidence),
                    out_dir: self.out.join(format!("{kind}-{signal}")),
                    ..base.clone()
                });
            }
        }
        Ok(out)
    }
}

/// Snapshots of a source plus what is known about stop positions.
#[derive(Debug, Clone)]
pub struct LoadedSource {
    pub snapshots: Vec<VehicleSnapshot>,
    pub ingest: Option<IngestStats>,
    pub positions: Option<Vec<(StopId, (f64, f64))>>,
}

pub fn load_source(source: &Source) -> Result<LoadedSource, CliError> {
    match source {
        Source::Replay { path, schedule } => {
            let schedule = Schedule::from_path(schedule)?;
            let (snapshots, stats) = ingest::replay(path, &schedule, &ReplayOptions::default())?;
            Ok(LoadedSource {
                snapshots,
                ingest: Some(stats),
                positions: None,
            })
        }
        Source::Synth { spec, seed } => {
            let mut spec = ScenarioSpec::from_path(spec)?;
            if let Some(seed) = seed {
                spec.rng_seed = *seed;
            }
            let scenario = ingest::generate(&spec)?;
            Ok(LoadedSource {
                positions: Some(scenario.truth.layout.positions().collect()),
                snapshots: scenario.snapshots,
                ingest: None,
            })
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSettings {
    pub mode: KeyingMode,
    pub signal: SignalKind,
    pub detector: DetectorKind,
    pub confidence: f64,
    pub timezone: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hours: Option<(u8, u8)>,
}

/// Contents of `run.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub settings: RunSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ingest: Option<IngestStats>,
    pub engine: EngineStats,
    pub detectors_created: u64,
    pub edges_observed: usize,
    pub max_detectors_per_edge: usize,
    pub unplaced: usize,
}

impl RunReport {
    pub fn records_per_day(&self) -> &BTreeMap<NaiveDate, u64> {
        &self.engine.records_per_day
    }
}

/// Output files are staged in a hidden directory and moved into place only
/// when everything was written.
struct Staging {
    dir: PathBuf,
    files: Vec<&'static str>,
}

impl Staging {
    fn new(out: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(out).map_err(io_err(out))?;
        let dir = out.join(format!(".staging-{}", std::process::id()));
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io_err(&dir))?;
        }
        fs::create_dir(&dir).map_err(io_err(&dir))?;
        Ok(Self {
            dir,
            files: Vec::new(),
        })
    }

    fn create(&mut self, name: &'static str) -> Result<BufWriter<File>, CliError> {
        let path = self.dir.join(name);
        self.files.push(name);
        File::create(&path)
            .map(BufWriter::new)
            .map_err(io_err(&path))
    }

    fn commit(self, out: &Path) -> Result<(), CliError> {
        for name in &self.files {
            let to = out.join(name);
            fs::rename(self.dir.join(name), &to).map_err(io_err(&to))?;
        }
        fs::remove_dir_all(&self.dir).map_err(io_err(&self.dir))
    }
}

impl Drop for Staging {
    fn drop(&mut self) {
        let _ = fs::remove_dir_all(&self.dir);
    }
}

/// Full result of one run, before anything is written.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub events: Vec<DetectionEvent>,
    pub report: RunReport,
    pub positions: std::collections::HashMap<StopId, (f64, f64)>,
}

pub fn execute_run(config: &RunConfig, source: &LoadedSource) -> Result<RunOutcome, CliError> {
    let engine_config = EngineConfig::new(config.mode, config.signal, config.detector)
        .with_timezone(config.timezone);
    let mut engine = Engine::new(engine_config)?;
    if let Some(positions) = &source.positions {
        engine = engine.with_stop_positions(positions.iter().cloned());
    }
    let events = engine.run_parallel(&source.snapshots, config.workers)?;
    let per_edge = engine.registry().detectors_per_edge();
    let report = RunReport {
        settings: RunSettings {
            mode: config.mode,
            signal: config.signal,
            detector: config.detector.kind,
            confidence: config.detector.confidence,
            timezone: config.timezone.name().to_owned(),
            hours: config.hours,
        },
        ingest: source.ingest.clone(),
        engine: engine.stats().clone(),
        detectors_created: engine.registry().created_count(),
        edges_observed: per_edge.len(),
        max_detectors_per_edge: per_edge.values().copied().max().unwrap_or(0),
        unplaced: 0,
    };
    Ok(RunOutcome {
        events,
        report,
        positions: engine.stop_positions().clone(),
    })
}

fn write_run(config: &RunConfig, outcome: &mut RunOutcome) -> Result<(), CliError> {
    let sliced = match config.hours {
        Some((from, to)) => report::slice_hours(&outcome.events, from, to, config.timezone)?,
        None => outcome.events.clone(),
    };
    let mut staging = Staging::new(&config.out_dir)?;
    if config.emit.contains(&Emit::Detections) {
        report::write_detections(staging.create(DETECTIONS_FILE)?, &outcome.events)?;
    }
    if config.emit.contains(&Emit::Summary) {
        let rows = report::summarize(
            &sliced,
            outcome.report.records_per_day(),
            &[config.signal],
            config.timezone,
        );
        report::write_summary_csv(staging.create(SUMMARY_CSV)?, &rows)?;
        report::write_summary_json(staging.create(SUMMARY_JSON)?, &rows)?;
    }
    if config.emit.contains(&Emit::Geojson) {
        let layer = report::to_geojson(&sliced, &outcome.positions);
        outcome.report.unplaced = layer.unplaced.len();
        let mut w = staging.create(GEOJSON_FILE)?;
        serde_json::to_writer(&mut w, &layer.collection).map_err(ReportError::from)?;
        w.write_all(b"\n").map_err(ReportError::from)?;
        w.flush().map_err(ReportError::from)?;
        if !layer.unplaced.is_empty() {
            report::write_detections(staging.create(UNPLACED_FILE)?, &layer.unplaced)?;
        }
    }
    let mut w = staging.create(RUN_FILE)?;
    serde_json::to_writer_pretty(&mut w, &outcome.report).map_err(ReportError::from)?;
    w.write_all(b"\n").map_err(ReportError::from)?;
    w.flush().map_err(ReportError::from)?;
    drop(w);
    staging.commit(&config.out_dir)
}

fn print_stats<W: Write>(
    out: &mut W,
    config: &RunConfig,
    report: &RunReport,
    seconds: f64,
) -> io::Result<()> {
    let e = &report.engine;
    writeln!(
        out,
        "{} {} {} -> {}",
        config.mode,
        config.signal,
        config.detector.kind,
        config.out_dir.display()
    )?;
    if let Some(i) = &report.ingest {
        writeln!(
            out,
            "  records read {}, linked {} ({:.1}%)",
            i.total,
            i.linked,
            100.0 * i.linked_ratio()
        )?;
    }
    writeln!(
        out,
        "  records processed {}, skipped {}",
        e.records_processed,
        e.records_seen - e.records_processed
    )?;
    writeln!(
        out,
        "  detectors created {} over {} edges (max {} per edge)",
        report.detectors_created, report.edges_observed, report.max_detectors_per_edge
    )?;
    writeln!(
        out,
        "  detections {}: {} increases, {} reductions ({seconds:.2}s)",
        e.detections, e.increases, e.reductions
    )
}

/// Runs every configuration, loading the source once.
pub fn cmd_run<W: Write>(configs: &[RunConfig], out: &mut W) -> Result<Vec<RunReport>, CliError> {
    let Some(first) = configs.first() else {
        return Ok(Vec::new());
    };
    let source = load_source(&first.source)?;
    let mut reports = Vec::new();
    for config in configs {
        let start = Instant::now();
        let mut outcome = execute_run(config, &source)?;
        write_run(config, &mut outcome)?;
        print_stats(out, config, &outcome.report, start.elapsed().as_secs_f64())
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        reports.push(outcome.report);
    }
    Ok(reports)
}

pub fn cmd_synth(args: &SynthArgs) -> Result<ingest::ScenarioFiles, CliError> {
    let mut spec = ScenarioSpec::from_path(&args.spec)?;
    if let Some(seed) = args.seed {
        spec.rng_seed = seed;
    }
    let scenario = ingest::generate(&spec)?;
    let mut staging = Staging::new(&args.out)?;
    let dir = staging.dir.clone();
    staging.files = vec![
        ingest::synth::SNAPSHOT_FILE,
        ingest::synth::SCHEDULE_FILE,
        ingest::synth::GROUND_TRUTH_FILE,
    ];
    scenario.write_to(&dir)?;
    staging.commit(&args.out)?;
    Ok(ingest::ScenarioFiles::in_dir(&args.out))
}

pub fn cmd_summarize<W: Write>(
    args: &SummarizeArgs,
    out: &mut W,
) -> Result<Vec<report::DailySummary>, CliError> {
    let file = File::open(&args.detections)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", args.detections.display())))?;
    let events = report::read_detections(BufReader::new(file))?;

    let run_path = match &args.records {
        Some(p) => Some(p.clone()),
        None => args
            .detections
            .parent()
            .map(|d| d.join(RUN_FILE))
            .filter(|p| p.exists()),
    };
    let run: Option<RunReport> = match run_path {
        Some(p) => {
            let file = File::open(&p)
                .map_err(|e| CliError::Config(format!("cannot open {}: {e}", p.display())))?;
            Some(
                serde_json::from_reader(BufReader::new(file))
                    .map_err(|e| CliError::Parse(format!("{}: {e}", p.display())))?,
            )
        }
        None => None,
    };
    let timezone = match (&args.timezone, &run) {
        (Some(name), _) => parse_tz(name)?,
        (None, Some(run)) => parse_tz(&run.settings.timezone)?,
        (None, None) => Tz::UTC,
    };
    let events = match hour_slice(args.from_hour, args.to_hour)? {
        Some((from, to)) => report::slice_hours(&events, from, to, timezone)?,
        None => events,
    };
    let empty = BTreeMap::new();
    let (records, signals) = match &run {
        Some(run) => (run.records_per_day(), vec![run.settings.signal]),
        None => (&empty, Vec::new()),
    };
    let rows = report::summarize(&events, records, &signals, timezone);
    match &args.out {
        Some(dir) => {
            let mut staging = Staging::new(dir)?;
            report::write_summary_csv(staging.create(SUMMARY_CSV)?, &rows)?;
            report::write_summary_json(staging.create(SUMMARY_JSON)?, &rows)?;
            staging.commit(dir)?;
        }
        None => match args.format {
            Format::Csv => report::write_summary_csv(&mut *out, &rows)?,
            Format::Json => report::write_summary_json(&mut *out, &rows)?,
        },
    }
    Ok(rows)
}

pub fn execute<W: Write>(cli: Cli, out: &mut W) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => cmd_run(&args.configs()?, out).map(drop),
        Command::Synth(args) => {
            let files = cmd_synth(&args)?;
            writeln!(
                out,
                "wrote {}, {}, {}",
                files.snapshots.display(),
                files.schedule.display(),
                files.ground_truth.display()
            )
            .map_err(|e| CliError::Runtime(e.to_string()))
        }
        Command::Summarize(args) => cmd_summarize(&args, out).map(drop),
    }
}

/// Entry point of the `sdcd` binary.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    let stdout = io::stdout();
    match execute(cli, &mut stdout.lock()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
