//! The `gen-data`, `run` and `compare` subcommands as library calls.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::{self, BufWriter};
use std::path::{Path, PathBuf};
use std::time::Instant;

use dlstm_core::data::{self, DataError, Feature, Shard};
use dlstm_core::graph::{contraction_factor, metropolis_weights, GraphError};
use dlstm_core::lstm::{predict, LstmError};
use dlstm_core::metrics::{evaluate, MetricsError};
use dlstm_core::trainer::{Run, Schedule, TrainError};
use serde::Serialize;
use thiserror::Error;

use crate::config::{ConfigError, DataSource, ExperimentConfig};
use crate::exec::{RayonExecutor, WallClock};
use crate::report::{
    self, DataSummary, RunReport, Timings, TopologySummary, TrainingSummary, HISTORY_FILE, PREDICTIONS_FILE,
    REPORT_FILE, TIMINGS_FILE,
};
use crate::series::{self, SeriesError};

#[derive(Debug, Error)]
pub enum CommandError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Series(#[from] SeriesError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Train(#[from] TrainError),
    #[error("training diverged at epoch {epoch}; partial history written to {history}")]
    Diverged { epoch: usize, history: PathBuf },
    #[error("could not start {workers} workers: {message}")]
    Workers { workers: usize, message: String },
    #[error("compare needs at least two reports, got {0}")]
    TooFewReports(usize),
    #[error("{path}: {message}")]
    Schema { path: PathBuf, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> CommandError + '_ {
    move |source| CommandError::Io { path: path.to_owned(), source }
}

fn csv_err(path: &Path) -> impl FnOnce(csv::Error) -> CommandError + '_ {
    move |source| CommandError::Csv { path: path.to_owned(), source }
}

fn create(path: &Path) -> Result<BufWriter<File>, CommandError> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

/// Writes a synthetic series in the input CSV format.
pub fn cmd_gen_data(days: usize, seed: u64, out: &Path) -> Result<usize, CommandError> {
    let records = data::gen_synthetic(days, seed)?;
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    series::write_series(create(out)?, &records).map_err(csv_err(out))?;
    Ok(records.len())
}

/// What a successful `run` produced.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub report: RunReport,
    pub timings: Timings,
    pub output_dir: PathBuf,
}

impl RunOutcome {
    pub fn report_path(&self) -> PathBuf {
        self.output_dir.join(REPORT_FILE)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CommandError> {
    let mut text = serde_json::to_string_pretty(value).expect("report types serialize");
    text.push('\n');
    fs::write(path, text).map_err(io_err(path))
}

pub fn cmd_run(config_path: &Path) -> Result<RunOutcome, CommandError> {
    let cfg = ExperimentConfig::load(config_path)?;
    run_experiment(&cfg)
}

/// Loads data, trains per the schedule, evaluates the consensus model on
/// the test split and writes the result files.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<RunOutcome, CommandError> {
    cfg.validate()?;
    let started = Instant::now();
    let records = match cfg.source() {
        DataSource::Synthetic { days, seed } => data::gen_synthetic(days, seed)?,
        DataSource::Csv(path) => series::parse_series(&path)?,
    };
    let prepared = data::prepare(&records, cfg.split)?;
    let graph = cfg.topology_graph()?;
    let shards = if cfg.schedule == Schedule::Centralized {
        vec![Shard::whole(prepared.train.clone())?]
    } else {
        data::shard_dataset(&prepared.train, graph.n_agents(), cfg.shard_strategy)?
    };
    let validation = Shard::whole(prepared.validation.clone())?;
    let contraction = contraction_factor(&metropolis_weights(&graph)?)?;
    let data_seconds = started.elapsed().as_secs_f64();

    let out_dir = cfg.output_path();
    fs::create_dir_all(&out_dir).map_err(io_err(&out_dir))?;

    let exec = RayonExecutor::new(cfg.workers)
        .map_err(|e| CommandError::Workers { workers: cfg.workers, message: e.to_string() })?;
    let workers = exec.workers();
    let run = Run::new(&cfg.train_config(), &shards, &graph, &validation)?
        .with_executor(exec)
        .with_clock(WallClock::start());
    let trained = match run.finish() {
        Ok(r) => r,
        Err(TrainError::Diverged { epoch, history }) => {
            let path = out_dir.join(HISTORY_FILE);
            report::write_history(create(&path)?, &history).map_err(csv_err(&path))?;
            return Err(CommandError::Diverged { epoch, history: path });
        }
        Err(e) => return Err(e.into()),
    };

    let norm = prepared.normalizer;
    let actual: Vec<f64> = prepared.test.iter().map(|s| norm.invert(Feature::Load, s.target)).collect();
    let forecast = prepared
        .test
        .iter()
        .map(|s| predict(&trained.consensus_params, s).map(|y| norm.invert(Feature::Load, y)))
        .collect::<Result<Vec<f64>, _>>()?;
    let metrics = evaluate(&actual, &forecast)?;

    let report = RunReport {
        config: cfg.clone(),
        topology: TopologySummary {
            n_agents: graph.n_agents(),
            edges: graph.edges().map(|(i, j)| [i, j]).collect(),
            contraction_factor: contraction,
        },
        data: DataSummary {
            records: records.len(),
            train_samples: prepared.train.len(),
            validation_samples: prepared.validation.len(),
            test_samples: prepared.test.len(),
            shard_sizes: shards.iter().map(Shard::len).collect(),
            normalizer: norm,
        },
        training: TrainingSummary::from_report(&trained),
        metrics,
        timings_file: TIMINGS_FILE.into(),
    };
    let timings = Timings::new(workers, data_seconds, trained.timings, started.elapsed().as_secs_f64());

    write_json(&out_dir.join(REPORT_FILE), &report)?;
    let history = out_dir.join(HISTORY_FILE);
    report::write_history(create(&history)?, &trained.history).map_err(csv_err(&history))?;
    let predictions = out_dir.join(PREDICTIONS_FILE);
    report::write_predictions(create(&predictions)?, &actual, &forecast).map_err(csv_err(&predictions))?;
    write_json(&out_dir.join(TIMINGS_FILE), &timings)?;

    Ok(RunOutcome { report, timings, output_dir: out_dir })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComparisonRow {
    pub run: String,
    pub schedule: String,
    pub mape: f64,
    pub mae: f64,
    pub mse: f64,
    pub mse_relative: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonTable {
    pub rows: Vec<ComparisonRow>,
}

impl ComparisonTable {
    /// MAPE rendered as a percentage.
    pub fn to_markdown(&self) -> String {
        let mut out = String::from("| run | schedule | MAPE (%) | MAE | MSE | MSE (relative) |\n");
        out.push_str("|---|---|---:|---:|---:|---:|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {:.2} | {:.3} | {:.3} | {:.6} |",
                r.run,
                r.schedule,
                r.mape * 100.0,
                r.mae,
                r.mse,
                r.mse_relative
            );
        }
        out
    }

    pub fn write_csv<W: io::Write>(&self, out: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

fn metric(path: &Path, metrics: &serde_json::Value, key: &str) -> Result<f64, CommandError> {
    metrics.get(key).and_then(serde_json::Value::as_f64).ok_or_else(|| CommandError::Schema {
        path: path.to_owned(),
        message: format!("`metrics.{key}` is missing or not a number"),
    })
}

/// One row per report, in argument order.
pub fn cmd_compare(paths: &[PathBuf]) -> Result<ComparisonTable, CommandError> {
    if paths.len() < 2 {
        return Err(CommandError::TooFewReports(paths.len()));
    }
    let rows = paths
        .iter()
        .map(|path| {
            let text = fs::read_to_string(path).map_err(io_err(path))?;
            let value: serde_json::Value = serde_json::from_str(&text)
                .map_err(|e| CommandError::Schema { path: path.clone(), message: e.to_string() })?;
            let metrics = value
                .get("metrics")
                .ok_or_else(|| CommandError::Schema { path: path.clone(), message: "missing `metrics` key".into() })?;
            let schedule = value
                .pointer("/training/schedule")
                .and_then(serde_json::Value::as_str)
                .unwrap_or("unknown")
                .to_owned();
            Ok(ComparisonRow {
                run: path.display().to_string(),
                schedule,
                mape: metric(path, metrics, "mape")?,
                mae: metric(path, metrics, "mae")?,
                mse: metric(path, metrics, "mse_plain")?,
                mse_relative: metric(path, metrics, "mse_relative")?,
            })
        })
        .collect::<Result<Vec<_>, CommandError>>()?;
    Ok(ComparisonTable { rows })
}
