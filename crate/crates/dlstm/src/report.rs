//! `report.json`, `history.csv`, `predictions.csv` and `timings.json`.
//!
//! Everything in `report.json` is a function of the config, so repeated runs
//! write identical bytes. Wall-clock measurements go to `timings.json`.

use std::io::Write;

use dlstm_core::data::Normalizer;
use dlstm_core::metrics::EvalReport;
use dlstm_core::trainer::{EpochRecord, PhaseTimings, Schedule, TrainReport};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;

pub const REPORT_FILE: &str = "report.json";
pub const HISTORY_FILE: &str = "history.csv";
pub const PREDICTIONS_FILE: &str = "predictions.csv";
pub const TIMINGS_FILE: &str = "timings.json";

pub const HISTORY_HEADER: [&str; 5] = ["epoch", "agent", "train_loss", "val_loss", "disagreement"];
pub const PREDICTIONS_HEADER: [&str; 3] = ["index", "actual", "forecast"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologySummary {
    pub n_agents: usize,
    pub edges: Vec<[usize; 2]>,
    pub contraction_factor: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub records: usize,
    pub train_samples: usize,
    pub validation_samples: usize,
    pub test_samples: usize,
    pub shard_sizes: Vec<usize>,
    pub normalizer: Normalizer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub schedule: Schedule,
    pub n_agents: usize,
    pub epochs: usize,
    pub trailing_rounds: usize,
    pub final_disagreement: f64,
    pub final_val_loss: f64,
    pub history: Vec<EpochRecord>,
    /// Packed agent-mean parameters after the trailing consensus phase.
    pub consensus_params: Vec<f64>,
    pub agent_params: Vec<Vec<f64>>,
}

impl TrainingSummary {
    pub fn from_report(r: &TrainReport) -> Self {
        Self {
            schedule: r.schedule,
            n_agents: r.n_agents,
            epochs: r.history.len(),
            trailing_rounds: r.trailing_rounds,
            final_disagreement: r.final_disagreement,
            final_val_loss: r.final_val_loss,
            history: r.history.clone(),
            consensus_params: r.consensus_params.pack().into_inner(),
            agent_params: r.agent_params.iter().map(|p| p.pack().into_inner()).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub config: ExperimentConfig,
    pub topology: TopologySummary,
    pub data: DataSummary,
    pub training: TrainingSummary,
    /// Test-split metrics in raw load units.
    pub metrics: EvalReport,
    /// Sibling file holding the per-phase wall-clock seconds.
    pub timings_file: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Timings {
    pub workers: usize,
    pub data_seconds: f64,
    pub local_seconds: f64,
    pub consensus_seconds: f64,
    pub evaluation_seconds: f64,
    pub training_seconds: f64,
    pub total_seconds: f64,
}

impl Timings {
    pub fn new(workers: usize, data_seconds: f64, phases: PhaseTimings, total_seconds: f64) -> Self {
        Self {
            workers,
            data_seconds,
            local_seconds: phases.local_seconds,
            consensus_seconds: phases.consensus_seconds,
            evaluation_seconds: phases.evaluation_seconds,
            training_seconds: phases.total_seconds,
            total_seconds,
        }
    }
}

pub fn write_history<W: Write>(out: W, history: &[EpochRecord]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for rec in history {
        for (agent, (train, val)) in rec.train_loss.iter().zip(&rec.val_loss).enumerate() {
            w.write_record([
                rec.epoch.to_string(),
                agent.to_string(),
                train.to_string(),
                val.to_string(),
                rec.disagreement.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_predictions<W: Write>(out: W, actual: &[f64], forecast: &[f64]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(PREDICTIONS_HEADER)?;
    for (i, (a, f)) in actual.iter().zip(forecast).enumerate() {
        w.write_record([i.to_string(), a.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn history_rows_per_agent() {
        let history = vec![
            EpochRecord {
                epoch: 0,
                train_loss: vec![0.5, 0.25],
                val_loss: vec![0.4, 0.3],
                consensus_val_loss: 0.35,
                disagreement: 0.125,
            },
            EpochRecord {
                epoch: 1,
                train_loss: vec![0.2, 0.1],
                val_loss: vec![0.2, 0.2],
                consensus_val_loss: 0.2,
                disagreement: 0.0,
            },
        ];
        let mut buf = Vec::new();
        write_history(&mut buf, &history).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines[0], "epoch,agent,train_loss,val_loss,disagreement");
        assert_eq!(lines[2], "0,1,0.25,0.3,0.125");
        assert_eq!(lines.len(), 5);
    }

    #[test]
    fn predictions_layout() {
        let mut buf = Vec::new();
        write_predictions(&mut buf, &[1000.0, 1200.5], &[990.25, 1210.0]).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "index,actual,forecast\n0,1000,990.25\n1,1200.5,1210\n");
    }
}
