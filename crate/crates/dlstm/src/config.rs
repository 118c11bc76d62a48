//! Experiment configuration: a flat TOML file.
//!
//! ```toml
//! data = "synthetic"            # or a path to a series CSV
//! synthetic_days = 730
//! synthetic_seed = 7
//! split = [0.8, 0.1, 0.1]
//! shard_strategy = "contiguous" # or "round_robin"
//!
//! topology = "ring"             # ring | path | complete | star
//! n_agents = 4
//! # edges = [[0, 1], [1, 2]]    # explicit edges instead of a name
//!
//! schedule = "lbc"              # lbc | cbl | centralized
//! epochs = 200
//! consensus_rounds = 20
//! batch_size = 32               # or "full"
//! learning_rate = 0.2
//! seed = 7
//! hidden_size = 16
//! workers = 4
//! output_dir = "out"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::path::{Path, PathBuf};

use dlstm_core::data::ShardStrategy;
use dlstm_core::graph::{GraphError, GraphTopology};
use dlstm_core::trainer::{
    BatchSize, Schedule, TrainConfig, DEFAULT_CONSENSUS_ROUNDS, DEFAULT_DISAGREEMENT_TOL,
    DEFAULT_MAX_TRAILING_ROUNDS,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("field `{field}`: {message}")]
    Field { field: &'static str, message: String },
}

fn field(field: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Field { field, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum BatchSpec {
    Size(usize),
    Named(BatchName),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BatchName {
    Full,
}

impl From<BatchSpec> for BatchSize {
    fn from(b: BatchSpec) -> Self {
        match b {
            BatchSpec::Size(n) => BatchSize::Size(n),
            BatchSpec::Named(BatchName::Full) => BatchSize::Full,
        }
    }
}

fn default_data() -> String {
    "synthetic".into()
}
fn default_days() -> usize {
    730
}
fn default_split() -> [f64; 3] {
    [0.8, 0.1, 0.1]
}
fn default_agents() -> usize {
    4
}
fn default_epochs() -> usize {
    200
}
fn default_rounds() -> usize {
    DEFAULT_CONSENSUS_ROUNDS
}
fn default_batch() -> BatchSpec {
    BatchSpec::Size(32)
}
fn default_lr() -> f64 {
    0.2
}
fn default_tol() -> f64 {
    DEFAULT_DISAGREEMENT_TOL
}
fn default_trailing() -> usize {
    DEFAULT_MAX_TRAILING_ROUNDS
}
fn default_hidden() -> usize {
    16
}
fn default_workers() -> usize {
    1
}
fn default_output() -> PathBuf {
    "out".into()
}

/// Every key with its default; the parsed file is echoed into `report.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_data")]
    pub data: String,
    #[serde(default = "default_days")]
    pub synthetic_days: usize,
    #[serde(default)]
    pub synthetic_seed: u64,
    #[serde(default = "default_split")]
    pub split: [f64; 3],
    #[serde(default)]
    pub shard_strategy: ShardStrategy,

    /// Named topology; `ring` when neither this nor `edges` is given.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topology: Option<String>,
    #[serde(default = "default_agents")]
    pub n_agents: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<[usize; 2]>>,

    #[serde(default)]
    pub schedule: Schedule,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_rounds")]
    pub consensus_rounds: usize,
    #[serde(default = "default_batch")]
    pub batch_size: BatchSpec,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_tol")]
    pub disagreement_tolerance: f64,
    #[serde(default = "default_trailing")]
    pub max_trailing_rounds: usize,
    #[serde(default = "default_hidden")]
    pub hidden_size: usize,
    #[serde(default)]
    pub consensus_every_batch: bool,

    /// Parallel agent workers; results do not depend on this. Left out of
    /// the echoed config so `report.json` is identical for any worker count
    /// (the count is recorded in `timings.json`).
    #[serde(default = "default_workers", skip_serializing)]
    pub workers: usize,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,

    /// Directory relative paths resolve against; not part of the file.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        toml::from_str("").expect("all fields have defaults")
    }
}

/// Where the records come from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic { days: usize, seed: u64 },
    Csv(PathBuf),
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_owned(), source })?;
        let mut cfg: Self =
            toml::from_str(&text).map_err(|e| ConfigError::Parse { path: path.to_owned(), message: e.to_string() })?;
        cfg.base_dir = path.parent().unwrap_or(Path::new("")).to_owned();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self =
            toml::from_str(text).map_err(|e| ConfigError::Parse { path: PathBuf::from("<inline>"), message: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn source(&self) -> DataSource {
        if self.data == "synthetic" {
            DataSource::Synthetic { days: self.synthetic_days, seed: self.synthetic_seed }
        } else {
            DataSource::Csv(self.base_dir.join(&self.data))
        }
    }

    pub fn output_path(&self) -> PathBuf {
        self.base_dir.join(&self.output_dir)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            schedule: self.schedule,
            epochs: self.epochs,
            consensus_rounds: self.consensus_rounds,
            batch_size: self.batch_size.into(),
            learning_rate: self.learning_rate,
            seed: self.seed,
            disagreement_tolerance: self.disagreement_tolerance,
            max_trailing_rounds: self.max_trailing_rounds,
            hidden_size: self.hidden_size,
            consensus_every_batch: self.consensus_every_batch,
        }
    }

    /// The communication graph; a single vertex for the centralized schedule.
    pub fn topology_graph(&self) -> Result<GraphTopology, ConfigError> {
        if self.schedule == Schedule::Centralized {
            return GraphTopology::new(1, &[]).map_err(|e| field("n_agents", e.to_string()));
        }
        let g = match (&self.edges, &self.topology) {
            (Some(_), Some(_)) => return Err(field("edges", "give either `edges` or a `topology` name, not both")),
            (Some(edges), None) => {
                let pairs: Vec<(usize, usize)> = edges.iter().map(|e| (e[0], e[1])).collect();
                GraphTopology::new(self.n_agents, &pairs).map_err(|e| match e {
                    GraphError::NoAgents => field("n_agents", e.to_string()),
                    other => field("edges", other.to_string()),
                })?
            }
            (None, name) => GraphTopology::named(name.as_deref().unwrap_or("ring"), self.n_agents).map_err(|e| match e {
                GraphError::NoAgents => field("n_agents", e.to_string()),
                other => field("topology", other.to_string()),
            })?,
        };
        if !g.is_connected() {
            return Err(field(if self.edges.is_some() { "edges" } else { "topology" }, "graph is not connected"));
        }
        Ok(g)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let sum: f64 = self.split.iter().sum();
        if self.split.iter().any(|f| !(*f >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
            return Err(field("split", format!("fractions must be nonnegative and sum to 1, got {:?}", self.split)));
        }
        if self.split[0] == 0.0 || self.split[1] == 0.0 || self.split[2] == 0.0 {
            return Err(field("split", "train, validation and test fractions must all be positive"));
        }
        if let DataSource::Csv(path) = self.source() {
            if !path.is_file() {
                return Err(field("data", format!("{} does not exist", path.display())));
            }
        }
        if self.workers == 0 {
            return Err(field("workers", "must be at least 1"));
        }
        self.train_config().validate().map_err(|e| {
            use dlstm_core::trainer::TrainError as E;
            let name = match e {
                E::InvalidLearningRate(_) => "learning_rate",
                E::ZeroEpochs => "epochs",
                E::ZeroConsensusRounds => "consensus_rounds",
                E::ZeroBatchSize => "batch_size",
                E::ZeroHiddenSize => "hidden_size",
                E::InvalidTolerance(_) => "disagreement_tolerance",
                _ => "schedule",
            };
            field(name, e.to_string())
        })?;
        self.topology_graph()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_the_benchmark() {
        let cfg = ExperimentConfig::default();
        cfg.validate().unwrap();
        assert_eq!(cfg.source(), DataSource::Synthetic { days: 730, seed: 0 });
        assert_eq!(cfg.n_agents, 4);
        assert_eq!(cfg.consensus_rounds, 20);
        assert_eq!(cfg.train_config().batch_size, BatchSize::Size(32));
    }

    #[test]
    fn parses_full_and_edges() {
        let cfg = ExperimentConfig::from_toml(
            "schedule = \"cbl\"\nbatch_size = \"full\"\nn_agents = 3\nedges = [[0, 1], [1, 2]]\n",
        )
        .unwrap();
        assert_eq!(cfg.schedule, Schedule::Cbl);
        assert_eq!(cfg.train_config().batch_size, BatchSize::Full);
        assert_eq!(cfg.topology_graph().unwrap(), GraphTopology::path(3).unwrap());
    }

    fn field_of(text: &str) -> &'static str {
        match ExperimentConfig::from_toml(text) {
            Err(ConfigError::Field { field, .. }) => field,
            other => panic!("expected a field error, got {other:?}"),
        }
    }

    #[test]
    fn field_level_errors() {
        assert_eq!(field_of("split = [0.8, 0.1, 0.2]"), "split");
        assert_eq!(field_of("learning_rate = 0.0"), "learning_rate");
        assert_eq!(field_of("epochs = 0"), "epochs");
        assert_eq!(field_of("topology = \"torus\""), "topology");
        assert_eq!(field_of("n_agents = 3\nedges = [[0, 1]]"), "edges");
        assert_eq!(field_of("n_agents = 3\nedges = [[0, 5]]"), "edges");
        assert_eq!(field_of("data = \"/nonexistent/series.csv\""), "data");
        assert_eq!(field_of("workers = 0"), "workers");
        assert_eq!(field_of("topology = \"ring\"\nedges = [[0, 1]]\nn_agents = 2"), "edges");
        assert!(matches!(ExperimentConfig::from_toml("bogus_key = 1"), Err(ConfigError::Parse { .. })));
    }

    #[test]
    fn centralized_ignores_topology() {
        let cfg = ExperimentConfig::from_toml("schedule = \"centralized\"\nconsensus_rounds = 0").unwrap();
        assert_eq!(cfg.topology_graph().unwrap().n_agents(), 1);
    }
}
