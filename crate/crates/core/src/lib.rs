//! Consensus-based distributed LSTM training for short-term load forecasting.
//!
//! The crate is `no_std` (it needs `alloc`). Agents each hold a private
//! [`data::Shard`], train a local [`lstm::LstmParams`] copy by gradient
//! descent and exchange only packed parameter vectors with graph neighbours
//! through a doubly stochastic [`graph::MixingMatrix`]. File formats,
//! timing and the command line live in the `dlstm` companion crate.

#![no_std]

extern crate alloc;

pub mod data;
pub mod graph;
pub mod lstm;
pub mod metrics;
pub mod numerics;
pub mod trainer;

pub use data::{DailyRecord, DayType, Normalizer, Shard, ShardStrategy};
pub use graph::{contraction_factor, metropolis_weights, GraphTopology, MixingMatrix};
pub use lstm::{backward_bptt, empirical_loss, predict, Dims, LstmParams, SequenceSample};
pub use metrics::{evaluate, EvalReport};
pub use numerics::{finite_difference_gradient, FlatVector};
pub use trainer::{
    consensus_round, disagreement, train_cbl, train_centralized, train_lbc, BatchSize, Executor, Run,
    Schedule, TrainConfig, TrainError, TrainReport,
};
