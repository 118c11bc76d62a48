//! Distributed training over a communication graph.
//!
//! Every agent keeps its own copy of the parameters and only ever sees its
//! own [`Shard`]. Per epoch the two phases are
//!
//! * LBC: local gradient steps `Φ_i = Θ_i - η ∇E_i(Θ_i)`, then `K` mixing
//!   iterations over the packed parameters;
//! * CBL: `K` mixing iterations first, then the local steps from the mixed
//!   parameters.
//!
//! After the final epoch, mixing continues one iteration at a time until
//! the disagreement drops to the configured tolerance or the trailing round
//! cap is hit. The centralized baseline runs the same loop with one agent
//! holding the union dataset.
//!
//! Agent-local work goes through an [`Executor`]; results are always
//! collected in agent order and mixing combines agents in ascending index
//! order, so reports do not depend on how many workers ran the agents.

use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::data::Shard;
use crate::graph::{metropolis_weights, GraphError, GraphTopology, MixingMatrix};
use crate::lstm::{backward_bptt_refs, empirical_loss, Dims, LstmError, LstmParams, SequenceSample};
use crate::numerics::{norm2, FlatVector};

pub const DEFAULT_CONSENSUS_ROUNDS: usize = 20;
pub const DEFAULT_DISAGREEMENT_TOL: f64 = 1e-6;
pub const DEFAULT_MAX_TRAILING_ROUNDS: usize = 1000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrainError {
    #[error("learning rate must lie in (0, 1], got {0}")]
    InvalidLearningRate(f64),
    #[error("epochs must be at least 1")]
    ZeroEpochs,
    #[error("distributed schedules need at least one consensus round")]
    ZeroConsensusRounds,
    #[error("batch size must be at least 1")]
    ZeroBatchSize,
    #[error("hidden size must be at least 1")]
    ZeroHiddenSize,
    #[error("disagreement tolerance must be positive and finite, got {0}")]
    InvalidTolerance(f64),
    #[error("got {shards} shards for a topology of {agents} agents")]
    AgentCountMismatch { shards: usize, agents: usize },
    #[error("shards and validation set disagree on feature dimensions")]
    ShapeMismatch,
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("vectors have mismatched lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("mixing matrix is {matrix}x{matrix} but {vectors} vectors were given")]
    MixingSize { matrix: usize, vectors: usize },
    #[error("agent {agent} produced a non-finite gradient")]
    NonFiniteGradient { agent: usize },
    #[error("training diverged at epoch {epoch}")]
    Diverged { epoch: usize, history: Vec<EpochRecord> },
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Lstm(#[from] LstmError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Schedule {
    /// Learning before consensus.
    #[default]
    Lbc,
    /// Consensus before learning.
    Cbl,
    Centralized,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum BatchSize {
    #[default]
    Full,
    Size(usize),
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainConfig {
    pub schedule: Schedule,
    pub epochs: usize,
    pub consensus_rounds: usize,
    pub batch_size: BatchSize,
    pub learning_rate: f64,
    pub seed: u64,
    pub disagreement_tolerance: f64,
    pub max_trailing_rounds: usize,
    pub hidden_size: usize,
    /// Mix after every mini-batch step instead of once per epoch.
    pub consensus_every_batch: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            schedule: Schedule::Lbc,
            epochs: 100,
            consensus_rounds: DEFAULT_CONSENSUS_ROUNDS,
            batch_size: BatchSize::Full,
            learning_rate: 0.1,
            seed: 0,
            disagreement_tolerance: DEFAULT_DISAGREEMENT_TOL,
            max_trailing_rounds: DEFAULT_MAX_TRAILING_ROUNDS,
            hidden_size: 16,
            consensus_every_batch: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return Err(TrainError::InvalidLearningRate(self.learning_rate));
        }
        if self.epochs == 0 {
            return Err(TrainError::ZeroEpochs);
        }
        if self.schedule != Schedule::Centralized && self.consensus_rounds == 0 {
            return Err(TrainError::ZeroConsensusRounds);
        }
        if self.batch_size == BatchSize::Size(0) {
            return Err(TrainError::ZeroBatchSize);
        }
        if self.hidden_size == 0 {
            return Err(TrainError::ZeroHiddenSize);
        }
        if !(self.disagreement_tolerance > 0.0 && self.disagreement_tolerance.is_finite()) {
            return Err(TrainError::InvalidTolerance(self.disagreement_tolerance));
        }
        Ok(())
    }
}

/// Runs a closure once per agent index and returns the results in index order.
pub trait Executor: Sync {
    fn map_agents<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send;
}

/// Runs agents one after another on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl Executor for Sequential {
    fn map_agents<T, F>(&self, n: usize, f: F) -> Vec<T>
    where
        T: Send,
        F: Fn(usize) -> T + Sync + Send,
    {
        (0..n).map(f).collect()
    }
}

/// Monotonic time source in seconds.
pub trait Clock {
    fn now(&self) -> f64;
}

/// Reports zero for every reading.
#[derive(Debug, Clone, Copy, Default)]
pub struct NoClock;

impl Clock for NoClock {
    fn now(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PhaseTimings {
    pub local_seconds: f64,
    pub consensus_seconds: f64,
    pub evaluation_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EpochRecord {
    pub epoch: usize,
    /// Per agent, on the agent's own shard.
    pub train_loss: Vec<f64>,
    /// Per agent, on the shared validation set.
    pub val_loss: Vec<f64>,
    /// Validation loss of the agent-mean parameters.
    pub consensus_val_loss: f64,
    pub disagreement: f64,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TrainReport {
    pub schedule: Schedule,
    pub n_agents: usize,
    pub history: Vec<EpochRecord>,
    pub agent_params: Vec<LstmParams>,
    /// Agent mean after the trailing mixing phase.
    pub consensus_params: LstmParams,
    pub trailing_rounds: usize,
    pub final_disagreement: f64,
    pub final_val_loss: f64,
    pub timings: PhaseTimings,
}

/// One agent's view: its parameters, which shard it owns and its step size.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub agent_id: usize,
    pub params: LstmParams,
    pub shard_ref: usize,
    pub learning_rate: f64,
}

/// `Φ = Θ - η ∇E(batch, Θ)`. The agent's stored parameters are untouched.
pub fn local_gradient_step(agent: &AgentState, batch: &[SequenceSample]) -> Result<LstmParams, TrainError> {
    let refs: Vec<&SequenceSample> = batch.iter().collect();
    step_refs(&agent.params, agent.learning_rate, &refs).map_err(|e| match e {
        TrainError::NonFiniteGradient { .. } => TrainError::NonFiniteGradient { agent: agent.agent_id },
        other => other,
    })
}

fn step_refs(params: &LstmParams, eta: f64, batch: &[&SequenceSample]) -> Result<LstmParams, TrainError> {
    if batch.is_empty() {
        return Err(TrainError::EmptyBatch);
    }
    let grad = backward_bptt_refs(params, batch)?;
    if !grad.is_finite() {
        return Err(TrainError::NonFiniteGradient { agent: 0 });
    }
    let mut flat = params.pack();
    for (w, g) in flat.iter_mut().zip(grad.iter()) {
        *w -= eta * g;
    }
    Ok(LstmParams::unpack(params.dims(), &flat)?)
}

/// Applies `v ← W v` coordinate-wise `rounds` times.
pub fn consensus_round(
    candidates: &[FlatVector],
    m: &MixingMatrix,
    rounds: usize,
) -> Result<Vec<FlatVector>, TrainError> {
    if candidates.len() != m.n() {
        return Err(TrainError::MixingSize { matrix: m.n(), vectors: candidates.len() });
    }
    let len = candidates.first().map_or(0, |v| v.len());
    if let Some(v) = candidates.iter().find(|v| v.len() != len) {
        return Err(TrainError::LengthMismatch(len, v.len()));
    }
    let mut cur = candidates.to_vec();
    let mut next = cur.clone();
    for _ in 0..rounds {
        mix_once(&cur, m, &mut next);
        core::mem::swap(&mut cur, &mut next);
    }
    Ok(cur)
}

fn mix_once(cur: &[FlatVector], m: &MixingMatrix, out: &mut [FlatVector]) {
    for (i, dst) in out.iter_mut().enumerate() {
        let row = &m.rows()[i];
        dst.iter_mut().for_each(|x| *x = 0.0);
        for (j, &w) in row.iter().enumerate() {
            if w == 0.0 {
                continue;
            }
            for (d, s) in dst.iter_mut().zip(cur[j].iter()) {
                *d += w * s;
            }
        }
    }
}

/// Largest pairwise 2-norm distance between agents' parameter vectors.
pub fn disagreement(params: &[FlatVector]) -> Result<f64, TrainError> {
    let len = params.first().map_or(0, |v| v.len());
    if let Some(v) = params.iter().find(|v| v.len() != len) {
        return Err(TrainError::LengthMismatch(len, v.len()));
    }
    let mut worst = 0.0f64;
    let mut diff = vec![0.0; len];
    for (i, a) in params.iter().enumerate() {
        for b in &params[i + 1..] {
            for ((d, x), y) in diff.iter_mut().zip(a.iter()).zip(b.iter()) {
                *d = x - y;
            }
            worst = worst.max(norm2(&diff));
        }
    }
    Ok(worst)
}

fn mean_vector(params: &[FlatVector]) -> FlatVector {
    let n = params.len() as f64;
    let mut out = FlatVector::zeros(params[0].len());
    for p in params {
        for (o, x) in out.iter_mut().zip(p.iter()) {
            *o += x;
        }
    }
    out.iter_mut().for_each(|x| *x /= n);
    out
}

/// Stateful training run, advanced one epoch at a time.
///
/// The free functions [`train_lbc`], [`train_cbl`] and [`train_centralized`]
/// drive this to completion; tests step it directly to compare trajectories.
pub struct Run<'a, X: Executor = Sequential, C: Clock = NoClock> {
    cfg: TrainConfig,
    shards: &'a [Shard],
    validation: &'a [SequenceSample],
    mixing: MixingMatrix,
    dims: Dims,
    params: Vec<LstmParams>,
    rngs: Vec<ChaCha8Rng>,
    history: Vec<EpochRecord>,
    timings: PhaseTimings,
    exec: X,
    clock: C,
}

impl<'a> Run<'a, Sequential, NoClock> {
    /// Distributed run over `g` (LBC or CBL per `cfg.schedule`), or a
    /// one-agent run when the schedule is centralized.
    pub fn new(
        cfg: &TrainConfig,
        shards: &'a [Shard],
        g: &GraphTopology,
        validation: &'a Shard,
    ) -> Result<Self, TrainError> {
        cfg.validate()?;
        if shards.len() != g.n_agents() {
            return Err(TrainError::AgentCountMismatch { shards: shards.len(), agents: g.n_agents() });
        }
        let mixing = if cfg.schedule == Schedule::Centralized {
            if shards.len() != 1 {
                return Err(TrainError::AgentCountMismatch { shards: shards.len(), agents: 1 });
            }
            MixingMatrix::identity(1)
        } else {
            metropolis_weights(g)?
        };
        let (d, e) = validation.feature_dims();
        if shards.iter().any(|s| s.feature_dims() != (d, e)) {
            return Err(TrainError::ShapeMismatch);
        }
        if validation.is_empty() {
            return Err(TrainError::EmptyValidation);
        }
        let dims = Dims::new(d, cfg.hidden_size, e);
        let init = LstmParams::init(dims, cfg.seed);
        let rngs = (0..shards.len())
            .map(|i| {
                let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
                rng.set_stream(i as u64 + 1);
                rng
            })
            .collect();
        Ok(Self {
            cfg: cfg.clone(),
            shards,
            validation: validation.samples(),
            mixing,
            dims,
            params: vec![init; shards.len()],
            rngs,
            history: Vec::new(),
            timings: PhaseTimings::default(),
            exec: Sequential,
            clock: NoClock,
        })
    }
}

impl<'a, X: Executor, C: Clock> Run<'a, X, C> {
    pub fn with_executor<Y: Executor>(self, exec: Y) -> Run<'a, Y, C> {
        Run {
            cfg: self.cfg,
            shards: self.shards,
            validation: self.validation,
            mixing: self.mixing,
            dims: self.dims,
            params: self.params,
            rngs: self.rngs,
            history: self.history,
            timings: self.timings,
            exec,
            clock: self.clock,
        }
    }

    pub fn with_clock<D: Clock>(self, clock: D) -> Run<'a, X, D> {
        Run {
            cfg: self.cfg,
            shards: self.shards,
            validation: self.validation,
            mixing: self.mixing,
            dims: self.dims,
            params: self.params,
            rngs: self.rngs,
            history: self.history,
            timings: self.timings,
            exec: self.exec,
            clock,
        }
    }

    pub fn params(&self) -> &[LstmParams] {
        &self.params
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn history(&self) -> &[EpochRecord] {
        &self.history
    }

    pub fn epochs_done(&self) -> usize {
        self.history.len()
    }

    fn packed(&self) -> Vec<FlatVector> {
        self.params.iter().map(LstmParams::pack).collect()
    }

    fn set_packed(&mut self, packed: &[FlatVector]) -> Result<(), TrainError> {
        for (p, v) in self.params.iter_mut().zip(packed) {
            *p = LstmParams::unpack(self.dims, v)?;
        }
        Ok(())
    }

    fn distributed(&self) -> bool {
        self.cfg.schedule != Schedule::Centralized
    }

    fn mix(&mut self, rounds: usize) -> Result<(), TrainError> {
        if !self.distributed() || rounds == 0 {
            return Ok(());
        }
        let t0 = self.clock.now();
        let mixed = consensus_round(&self.packed(), &self.mixing, rounds)?;
        self.set_packed(&mixed)?;
        self.timings.consensus_seconds += self.clock.now() - t0;
        Ok(())
    }

    /// Mini-batch index lists for every agent this epoch.
    fn plan_batches(&mut self) -> Vec<Vec<Vec<usize>>> {
        let batch_size = self.cfg.batch_size;
        self.shards
            .iter()
            .zip(self.rngs.iter_mut())
            .map(|(shard, rng)| {
                let mut order: Vec<usize> = (0..shard.len()).collect();
                match batch_size {
                    BatchSize::Full => vec![order],
                    BatchSize::Size(b) => {
                        order.shuffle(rng);
                        order.chunks(b).map(<[usize]>::to_vec).collect()
                    }
                }
            })
            .collect()
    }

    /// Runs the planned batches in `batches` for every agent through the executor.
    fn local_phase(&mut self, plans: &[Vec<Vec<usize>>], batches: core::ops::Range<usize>) -> Result<(), TrainError> {
        let t0 = self.clock.now();
        let eta = self.cfg.learning_rate;
        let shards = self.shards;
        let params = &self.params;
        let results = self.exec.map_agents(params.len(), |i| {
            let samples = shards[i].samples();
            let mut p = params[i].clone();
            for idx in plans[i].iter().take(batches.end).skip(batches.start) {
                let batch: Vec<&SequenceSample> = idx.iter().map(|&k| &samples[k]).collect();
                p = step_refs(&p, eta, &batch).map_err(|e| match e {
                    TrainError::NonFiniteGradient { .. } => TrainError::NonFiniteGradient { agent: i },
                    other => other,
                })?;
            }
            Ok::<_, TrainError>(p)
        });
        for (slot, r) in self.params.iter_mut().zip(results) {
            *slot = r?;
        }
        self.timings.local_seconds += self.clock.now() - t0;
        Ok(())
    }

    fn phases(
        &mut self,
        plans: &[Vec<Vec<usize>>],
        batches: core::ops::Range<usize>,
        k: usize,
        cbl: bool,
    ) -> Result<(), TrainError> {
        if cbl {
            self.mix(k)?;
        }
        self.local_phase(plans, batches)?;
        if !cbl {
            self.mix(k)?;
        }
        Ok(())
    }

    /// Advances one epoch and returns its record.
    pub fn step_epoch(&mut self) -> Result<&EpochRecord, TrainError> {
        let epoch = self.history.len();
        let t_start = self.clock.now();
        let k = self.cfg.consensus_rounds;
        let cbl = self.cfg.schedule == Schedule::Cbl;
        let plans = self.plan_batches();

        let outcome = if self.cfg.consensus_every_batch && self.distributed() {
            let max_batches = plans.iter().map(Vec::len).max().unwrap_or(0);
            (0..max_batches).try_for_each(|b| self.phases(&plans, b..b + 1, k, cbl))
        } else {
            self.phases(&plans, 0..usize::MAX, k, cbl)
        };
        match outcome {
            Ok(()) => {}
            Err(TrainError::NonFiniteGradient { .. }) | Err(TrainError::Lstm(LstmError::NonFinite { .. })) => {
                return Err(TrainError::Diverged { epoch, history: self.history.clone() });
            }
            Err(e) => return Err(e),
        }

        let record = self.evaluate(epoch)?;
        self.timings.total_seconds += self.clock.now() - t_start;
        let finite = record.train_loss.iter().chain(&record.val_loss).all(|x| x.is_finite())
            && record.consensus_val_loss.is_finite()
            && record.disagreement.is_finite();
        if !finite {
            let mut history = self.history.clone();
            history.push(record);
            return Err(TrainError::Diverged { epoch, history });
        }
        self.history.push(record);
        Ok(self.history.last().expect("just pushed"))
    }

    fn evaluate(&mut self, epoch: usize) -> Result<EpochRecord, TrainError> {
        let t0 = self.clock.now();
        let shards = self.shards;
        let validation = self.validation;
        let params = &self.params;
        let losses = self.exec.map_agents(params.len(), |i| {
            let train = empirical_loss(&params[i], shards[i].samples()).unwrap_or(f64::NAN);
            let val = empirical_loss(&params[i], validation).unwrap_or(f64::NAN);
            (train, val)
        });
        let packed = self.packed();
        let disagreement = disagreement(&packed)?;
        let mean = LstmParams::unpack(self.dims, &mean_vector(&packed))?;
        let consensus_val_loss = empirical_loss(&mean, validation).unwrap_or(f64::NAN);
        self.timings.evaluation_seconds += self.clock.now() - t0;
        Ok(EpochRecord {
            epoch,
            train_loss: losses.iter().map(|l| l.0).collect(),
            val_loss: losses.iter().map(|l| l.1).collect(),
            consensus_val_loss,
            disagreement,
        })
    }

    /// Single mixing iterations until agents agree within tolerance or the
    /// round cap is reached. Returns `(rounds, final disagreement)`.
    pub fn trailing_consensus(&mut self) -> Result<(usize, f64), TrainError> {
        let mut packed = self.packed();
        let mut gap = disagreement(&packed)?;
        if !self.distributed() {
            return Ok((0, gap));
        }
        let t0 = self.clock.now();
        let mut rounds = 0;
        let mut next = packed.clone();
        while gap > self.cfg.disagreement_tolerance && rounds < self.cfg.max_trailing_rounds {
            mix_once(&packed, &self.mixing, &mut next);
            core::mem::swap(&mut packed, &mut next);
            rounds += 1;
            gap = disagreement(&packed)?;
        }
        self.set_packed(&packed)?;
        let spent = self.clock.now() - t0;
        self.timings.consensus_seconds += spent;
        self.timings.total_seconds += spent;
        Ok((rounds, gap))
    }

    /// Runs the remaining epochs and the trailing consensus phase.
    pub fn finish(mut self) -> Result<TrainReport, TrainError> {
        while self.history.len() < self.cfg.epochs {
            self.step_epoch()?;
        }
        let (trailing_rounds, final_disagreement) = self.trailing_consensus()?;
        let packed = self.packed();
        let consensus_params = LstmParams::unpack(self.dims, &mean_vector(&packed))?;
        let final_val_loss = empirical_loss(&consensus_params, self.validation)?;
        Ok(TrainReport {
            schedule: self.cfg.schedule,
            n_agents: self.params.len(),
            history: self.history,
            agent_params: self.params,
            consensus_params,
            trailing_rounds,
            final_disagreement,
            final_val_loss,
            timings: self.timings,
        })
    }
}

fn with_schedule(cfg: &TrainConfig, schedule: Schedule) -> TrainConfig {
    TrainConfig { schedule, ..cfg.clone() }
}

/// Learning before consensus, regardless of `cfg.schedule`.
pub fn train_lbc(
    cfg: &TrainConfig,
    shards: &[Shard],
    g: &GraphTopology,
    validation: &Shard,
) -> Result<TrainReport, TrainError> {
    Run::new(&with_schedule(cfg, Schedule::Lbc), shards, g, validation)?.finish()
}

/// Consensus before learning, regardless of `cfg.schedule`.
pub fn train_cbl(
    cfg: &TrainConfig,
    shards: &[Shard],
    g: &GraphTopology,
    validation: &Shard,
) -> Result<TrainReport, TrainError> {
    Run::new(&with_schedule(cfg, Schedule::Cbl), shards, g, validation)?.finish()
}

/// Plain gradient descent on a single model over `full`.
pub fn train_centralized(cfg: &TrainConfig, full: &Shard, validation: &Shard) -> Result<TrainReport, TrainError> {
    let single = GraphTopology::new(1, &[])?;
    Run::new(&with_schedule(cfg, Schedule::Centralized), core::slice::from_ref(full), &single, validation)?.finish()
}
