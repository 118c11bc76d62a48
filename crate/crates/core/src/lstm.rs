//! Single-layer LSTM forecaster with an affine scalar readout.
//!
//! A sample is a sequence of `T` input vectors (length `D`) plus a readout
//! context of `E` exogenous values for the forecast day. The cell is run from
//! a zero state over the sequence and the prediction is
//! `y = w_v · [h_T ; context] + b_v`.
//!
//! Parameters pack into a flat vector in the order
//! `W_f, b_f, W_j, b_j, W_C, b_C, W_o, b_o, W_v, b_v`, each row-major. The
//! gradient returned by [`backward_bptt`] uses the same layout.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::numerics::{dot, sigmoid, tanh_act, FlatVector, Matrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LstmError {
    #[error("dimension mismatch: {what} has length {got}, expected {expected}")]
    Dimension { what: &'static str, got: usize, expected: usize },
    #[error("sample sequence is empty")]
    EmptySequence,
    #[error("batch is empty")]
    EmptyBatch,
    #[error("non-finite value while processing sample {sample}")]
    NonFinite { sample: usize },
    #[error("flat vector has length {got}, parameter layout needs {expected}")]
    PackedLength { got: usize, expected: usize },
}

/// The four gate blocks in packing order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Gate {
    Forget = 0,
    Input = 1,
    Candidate = 2,
    Output = 3,
}

impl Gate {
    pub const ALL: [Gate; 4] = [Gate::Forget, Gate::Input, Gate::Candidate, Gate::Output];
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct GateParams {
    /// `H × (H + D)`, acting on `[h_{t-1}; x_t]`.
    pub weights: Matrix,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct LstmParams {
    input_size: usize,
    hidden_size: usize,
    readout_extras: usize,
    /// Indexed by [`Gate`].
    pub gates: [GateParams; 4],
    /// Length `H + E`.
    pub readout_weights: Vec<f64>,
    pub readout_bias: f64,
}

/// Shape of a parameter set: `(D, H, E)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Dims {
    pub input: usize,
    pub hidden: usize,
    pub extras: usize,
}

impl Dims {
    pub fn new(input: usize, hidden: usize, extras: usize) -> Self {
        Self { input, hidden, extras }
    }

    /// Length of the packed parameter vector.
    pub fn flat_len(&self) -> usize {
        4 * (self.hidden * (self.hidden + self.input) + self.hidden) + (self.hidden + self.extras) + 1
    }
}

impl LstmParams {
    pub fn zeros(dims: Dims) -> Self {
        let Dims { input, hidden, extras } = dims;
        let gate = || GateParams { weights: Matrix::zeros(hidden, hidden + input), bias: vec![0.0; hidden] };
        Self {
            input_size: input,
            hidden_size: hidden,
            readout_extras: extras,
            gates: [gate(), gate(), gate(), gate()],
            readout_weights: vec![0.0; hidden + extras],
            readout_bias: 0.0,
        }
    }

    /// Uniform weights in `±1/√H` from a seeded ChaCha stream; biases zero
    /// except the forget gate, which starts at 1.
    pub fn init(dims: Dims, seed: u64) -> Self {
        let mut p = Self::zeros(dims);
        let bound = 1.0 / libm::sqrt(dims.hidden as f64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for gate in &mut p.gates {
            for w in gate.weights.as_mut_slice() {
                *w = rng.random_range(-bound..=bound);
            }
        }
        for w in &mut p.readout_weights {
            *w = rng.random_range(-bound..=bound);
        }
        p.gates[Gate::Forget as usize].bias.iter_mut().for_each(|b| *b = 1.0);
        p
    }

    pub fn dims(&self) -> Dims {
        Dims::new(self.input_size, self.hidden_size, self.readout_extras)
    }

    #[inline]
    pub fn input_size(&self) -> usize {
        self.input_size
    }

    #[inline]
    pub fn hidden_size(&self) -> usize {
        self.hidden_size
    }

    #[inline]
    pub fn readout_extras(&self) -> usize {
        self.readout_extras
    }

    pub fn gate(&self, g: Gate) -> &GateParams {
        &self.gates[g as usize]
    }

    pub fn gate_mut(&mut self, g: Gate) -> &mut GateParams {
        &mut self.gates[g as usize]
    }

    pub fn flat_len(&self) -> usize {
        self.dims().flat_len()
    }

    pub fn pack(&self) -> FlatVector {
        let mut out = Vec::with_capacity(self.flat_len());
        for gate in &self.gates {
            out.extend_from_slice(gate.weights.as_slice());
            out.extend_from_slice(&gate.bias);
        }
        out.extend_from_slice(&self.readout_weights);
        out.push(self.readout_bias);
        FlatVector(out)
    }

    pub fn unpack(dims: Dims, flat: &[f64]) -> Result<Self, LstmError> {
        let expected = dims.flat_len();
        if flat.len() != expected {
            return Err(LstmError::PackedLength { got: flat.len(), expected });
        }
        let mut p = Self::zeros(dims);
        let mut at = 0;
        let mut take = |dst: &mut [f64]| {
            dst.copy_from_slice(&flat[at..at + dst.len()]);
            at += dst.len();
        };
        for gate in &mut p.gates {
            take(gate.weights.as_mut_slice());
            take(&mut gate.bias);
        }
        take(&mut p.readout_weights);
        let mut b = [0.0];
        take(&mut b);
        p.readout_bias = b[0];
        Ok(p)
    }

    pub fn is_finite(&self) -> bool {
        self.gates.iter().all(|g| g.weights.is_finite() && g.bias.iter().all(|b| b.is_finite()))
            && self.readout_weights.iter().all(|w| w.is_finite())
            && self.readout_bias.is_finite()
    }
}

/// Convenience wrappers matching the packed layout.
pub fn pack_params(p: &LstmParams) -> FlatVector {
    p.pack()
}

pub fn unpack_params(dims: Dims, flat: &[f64]) -> Result<LstmParams, LstmError> {
    LstmParams::unpack(dims, flat)
}

/// Hidden output and cell state after one step.
#[derive(Debug, Clone, PartialEq)]
pub struct CellState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl CellState {
    pub fn zeros(hidden: usize) -> Self {
        Self { h: vec![0.0; hidden], c: vec![0.0; hidden] }
    }
}

/// Everything the backward pass needs from one forward step.
#[derive(Debug, Clone, PartialEq)]
pub struct GateCache {
    /// `[h_{t-1}; x_t]`
    pub z: Vec<f64>,
    /// Pre-activations indexed by [`Gate`].
    pub pre: [Vec<f64>; 4],
    pub f: Vec<f64>,
    pub j: Vec<f64>,
    pub c_hat: Vec<f64>,
    pub o: Vec<f64>,
    pub c_prev: Vec<f64>,
    pub tanh_c: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SequenceSample {
    pub steps: Vec<Vec<f64>>,
    pub readout_context: Vec<f64>,
    pub target: f64,
}

fn check_len(what: &'static str, got: usize, expected: usize) -> Result<(), LstmError> {
    if got == expected {
        Ok(())
    } else {
        Err(LstmError::Dimension { what, got, expected })
    }
}

pub fn cell_forward(p: &LstmParams, prev: &CellState, x: &[f64]) -> Result<(CellState, GateCache), LstmError> {
    let h = p.hidden_size;
    check_len("x_t", x.len(), p.input_size)?;
    check_len("h_prev", prev.h.len(), h)?;
    check_len("c_prev", prev.c.len(), h)?;

    let mut z = Vec::with_capacity(h + p.input_size);
    z.extend_from_slice(&prev.h);
    z.extend_from_slice(x);

    let mut pre: [Vec<f64>; 4] = core::array::from_fn(|_| vec![0.0; h]);
    for g in Gate::ALL {
        let gp = p.gate(g);
        gp.weights.affine_into(&z, &gp.bias, &mut pre[g as usize]);
    }
    let f: Vec<f64> = pre[Gate::Forget as usize].iter().map(|&a| sigmoid(a)).collect();
    let j: Vec<f64> = pre[Gate::Input as usize].iter().map(|&a| sigmoid(a)).collect();
    let c_hat: Vec<f64> = pre[Gate::Candidate as usize].iter().map(|&a| tanh_act(a)).collect();
    let o: Vec<f64> = pre[Gate::Output as usize].iter().map(|&a| sigmoid(a)).collect();

    let c: Vec<f64> = (0..h).map(|k| f[k] * prev.c[k] + j[k] * c_hat[k]).collect();
    let tanh_c: Vec<f64> = c.iter().map(|&v| tanh_act(v)).collect();
    let h_new: Vec<f64> = o.iter().zip(&tanh_c).map(|(o, t)| o * t).collect();

    let cache = GateCache { z, pre, f, j, c_hat, o, c_prev: prev.c.clone(), tanh_c };
    Ok((CellState { h: h_new, c }, cache))
}

fn check_sample(p: &LstmParams, s: &SequenceSample) -> Result<(), LstmError> {
    if s.steps.is_empty() {
        return Err(LstmError::EmptySequence);
    }
    check_len("readout_context", s.readout_context.len(), p.readout_extras)?;
    for x in &s.steps {
        check_len("x_t", x.len(), p.input_size)?;
    }
    Ok(())
}

fn readout(p: &LstmParams, h: &[f64], context: &[f64]) -> f64 {
    let hs = p.hidden_size;
    p.readout_bias + dot(&p.readout_weights[..hs], h) + dot(&p.readout_weights[hs..], context)
}

/// Forward pass keeping every step's cache.
fn forward_cached(p: &LstmParams, s: &SequenceSample) -> Result<(f64, CellState, Vec<GateCache>), LstmError> {
    check_sample(p, s)?;
    let mut state = CellState::zeros(p.hidden_size);
    let mut caches = Vec::with_capacity(s.steps.len());
    for x in &s.steps {
        let (next, cache) = cell_forward(p, &state, x)?;
        caches.push(cache);
        state = next;
    }
    let y = readout(p, &state.h, &s.readout_context);
    Ok((y, state, caches))
}

pub fn predict(p: &LstmParams, s: &SequenceSample) -> Result<f64, LstmError> {
    check_sample(p, s)?;
    let mut state = CellState::zeros(p.hidden_size);
    for x in &s.steps {
        state = cell_forward(p, &state, x)?.0;
    }
    Ok(readout(p, &state.h, &s.readout_context))
}

/// Mean squared error over the batch.
pub fn empirical_loss(p: &LstmParams, batch: &[SequenceSample]) -> Result<f64, LstmError> {
    if batch.is_empty() {
        return Err(LstmError::EmptyBatch);
    }
    let mut total = 0.0;
    for s in batch {
        let e = predict(p, s)? - s.target;
        total += e * e;
    }
    Ok(total / batch.len() as f64)
}

/// Sum of squared errors, for callers that combine several shards.
pub fn squared_error_sum(p: &LstmParams, batch: &[SequenceSample]) -> Result<f64, LstmError> {
    batch.iter().try_fold(0.0, |acc, s| {
        let e = predict(p, s)? - s.target;
        Ok(acc + e * e)
    })
}

/// Exact gradient of [`empirical_loss`] by backpropagation through time.
///
/// Samples are accumulated in batch order.
pub fn backward_bptt(p: &LstmParams, batch: &[SequenceSample]) -> Result<FlatVector, LstmError> {
    let refs: Vec<&SequenceSample> = batch.iter().collect();
    backward_bptt_refs(p, &refs)
}

/// [`backward_bptt`] over borrowed samples, e.g. a shuffled mini-batch.
pub fn backward_bptt_refs(p: &LstmParams, batch: &[&SequenceSample]) -> Result<FlatVector, LstmError> {
    if batch.is_empty() {
        return Err(LstmError::EmptyBatch);
    }
    let hs = p.hidden_size;
    let scale = 2.0 / batch.len() as f64;
    let mut grad = LstmParams::zeros(p.dims());

    let mut da: [Vec<f64>; 4] = core::array::from_fn(|_| vec![0.0; hs]);
    let mut dz = vec![0.0; hs + p.input_size];

    for (idx, s) in batch.iter().enumerate() {
        let (y, last, caches) = forward_cached(p, s)?;
        if !y.is_finite() {
            return Err(LstmError::NonFinite { sample: idx });
        }
        let dy = scale * (y - s.target);

        grad.readout_bias += dy;
        for (g, &hk) in grad.readout_weights[..hs].iter_mut().zip(&last.h) {
            *g += dy * hk;
        }
        for (g, &ek) in grad.readout_weights[hs..].iter_mut().zip(&s.readout_context) {
            *g += dy * ek;
        }

        let mut dh: Vec<f64> = p.readout_weights[..hs].iter().map(|w| dy * w).collect();
        let mut dc = vec![0.0; hs];

        for cache in caches.iter().rev() {
            for k in 0..hs {
                let (f, j, c_hat, o, tc) = (cache.f[k], cache.j[k], cache.c_hat[k], cache.o[k], cache.tanh_c[k]);
                let d_o = dh[k] * tc;
                dc[k] += dh[k] * o * (1.0 - tc * tc);
                let d_f = dc[k] * cache.c_prev[k];
                let d_j = dc[k] * c_hat;
                let d_chat = dc[k] * j;
                da[Gate::Forget as usize][k] = d_f * f * (1.0 - f);
                da[Gate::Input as usize][k] = d_j * j * (1.0 - j);
                da[Gate::Candidate as usize][k] = d_chat * (1.0 - c_hat * c_hat);
                da[Gate::Output as usize][k] = d_o * o * (1.0 - o);
                // carry to C_{t-1}
                dc[k] *= f;
            }
            dz.iter_mut().for_each(|x| *x = 0.0);
            for g in Gate::ALL {
                let gi = g as usize;
                let gp = grad.gate_mut(g);
                gp.weights.add_outer(&da[gi], &cache.z);
                for (b, d) in gp.bias.iter_mut().zip(&da[gi]) {
                    *b += d;
                }
                p.gate(g).weights.add_transpose_mul(&da[gi], &mut dz);
            }
            dh.copy_from_slice(&dz[..hs]);
        }
        if !dh.iter().chain(&dc).all(|x| x.is_finite()) {
            return Err(LstmError::NonFinite { sample: idx });
        }
    }
    let flat = grad.pack();
    if !flat.is_finite() {
        return Err(LstmError::NonFinite { sample: batch.len() - 1 });
    }
    Ok(flat)
}
