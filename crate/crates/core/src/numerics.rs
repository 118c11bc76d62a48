//! Dense linear algebra, activations and a finite-difference gradient oracle.
//!
//! Everything here is sized for the forecasting problem (hidden sizes of a few
//! dozen units), so the matrix kernels are plain loops over row-major storage.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Deref, DerefMut};

use thiserror::Error;

/// Default step for central differences.
pub const FD_EPS: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NumericsError {
    #[error("softmax of an empty vector")]
    EmptyVector,
    #[error("finite-difference step must be positive, got {0}")]
    InvalidStep(f64),
    #[error("loss evaluated to a non-finite value while perturbing coordinate {coordinate}")]
    NonFiniteLoss { coordinate: usize },
    #[error("matrix data has {len} entries, expected {rows}x{cols}")]
    ShapeMismatch { rows: usize, cols: usize, len: usize },
}

/// Logistic sigmoid, evaluated through `exp(-|x|)` so it never overflows.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

#[inline]
pub fn tanh_act(x: f64) -> f64 {
    libm::tanh(x)
}

/// Max-shifted softmax.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>, NumericsError> {
    let max = v
        .iter()
        .copied()
        .fold(None, |m: Option<f64>, x| Some(m.map_or(x, |m| m.max(x))))
        .ok_or(NumericsError::EmptyVector)?;
    let mut out: Vec<f64> = v.iter().map(|&x| libm::exp(x - max)).collect();
    let total: f64 = out.iter().sum();
    for x in &mut out {
        *x /= total;
    }
    Ok(out)
}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self, NumericsError> {
        if data.len() != rows * cols {
            return Err(NumericsError::ShapeMismatch { rows, cols, len: data.len() });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    /// `out = self * x + bias`.
    pub fn affine_into(&self, x: &[f64], bias: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.cols);
        debug_assert_eq!(bias.len(), self.rows);
        for (r, o) in out.iter_mut().enumerate().take(self.rows) {
            *o = bias[r] + dot(self.row(r), x);
        }
    }

    /// `out += selfᵀ * y`.
    pub fn add_transpose_mul(&self, y: &[f64], out: &mut [f64]) {
        debug_assert_eq!(y.len(), self.rows);
        debug_assert_eq!(out.len(), self.cols);
        for (r, &yr) in y.iter().enumerate() {
            if yr == 0.0 {
                continue;
            }
            for (o, &w) in out.iter_mut().zip(self.row(r)) {
                *o += w * yr;
            }
        }
    }

    /// `self += a ⊗ b`.
    pub fn add_outer(&mut self, a: &[f64], b: &[f64]) {
        debug_assert_eq!(a.len(), self.rows);
        debug_assert_eq!(b.len(), self.cols);
        for (r, &ar) in a.iter().enumerate() {
            let row = &mut self.data[r * self.cols..(r + 1) * self.cols];
            for (x, &bc) in row.iter_mut().zip(b) {
                *x += ar * bc;
            }
        }
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm2(v: &[f64]) -> f64 {
    libm::sqrt(dot(v, v))
}

/// A packed parameter (or gradient) vector.
#[derive(Debug, Clone, PartialEq, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(transparent))]
pub struct FlatVector(pub Vec<f64>);

impl FlatVector {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|x| x.is_finite())
    }
}

impl From<Vec<f64>> for FlatVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

impl Deref for FlatVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl DerefMut for FlatVector {
    fn deref_mut(&mut self) -> &mut [f64] {
        &mut self.0
    }
}

/// Central-difference gradient of `loss` at `theta`.
pub fn finite_difference_gradient<F>(
    mut loss: F,
    theta: &FlatVector,
    eps: f64,
) -> Result<FlatVector, NumericsError>
where
    F: FnMut(&FlatVector) -> f64,
{
    if !(eps > 0.0) || !eps.is_finite() {
        return Err(NumericsError::InvalidStep(eps));
    }
    let mut probe = theta.clone();
    let mut grad = FlatVector::zeros(theta.len());
    for k in 0..theta.len() {
        let orig = probe[k];
        probe[k] = orig + eps;
        let up = loss(&probe);
        probe[k] = orig - eps;
        let down = loss(&probe);
        probe[k] = orig;
        if !up.is_finite() || !down.is_finite() {
            return Err(NumericsError::NonFiniteLoss { coordinate: k });
        }
        grad[k] = (up - down) / (2.0 * eps);
    }
    Ok(grad)
}

/// `|a - b| / max(1e-8, |a| + |b|)`.
#[inline]
pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / (a.abs() + b.abs()).max(1e-8)
}

/// Largest coordinate-wise [`relative_error`] between two equal-length slices.
pub fn max_relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    a.iter().zip(b).map(|(&x, &y)| relative_error(x, y)).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn sigmoid_edges() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert!(sigmoid(-1000.0) >= 0.0);
        for &x in &[0.1, 1.0, 3.7, 20.0, 700.0] {
            assert!((sigmoid(-x) - (1.0 - sigmoid(x))).abs() <= 1e-15);
        }
    }

    #[test]
    fn tanh_edges() {
        assert_eq!(tanh_act(0.0), 0.0);
        assert_eq!(tanh_act(50.0), 1.0);
        for &x in &[0.3, 1.0, 4.5] {
            assert!((tanh_act(-x) + tanh_act(x)).abs() <= 1e-15);
        }
    }

    #[test]
    fn softmax_cases() {
        let p = softmax(&[2.5, 2.5, 2.5]).unwrap();
        for x in &p {
            assert!((x - 1.0 / 3.0).abs() < 1e-15);
        }
        assert_eq!(softmax(&[0.0]).unwrap(), vec![1.0]);
        let e = core::f64::consts::E;
        let p = softmax(&[1.0, 2.0]).unwrap();
        assert!((p[0] - 1.0 / (1.0 + e)).abs() < 1e-15);
        assert!((p[1] - e / (1.0 + e)).abs() < 1e-15);
        assert_eq!(softmax(&[]), Err(NumericsError::EmptyVector));
        let p = softmax(&[1000.0, -1000.0, 3.0]).unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fd_on_quadratic_and_constant() {
        let theta = FlatVector(vec![1.0, -2.0]);
        let g = finite_difference_gradient(|t| t.iter().map(|x| x * x).sum(), &theta, FD_EPS).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8);
        assert!((g[1] + 4.0).abs() < 1e-8);
        let g = finite_difference_gradient(|_| 4.2, &theta, FD_EPS).unwrap();
        assert_eq!(g.0, vec![0.0, 0.0]);
    }

    #[test]
    fn fd_reports_coordinate() {
        let theta = FlatVector(vec![0.0, 0.0, 0.0]);
        let err = finite_difference_gradient(
            |t| if t[2] != 0.0 { f64::NAN } else { 0.0 },
            &theta,
            FD_EPS,
        )
        .unwrap_err();
        assert_eq!(err, NumericsError::NonFiniteLoss { coordinate: 2 });
        assert!(finite_difference_gradient(|_| 0.0, &theta, 0.0).is_err());
    }

    #[test]
    fn matrix_kernels() {
        let m = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let mut out = [0.0; 2];
        m.affine_into(&[1.0, 0.0, -1.0], &[0.5, 0.5], &mut out);
        assert_eq!(out, [-1.5, -1.5]);
        let mut t = [0.0; 3];
        m.add_transpose_mul(&[1.0, 1.0], &mut t);
        assert_eq!(t, [5.0, 7.0, 9.0]);
        let mut z = Matrix::zeros(2, 3);
        z.add_outer(&[1.0, 2.0], &[1.0, 0.0, 3.0]);
        assert_eq!(z.as_slice(), &[1.0, 0.0, 3.0, 2.0, 0.0, 6.0]);
        assert!(Matrix::from_vec(2, 2, vec![0.0; 3]).is_err());
    }
}
