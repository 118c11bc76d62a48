//! Forecast error metrics, computed in raw (denormalized) units.

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("actual has {actual} values but forecast has {forecast}")]
    LengthMismatch { actual: usize, forecast: usize },
    #[error("cannot evaluate an empty series")]
    Empty,
    #[error("actual value at index {0} is zero; MAPE is undefined")]
    ZeroActual(usize),
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct EvalReport {
    /// Mean absolute percentage error as a fraction (0.0138 == 1.38 %).
    pub mape: f64,
    /// `(1/N) Σ (y - ŷ)²`
    pub mse_plain: f64,
    /// `Σ (y - ŷ)² / Σ y²`
    pub mse_relative: f64,
    pub mae: f64,
    pub n: usize,
}

pub fn evaluate(actual: &[f64], forecast: &[f64]) -> Result<EvalReport, MetricsError> {
    if actual.len() != forecast.len() {
        return Err(MetricsError::LengthMismatch { actual: actual.len(), forecast: forecast.len() });
    }
    if actual.is_empty() {
        return Err(MetricsError::Empty);
    }
    if let Some(i) = actual.iter().position(|&y| y == 0.0) {
        return Err(MetricsError::ZeroActual(i));
    }
    let n = actual.len() as f64;
    let (mut ape, mut ae, mut se, mut yy) = (0.0, 0.0, 0.0, 0.0);
    for (&y, &f) in actual.iter().zip(forecast) {
        let e = y - f;
        ape += (e / y).abs();
        ae += e.abs();
        se += e * e;
        yy += y * y;
    }
    Ok(EvalReport { mape: ape / n, mse_plain: se / n, mse_relative: se / yy, mae: ae / n, n: actual.len() })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_forecast_is_zero() {
        let y = [100.0, 250.0, 80.0];
        let r = evaluate(&y, &y).unwrap();
        assert_eq!((r.mape, r.mae, r.mse_plain, r.mse_relative, r.n), (0.0, 0.0, 0.0, 0.0, 3));
    }

    #[test]
    fn single_point_arithmetic() {
        let r = evaluate(&[100.0], &[90.0]).unwrap();
        assert!((r.mape - 0.1).abs() < 1e-15);
        assert_eq!(r.mae, 10.0);
        assert_eq!(r.mse_plain, 100.0);
        assert!((r.mse_relative - 0.01).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert_eq!(
            evaluate(&[1.0, 2.0], &[1.0]),
            Err(MetricsError::LengthMismatch { actual: 2, forecast: 1 })
        );
        assert_eq!(evaluate(&[], &[]), Err(MetricsError::Empty));
        assert_eq!(evaluate(&[3.0, 0.0], &[1.0, 1.0]), Err(MetricsError::ZeroActual(1)));
    }
}
