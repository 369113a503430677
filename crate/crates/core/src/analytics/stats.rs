use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};
use statrs::statistics::{Data, OrderStatistics};
use thiserror::Error;

#[derive(Clone, Copy, Debug, Error, PartialEq, Eq, Serialize, Deserialize)]
pub enum StatsError {
    #[error("series has fewer than two prices")]
    EmptySeries,
    #[error("series has zero variance")]
    ZeroVariance,
    #[error("series is too short for this estimator")]
    InsufficientData,
    #[error("series contains a non-positive or non-finite value")]
    BadInput,
}

/// `r_t = ln(p_t / p_{t-1})`.
pub fn log_returns(prices: &[i64]) -> Result<Vec<f64>, StatsError> {
    if prices.len() < 2 {
        return Err(StatsError::EmptySeries);
    }
    if prices.iter().any(|&p| p <= 0) {
        return Err(StatsError::BadInput);
    }
    Ok(prices
        .windows(2)
        .map(|w| (w[1] as f64 / w[0] as f64).ln())
        .collect())
}

fn mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Central moments `(m2, m4)` with divisor `n`.
fn central_moments(x: &[f64]) -> (f64, f64) {
    let m = mean(x);
    let (mut s2, mut s4) = (0.0, 0.0);
    for &v in x {
        let d = (v - m) * (v - m);
        s2 += d;
        s4 += d * d;
    }
    let n = x.len() as f64;
    (s2 / n, s4 / n)
}

/// Biased sample autocorrelation for lags `0..=max_lag`.
pub fn acf(x: &[f64], max_lag: usize) -> Result<Vec<f64>, StatsError> {
    if x.len() <= max_lag || x.len() < 2 {
        return Err(StatsError::InsufficientData);
    }
    let m = mean(x);
    let d: Vec<f64> = x.iter().map(|v| v - m).collect();
    let denom: f64 = d.iter().map(|v| v * v).sum();
    if !(denom > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    Ok((0..=max_lag)
        .map(|k| {
            if k == 0 {
                return 1.0;
            }
            let num: f64 = d[..d.len() - k]
                .iter()
                .zip(&d[k..])
                .map(|(a, b)| a * b)
                .sum();
            num / denom
        })
        .collect())
}

/// `m4 / m2^2 - 3` with central sample moments.
pub fn excess_kurtosis(x: &[f64]) -> Result<f64, StatsError> {
    if x.len() < 4 {
        return Err(StatsError::InsufficientData);
    }
    let (m2, m4) = central_moments(x);
    if !(m2 > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    Ok(m4 / (m2 * m2) - 3.0)
}

/// Pairs `(normal quantile, empirical quantile)` of the standardized
/// series at levels `(i - 0.5) / n_quantiles`, `i = 1..=n_quantiles`.
pub fn qq_data(x: &[f64], n_quantiles: usize) -> Result<Vec<(f64, f64)>, StatsError> {
    if n_quantiles < 2 || x.len() < n_quantiles {
        return Err(StatsError::InsufficientData);
    }
    let m = mean(x);
    let (m2, _) = central_moments(x);
    if !(m2 > 0.0) {
        return Err(StatsError::ZeroVariance);
    }
    let sd = m2.sqrt();
    let mut z: Vec<f64> = x.iter().map(|v| (v - m) / sd).collect();
    z.sort_by(f64::total_cmp);
    let mut data = Data::new(z);
    let normal = Normal::standard();
    Ok((1..=n_quantiles)
        .map(|i| {
            let p = (i as f64 - 0.5) / n_quantiles as f64;
            (normal.inverse_cdf(p), data.quantile(p))
        })
        .collect())
}
