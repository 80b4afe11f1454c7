//! Regression error metrics and multi-seed aggregation.

use alloc::vec::Vec;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::math;
use crate::rng::{seeded, Stream};

/// Targets at or below this many riders/day are left out of MAPE.
pub const DEFAULT_MAPE_FLOOR: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("{truth} targets but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no targets to score")]
    Empty,
    #[error("every target is at or below the MAPE floor {0}")]
    AllExcludedFromMAPE(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub mse: f64,
    pub rmse: f64,
    pub mae: f64,
    pub mape_pct: f64,
    /// Targets skipped by MAPE for being at or below the floor.
    pub mape_excluded: usize,
}

impl Metrics {
    pub const NAMES: [&'static str; 4] = ["mse", "rmse", "mae", "mape_pct"];

    pub fn values(&self) -> [f64; 4] {
        [self.mse, self.rmse, self.mae, self.mape_pct]
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        Self::NAMES.iter().position(|n| *n == name).map(|i| self.values()[i])
    }
}

pub fn compute_metrics(truth: &[f64], predicted: &[f64]) -> Result<Metrics, MetricsError> {
    compute_metrics_with_floor(truth, predicted, DEFAULT_MAPE_FLOOR)
}

pub fn compute_metrics_with_floor(truth: &[f64], predicted: &[f64], mape_floor: f64) -> Result<Metrics, MetricsError> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
    }
    if truth.is_empty() {
        return Err(MetricsError::Empty);
    }
    let n = truth.len() as f64;
    let mut sq = 0.0;
    let mut abs = 0.0;
    let mut pct = 0.0;
    let mut kept = 0usize;
    for (&y, &p) in truth.iter().zip(predicted) {
        let e = y - p;
        sq += e * e;
        abs += math::abs(e);
        if y > mape_floor {
            pct += math::abs(e / y);
            kept += 1;
        }
    }
    if kept == 0 {
        return Err(MetricsError::AllExcludedFromMAPE(mape_floor));
    }
    let mse = sq / n;
    Ok(Metrics {
        mse,
        rmse: math::sqrt(mse),
        mae: abs / n,
        mape_pct: 100.0 * pct / kept as f64,
        mape_excluded: truth.len() - kept,
    })
}

/// Mean and sample standard deviation (zero for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

pub fn summarize(values: &[f64]) -> Summary {
    let n = values.len();
    if n == 0 {
        return Summary { mean: f64::NAN, std: f64::NAN, n };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n < 2 {
        0.0
    } else {
        math::sqrt(values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64)
    };
    Summary { mean, std, n }
}

/// Percentile bootstrap interval for the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub lower: f64,
    pub upper: f64,
    pub level: f64,
}

impl ConfidenceInterval {
    pub fn excludes_zero(&self) -> bool {
        self.lower > 0.0 || self.upper < 0.0
    }
}

pub fn bootstrap_mean_ci(values: &[f64], resamples: usize, level: f64, seed: u64) -> Option<ConfidenceInterval> {
    if values.is_empty() || resamples == 0 || !(level > 0.0 && level < 1.0) {
        return None;
    }
    let n = values.len();
    let mut rng = seeded(seed, Stream::Bootstrap);
    let mut means: Vec<f64> = (0..resamples)
        .map(|_| (0..n).map(|_| values[rng.random_range(0..n)]).sum::<f64>() / n as f64)
        .collect();
    means.sort_by(f64::total_cmp);
    let tail = (1.0 - level) / 2.0;
    let at = |q: f64| means[(math::floor(q * (resamples - 1) as f64) as usize).min(resamples - 1)];
    Some(ConfidenceInterval {
        mean: values.iter().sum::<f64>() / n as f64,
        lower: at(tail),
        upper: at(1.0 - tail),
        level,
    })
}
