use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::metrics::percentile_linear;
use crate::rng::stream;

pub const BOOTSTRAP_RESAMPLES: usize = 10_000;
/// Seed used when the caller does not supply one.
pub const DEFAULT_BOOTSTRAP_SEED: u64 = 0x5EED_B007;

/// Neumaier-compensated sum in slice order.
pub fn stable_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

pub fn mean(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(stable_sum(values) / values.len() as f64)
}

/// Population (divide-by-n) standard deviation.
pub fn population_sd(values: &[f64]) -> Result<f64> {
    let m = mean(values)?;
    let sq: Vec<f64> = values.iter().map(|v| (v - m) * (v - m)).collect();
    Ok((stable_sum(&sq) / values.len() as f64).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiMethod {
    /// Percentile bootstrap of the mean.
    #[default]
    Bootstrap,
    /// Student-t interval.
    T,
}

impl FromStr for CiMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bootstrap" => Ok(CiMethod::Bootstrap),
            "t" => Ok(CiMethod::T),
            other => Err(Error::Parse(format!("CI method {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanCi {
    pub n: usize,
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

/// Mean with a two-sided confidence interval.
///
/// `T` uses `mean ± t(n−1, (1+confidence)/2) · sd / √n` with the population
/// standard deviation. `Bootstrap` resamples the values with replacement
/// [`BOOTSTRAP_RESAMPLES`] times from `seed` and takes linear-interpolation
/// percentiles of the resampled means. A single value gives the degenerate
/// interval `(v, v, v)`.
pub fn summarize_mean_ci(values: &[f64], confidence: f64, method: CiMethod, seed: u64) -> Result<MeanCi> {
    if !(confidence > 0.0 && confidence < 1.0) {
        return Err(Error::InvalidConfig(format!("confidence {confidence}")));
    }
    let m = mean(values)?;
    let n = values.len();
    if n == 1 {
        log::warn!("confidence interval of a single value is degenerate");
        return Ok(MeanCi { n, mean: m, lo: m, hi: m });
    }
    let alpha = 1.0 - confidence;
    let (lo, hi) = match method {
        CiMethod::T => {
            let sd = population_sd(values)?;
            let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
                .map_err(|e| Error::InvalidConfig(e.to_string()))?
                .inverse_cdf(1.0 - alpha / 2.0);
            let half = t * sd / (n as f64).sqrt();
            (m - half, m + half)
        }
        CiMethod::Bootstrap => {
            let mut rng = stream(seed, n as u64);
            let mut means = Vec::with_capacity(BOOTSTRAP_RESAMPLES);
            let mut sample = vec![0.0; n];
            for _ in 0..BOOTSTRAP_RESAMPLES {
                for s in sample.iter_mut() {
                    *s = values[rng.gen_range(0..n)];
                }
                means.push(stable_sum(&sample) / n as f64);
            }
            means.sort_by(|a, b| a.total_cmp(b));
            (
                percentile_linear(&means, alpha / 2.0),
                percentile_linear(&means, 1.0 - alpha / 2.0),
            )
        }
    };
    Ok(MeanCi { n, mean: m, lo, hi })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianIqr {
    pub n: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

/// Linear-interpolation quartiles.
pub fn summarize_median_iqr(values: &[f64]) -> Result<MedianIqr> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    Ok(MedianIqr {
        n: v.len(),
        median: percentile_linear(&v, 0.5),
        q1: percentile_linear(&v, 0.25),
        q3: percentile_linear(&v, 0.75),
    })
}
