//! Small statistics helpers: sample means, batch means for correlated time
//! series, and the jackknife.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
    pub n: usize,
}

impl Estimate {
    pub fn exact(value: f64) -> Self {
        Estimate {
            mean: value,
            stderr: 0.0,
            n: 1,
        }
    }

    /// True if `|mean - target| ≤ k·stderr + slack`.
    pub fn agrees_with(&self, target: f64, k: f64, slack: f64) -> bool {
        (self.mean - target).abs() <= k * self.stderr + slack
    }
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

/// Mean with the i.i.d. standard error `s/√n`.
pub fn mean_estimate(xs: &[f64]) -> Result<Estimate> {
    if xs.is_empty() {
        return Err(Error::TooFewSamples { got: 0, need: 1 });
    }
    Ok(Estimate {
        mean: mean(xs),
        stderr: (variance(xs) / xs.len() as f64).sqrt(),
        n: xs.len(),
    })
}

/// Batch-means estimate for a correlated series. Trailing samples that do
/// not fill a batch are dropped from the error estimate but kept in the mean.
pub fn batch_means(series: &[f64], n_batches: usize) -> Result<Estimate> {
    if n_batches < 2 || series.len() < n_batches {
        return Err(Error::TooFewSamples {
            got: series.len(),
            need: n_batches.max(2),
        });
    }
    let size = series.len() / n_batches;
    let batches: Vec<f64> = series
        .chunks_exact(size)
        .take(n_batches)
        .map(mean)
        .collect();
    Ok(Estimate {
        mean: mean(series),
        stderr: (variance(&batches) / n_batches as f64).sqrt(),
        n: n_batches,
    })
}

/// Delete-one jackknife for a statistic of the rows.
pub fn jackknife<T: Clone>(rows: &[T], statistic: impl Fn(&[T]) -> f64) -> Result<Estimate> {
    let n = rows.len();
    if n < 2 {
        return Err(Error::TooFewSamples { got: n, need: 2 });
    }
    let full = statistic(rows);
    let mut buf: Vec<T> = Vec::with_capacity(n - 1);
    let leave_out: Vec<f64> = (0..n)
        .map(|i| {
            buf.clear();
            buf.extend_from_slice(&rows[..i]);
            buf.extend_from_slice(&rows[i + 1..]);
            statistic(&buf)
        })
        .collect();
    let m = mean(&leave_out);
    let var = leave_out.iter().map(|x| (x - m).powi(2)).sum::<f64>() * (n - 1) as f64 / n as f64;
    Ok(Estimate {
        mean: full,
        stderr: var.sqrt(),
        n,
    })
}

/// Jackknife estimate of the variance of a sample, in `O(n)`.
pub fn jackknife_variance(xs: &[f64]) -> Result<Estimate> {
    let n = xs.len();
    if n < 3 {
        return Err(Error::TooFewSamples { got: n, need: 3 });
    }
    let nf = n as f64;
    let s1: f64 = xs.iter().sum();
    let s2: f64 = xs.iter().map(|x| x * x).sum();
    let loo: Vec<f64> = xs
        .iter()
        .map(|x| {
            let a = s1 - x;
            let b = s2 - x * x;
            (b - a * a / (nf - 1.0)) / (nf - 2.0)
        })
        .collect();
    let m = mean(&loo);
    let var = loo.iter().map(|v| (v - m).powi(2)).sum::<f64>() * (nf - 1.0) / nf;
    Ok(Estimate {
        mean: variance(xs),
        stderr: var.sqrt(),
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_series() {
        let e = batch_means(&[2.5; 100], 20).unwrap();
        assert_eq!(e.mean, 2.5);
        assert_eq!(e.stderr, 0.0);
        assert!(batch_means(&[1.0; 10], 20).is_err());
    }

    #[test]
    fn fast_jackknife_matches_generic() {
        let xs: Vec<f64> = (0..40).map(|i| ((i * 7919) % 97) as f64 / 10.0).collect();
        let a = jackknife_variance(&xs).unwrap();
        let b = jackknife(&xs, variance).unwrap();
        assert!((a.mean - b.mean).abs() < 1e-12);
        assert!((a.stderr - b.stderr).abs() < 1e-9);
    }

    #[test]
    fn jackknife_of_mean_is_standard_error() {
        let xs: Vec<f64> = (0..30).map(|i| (i as f64).sqrt()).collect();
        let a = jackknife(&xs, mean).unwrap();
        let b = mean_estimate(&xs).unwrap();
        assert!((a.stderr - b.stderr).abs() < 1e-12);
    }
}
