//! Ensemble summaries, least squares, and the per-sample random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Random stream for one sample. Every sample gets its own ChaCha stream so
/// results do not depend on how samples are spread over workers.
pub fn sample_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Runs `f(i)` for `i in 0..n` on `workers` threads and returns results in
/// index order.
pub fn par_collect<T, F>(n: usize, workers: usize, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(usize) -> T + Sync + Send,
{
    if workers <= 1 || n < 2 {
        return (0..n).map(f).collect();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(|| (0..n).into_par_iter().map(&f).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running serially");
            (0..n).map(f).collect()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EnsembleSummary {
    pub n: usize,
    pub mean: f64,
    pub variance: f64,
    pub std_error: f64,
    pub cv: f64,
    pub n_censored: usize,
    /// ln(mean), kept for slope fits against a scale parameter.
    pub ln_mean: f64,
    pub seed: u64,
    pub workers: usize,
}

impl EnsembleSummary {
    /// Summarizes the uncensored `values`. Variance uses the `n - 1` divisor.
    pub fn from_values(values: &[f64], n_censored: usize, seed: u64, workers: usize) -> Self {
        let n = values.len();
        let mean = if n == 0 {
            f64::NAN
        } else {
            values.iter().sum::<f64>() / n as f64
        };
        let variance = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        let std_error = (variance / n as f64).sqrt();
        let cv = if mean != 0.0 { std_error / mean } else { f64::NAN };
        Self {
            n,
            mean,
            variance,
            std_error,
            cv,
            n_censored,
            ln_mean: mean.ln(),
            seed,
            workers,
        }
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
    /// Standard error of the slope from the residual scatter (0 for two points).
    pub slope_se: f64,
}

/// Ordinary least squares line through `(xs, ys)`.
pub fn fit_line(xs: &[f64], ys: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() {
        return Err(Error::invalid("ys", "length differs from xs"));
    }
    let n = xs.len();
    if n < 2 {
        return Err(Error::invalid("xs", "need at least two points"));
    }
    let nf = n as f64;
    let mx = xs.iter().sum::<f64>() / nf;
    let my = ys.iter().sum::<f64>() / nf;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx <= f64::EPSILON * xs.iter().map(|x| x * x).sum::<f64>().max(f64::MIN_POSITIVE) {
        return Err(Error::invalid("xs", "degenerate abscissae"));
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (y - intercept - slope * x).powi(2))
        .sum();
    let r2 = if syy == 0.0 { 1.0 } else { 1.0 - sse / syy };
    let slope_se = if n > 2 {
        (sse / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit {
        slope,
        intercept,
        r2,
        slope_se,
    })
}

/// Weighted least squares with weights `1 / se^2`; returns the fit and the
/// slope standard error implied by the supplied errors.
pub fn fit_line_weighted(xs: &[f64], ys: &[f64], se: &[f64]) -> Result<LineFit> {
    if xs.len() != ys.len() || xs.len() != se.len() || xs.len() < 2 {
        return Err(Error::invalid("xs", "need matching arrays of at least two points"));
    }
    let w: Vec<f64> = se.iter().map(|s| 1.0 / (s * s)).collect();
    let sw: f64 = w.iter().sum();
    let mx = xs.iter().zip(&w).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&w).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&w).map(|(x, w)| w * (x - mx).powi(2)).sum();
    if sxx <= 0.0 || !sxx.is_finite() {
        return Err(Error::invalid("xs", "degenerate abscissae"));
    }
    let sxy: f64 = xs
        .iter()
        .zip(ys)
        .zip(&w)
        .map(|((x, y), w)| w * (x - mx) * (y - my))
        .sum();
    let syy: f64 = ys.iter().zip(&w).map(|(y, w)| w * (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = xs
        .iter()
        .zip(ys)
        .zip(&w)
        .map(|((x, y), w)| w * (y - intercept - slope * x).powi(2))
        .sum();
    Ok(LineFit {
        slope,
        intercept,
        r2: if syy == 0.0 { 1.0 } else { 1.0 - sse / syy },
        slope_se: (1.0 / sxx).sqrt(),
    })
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let xs = [1.0, 2.0, 3.0, 4.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x| 0.5 * x + 0.59).collect();
        let fit = fit_line(&xs, &ys).unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-14);
        assert!((fit.intercept - 0.59).abs() < 1e-14);
        assert!((fit.r2 - 1.0).abs() < 1e-14);
    }

    #[test]
    fn constant_and_two_point() {
        let fit = fit_line(&[0.0, 1.0, 2.0], &[3.0, 3.0, 3.0]).unwrap();
        assert_eq!(fit.slope, 0.0);
        let fit = fit_line(&[1.0, 3.0], &[2.0, 6.0]).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-15 && fit.intercept.abs() < 1e-15);
        assert!(fit_line(&[2.0, 2.0], &[1.0, 5.0]).is_err());
        assert!(fit_line(&[2.0], &[1.0]).is_err());
    }

    #[test]
    fn summary_fields() {
        let s = EnsembleSummary::from_values(&[1.0, 2.0, 3.0, 4.0], 1, 7, 1);
        assert_eq!(s.n, 4);
        assert!((s.mean - 2.5).abs() < 1e-15);
        assert!((s.variance - 5.0 / 3.0).abs() < 1e-15);
        assert!((s.std_error - (s.variance / 4.0).sqrt()).abs() < 1e-15);
        assert!((s.cv - s.std_error / s.mean).abs() < 1e-15);
    }

    #[test]
    fn normal_tail() {
        let v = normal_cdf(-1.2815515655446004);
        assert!((v - 0.1).abs() < 1e-15, "{v:e}");
        assert!((normal_cdf(0.0) - 0.5).abs() < 1e-16);
    }

    #[test]
    fn streams_are_distinct_and_repeatable() {
        use rand::Rng;
        let a: u64 = sample_rng(1, 0).random();
        let b: u64 = sample_rng(1, 1).random();
        let c: u64 = sample_rng(1, 0).random();
        assert_ne!(a, b);
        assert_eq!(a, c);
    }

    #[test]
    fn par_collect_preserves_order() {
        let v = par_collect(100, 3, |i| i * i);
        assert_eq!(v, (0..100).map(|i| i * i).collect::<Vec<_>>());
    }
}
