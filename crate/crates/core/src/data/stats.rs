//! Kolmogorov-Smirnov goodness-of-fit against a uniform distribution, used
//! to audit drawn SNR values.

use crate::error::{Error, Result};

/// One-sample KS statistic against Uniform(lo, hi).
pub fn ks_statistic_uniform(samples: &[f64], lo: f64, hi: f64) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::InvalidArgument("KS test needs samples".into()));
    }
    if !(hi > lo) {
        return Err(Error::InvalidArgument("KS bounds must satisfy lo < hi".into()));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len() as f64;
    let mut d = 0.0f64;
    for (i, &x) in sorted.iter().enumerate() {
        let cdf = ((x - lo) / (hi - lo)).clamp(0.0, 1.0);
        let above = (i as f64 + 1.0) / n - cdf;
        let below = cdf - i as f64 / n;
        d = d.max(above).max(below);
    }
    Ok(d)
}

/// Asymptotic two-sided p-value for the KS statistic (Kolmogorov series with
/// the standard small-sample correction to the effective sample size).
pub fn ks_p_value(d: f64, n: usize) -> f64 {
    if d <= 0.0 {
        return 1.0;
    }
    let sqrt_n = (n as f64).sqrt();
    let lambda = (sqrt_n + 0.12 + 0.11 / sqrt_n) * d;
    let mut p = 0.0f64;
    for k in 1..=100 {
        let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
        let term = sign * (-2.0 * (k as f64) * (k as f64) * lambda * lambda).exp();
        p += term;
        if term.abs() < 1e-12 {
            break;
        }
    }
    (2.0 * p).clamp(0.0, 1.0)
}

/// Convenience wrapper: p-value that `samples` ~ Uniform(lo, hi).
pub fn ks_uniform_p(samples: &[f64], lo: f64, hi: f64) -> Result<f64> {
    let d = ks_statistic_uniform(samples, lo, hi)?;
    Ok(ks_p_value(d, samples.len()))
}
