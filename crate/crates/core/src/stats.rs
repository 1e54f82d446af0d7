//! Least-squares fits and Monte Carlo summaries.

use serde::Serialize;

use crate::error::{Result, SpdeError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LineFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero when fewer than three points.
    pub stderr: f64,
}

/// Ordinary least squares `y ≈ slope·x + intercept`.
pub fn ols(x: &[f64], y: &[f64]) -> Result<LineFit> {
    let n = x.len();
    if n < 2 || y.len() != n {
        return Err(SpdeError::InvalidArgument(format!(
            "least squares needs >= 2 paired points, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let nf = n as f64;
    let mx = x.iter().sum::<f64>() / nf;
    let my = y.iter().sum::<f64>() / nf;
    let sxx: f64 = x.iter().map(|v| (v - mx) * (v - mx)).sum();
    if !(sxx > 0.0) {
        return Err(SpdeError::InvalidArgument("abscissae are all equal".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let stderr = if n > 2 {
        let ssr: f64 = x
            .iter()
            .zip(y)
            .map(|(a, b)| {
                let r = b - (slope * a + intercept);
                r * r
            })
            .sum();
        (ssr / (nf - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    Ok(LineFit { slope, intercept, stderr })
}

/// Convergence order from `(resolution, error)` pairs: OLS in log-log
/// coordinates.
pub fn rate_fit(samples: &[(f64, f64)]) -> Result<LineFit> {
    if samples.len() < 3 {
        return Err(SpdeError::InvalidArgument(format!(
            "rate fit needs >= 3 samples, got {}",
            samples.len()
        )));
    }
    if let Some(&(r, e)) = samples.iter().find(|(r, e)| !(*r > 0.0) || !(*e > 0.0)) {
        return Err(SpdeError::InvalidArgument(format!(
            "rate fit needs positive resolutions and errors, got ({r}, {e})"
        )));
    }
    let x: Vec<f64> = samples.iter().map(|(r, _)| r.ln()).collect();
    let y: Vec<f64> = samples.iter().map(|(_, e)| e.ln()).collect();
    ols(&x, &y)
}

/// Sample mean and standard error of the mean.
pub fn mean_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let nf = n as f64;
    let mean = values.iter().sum::<f64>() / nf;
    if n == 1 {
        return (mean, f64::NAN);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (nf - 1.0);
    (mean, (var / nf).sqrt())
}
