use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::TimeSeries;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllanResult {
    pub taus: Vec<f64>,
    pub sigmas: Vec<f64>,
    pub n_samples_per_tau: Vec<usize>,
    pub overlapping: bool,
}

impl AllanResult {
    pub fn at(&self, tau: f64) -> Option<f64> {
        self.taus
            .iter()
            .position(|t| (t - tau).abs() <= 1e-9 * tau)
            .map(|i| self.sigmas[i])
    }
}

fn averaging_factor(tau: f64, dt: f64) -> Result<usize> {
    let m = tau / dt;
    let r = m.round();
    if r < 1.0 || (m - r).abs() > 1e-9 * m.max(1.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            value: tau,
            requirement: "a positive integer multiple of the gate",
        });
    }
    Ok(r as usize)
}

/// Non-overlapping Allan deviation of the fractional-frequency series `y`.
pub fn allan_deviation(y: &TimeSeries, taus: &[f64]) -> Result<AllanResult> {
    allan_deviation_with(y, taus, false)
}

/// Allan deviation; `overlapping` selects the fully overlapping estimator.
pub fn allan_deviation_with(y: &TimeSeries, taus: &[f64], overlapping: bool) -> Result<AllanResult> {
    let v = y.values();
    let n = v.len();
    let mut out = AllanResult {
        taus: Vec::with_capacity(taus.len()),
        sigmas: Vec::with_capacity(taus.len()),
        n_samples_per_tau: Vec::with_capacity(taus.len()),
        overlapping,
    };
    let mut cum = Vec::with_capacity(n + 1);
    cum.push(0.0);
    for x in v {
        cum.push(cum.last().copied().unwrap_or(0.0) + x);
    }
    let mut sorted: Vec<f64> = taus.to_vec();
    sorted.sort_by(f64::total_cmp);
    sorted.dedup();
    for &tau in &sorted {
        let m = averaging_factor(tau, y.dt())?;
        let blocks = n / m;
        if blocks < 3 {
            return Err(Error::InsufficientData(format!(
                "tau = {tau} s leaves {blocks} averages of {n} samples"
            )));
        }
        let mf = m as f64;
        let (sum, terms) = if overlapping {
            let terms = n - 2 * m + 1;
            let s: f64 = (0..terms)
                .map(|j| {
                    let a = (cum[j + m] - cum[j]) / mf;
                    let b = (cum[j + 2 * m] - cum[j + m]) / mf;
                    (b - a) * (b - a)
                })
                .sum();
            (s, terms)
        } else {
            let means: Vec<f64> = (0..blocks).map(|k| block_mean(&v[k * m..(k + 1) * m])).collect();
            let s: f64 = means.windows(2).map(|w| (w[1] - w[0]) * (w[1] - w[0])).sum();
            (s, blocks - 1)
        };
        out.taus.push(tau);
        out.sigmas.push((sum / (2.0 * terms as f64)).sqrt());
        out.n_samples_per_tau.push(blocks);
    }
    Ok(out)
}

fn block_mean(x: &[f64]) -> f64 {
    x.iter().sum::<f64>() / x.len() as f64
}

/// Reference implementation straight from the defining sum, for checking the
/// fast estimator on short records.
pub fn allan_deviation_direct(y: &[f64], m: usize) -> f64 {
    let blocks = y.len() / m;
    let mut total = 0.0;
    for k in 0..blocks - 1 {
        let mut a = 0.0;
        let mut b = 0.0;
        for i in 0..m {
            a += y[k * m + i];
            b += y[(k + 1) * m + i];
        }
        let d = b / m as f64 - a / m as f64;
        total += d * d;
    }
    (total / (2.0 * (blocks - 1) as f64)).sqrt()
}

/// Powers of two times the gate up to a third of the record.
pub fn octave_taus(gate: f64, n: usize) -> Vec<f64> {
    let mut out = Vec::new();
    let mut m = 1usize;
    while n / m >= 3 {
        out.push(m as f64 * gate);
        m *= 2;
    }
    out
}

/// Slope of log sigma against log tau over `[lo, hi]`. Each point is
/// weighted by its number of averaged differences, the inverse of the
/// variance of log sigma.
pub fn log_slope(result: &AllanResult, lo: f64, hi: f64) -> Result<f64> {
    let pts: Vec<(f64, f64, f64)> = result
        .taus
        .iter()
        .zip(&result.sigmas)
        .zip(&result.n_samples_per_tau)
        .filter(|((t, s), _)| **t >= lo * (1.0 - 1e-9) && **t <= hi * (1.0 + 1e-9) && **s > 0.0)
        .map(|((t, s), m)| (t.ln(), s.ln(), (*m - 1) as f64))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientData(format!("{} taus in [{lo}, {hi}]", pts.len())));
    }
    let w: f64 = pts.iter().map(|p| p.2).sum();
    let mx = pts.iter().map(|p| p.2 * p.0).sum::<f64>() / w;
    let my = pts.iter().map(|p| p.2 * p.1).sum::<f64>() / w;
    let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
    Ok(sxy / sxx)
}
