//! Welch-averaged one-sided power spectral density.

use num_complex::Complex;
use rustfft::FftPlanner;

use crate::error::{require, Error, Result};

/// One-sided PSD in units²/Hz.
#[derive(Debug, Clone, PartialEq)]
pub struct Psd {
    pub freqs: Vec<f64>,
    pub density: Vec<f64>,
    pub segments: usize,
    pub bin_width: f64,
}

impl Psd {
    /// Integrated power over bins whose centre lies within `[lo, hi]`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        self.freqs
            .iter()
            .zip(&self.density)
            .filter(|(f, _)| **f >= lo && **f <= hi)
            .map(|(_, p)| p * self.bin_width)
            .sum()
    }

    pub fn band_bins(&self, lo: f64, hi: f64) -> usize {
        self.freqs.iter().filter(|f| **f >= lo && **f <= hi).count()
    }

    pub fn to_db(&self) -> Vec<f64> {
        self.density.iter().map(|p| 10.0 * p.max(1e-300).log10()).collect()
    }
}

fn hann(n: usize) -> Vec<f64> {
    // periodic form
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

/// Welch estimate with a Hann window of `segment_len` samples and 50% overlap.
/// Segments are mean-removed before windowing.
pub fn welch_psd(signal: &[f64], sample_rate: f64, segment_len: usize) -> Result<Psd> {
    require(sample_rate > 0.0, "sample_rate", sample_rate, "positive")?;
    require(segment_len >= 4, "segment_len", segment_len as f64, "at least 4")?;
    if signal.len() < segment_len {
        return Err(Error::TooShort(format!(
            "{} samples for a {segment_len}-sample segment",
            signal.len()
        )));
    }
    let step = segment_len / 2;
    let segments = (signal.len() - segment_len) / step + 1;
    let window = hann(segment_len);
    let window_power: f64 = window.iter().map(|w| w * w).sum();
    let fft = FftPlanner::new().plan_fft_forward(segment_len);
    let bins = segment_len / 2 + 1;
    let mut acc = vec![0.0; bins];
    let mut buf = vec![Complex::new(0.0, 0.0); segment_len];
    for s in 0..segments {
        let seg = &signal[s * step..s * step + segment_len];
        let mean = seg.iter().sum::<f64>() / segment_len as f64;
        for ((b, x), w) in buf.iter_mut().zip(seg).zip(&window) {
            *b = Complex::new((x - mean) * w, 0.0);
        }
        fft.process(&mut buf);
        for (a, b) in acc.iter_mut().zip(&buf) {
            *a += b.norm_sqr();
        }
    }
    let scale = 1.0 / (sample_rate * window_power * segments as f64);
    let density = acc
        .iter()
        .enumerate()
        .map(|(k, a)| {
            let one_sided = if k == 0 || (segment_len.is_multiple_of(2) && k == bins - 1) {
                1.0
            } else {
                2.0
            };
            a * scale * one_sided
        })
        .collect();
    let bin_width = sample_rate / segment_len as f64;
    Ok(Psd {
        freqs: (0..bins).map(|k| k as f64 * bin_width).collect(),
        density,
        segments,
        bin_width,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise;

    #[test]
    fn white_noise_level() {
        let fs = 1000.0;
        let sigma: f64 = 2.0;
        let x = noise::white(1 << 16, sigma, &mut noise::rng(3));
        let psd = welch_psd(&x, fs, 1024).unwrap();
        let expected = 2.0 * sigma * sigma / fs;
        let mid: Vec<f64> = psd.density[10..500].to_vec();
        let mean = mid.iter().sum::<f64>() / mid.len() as f64;
        assert!((mean / expected - 1.0).abs() < 0.03, "{mean} vs {expected}");
    }

    #[test]
    fn tone_power_is_conserved() {
        let fs = 1000.0;
        let a = 3.0;
        let x: Vec<f64> = (0..8192)
            .map(|i| a * (2.0 * std::f64::consts::PI * 125.0 * i as f64 / fs).cos())
            .collect();
        let psd = welch_psd(&x, fs, 512).unwrap();
        let p = psd.band_power(115.0, 135.0);
        assert!((p / (a * a / 2.0) - 1.0).abs() < 0.01, "{p}");
    }

    #[test]
    fn too_short() {
        assert!(matches!(welch_psd(&[0.0; 10], 1.0, 16), Err(Error::TooShort(_))));
    }
}
