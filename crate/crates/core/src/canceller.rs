//! Narrow-band adaptive noise cancelling with a two-weight LMS notch.
//!
//! The filter subtracts an adaptive in-phase/quadrature estimate of the
//! disturbance at the reference frequency. With a deterministic reference the
//! closed loop is linear and time invariant, so [`notch_transfer`] gives its
//! exact response. A small weight leakage bounds the centre depth.

use std::f64::consts::{PI, TAU};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::freq::{SeriesKind, TimeSeries};
use crate::noise;
use crate::spectral::welch_psd;

/// Weights beyond this magnitude abort the run.
pub const DIVERGENCE_LIMIT: f64 = 1e6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LmsNotchConfig {
    pub ref_freq: f64,
    /// Adaptation step per sample.
    pub mu: f64,
    /// Weight leakage per sample; zero gives an infinitely deep notch.
    pub leakage: f64,
    /// Saturation of the cancelling signal, `None` for an ideal actuator.
    pub output_clamp: Option<f64>,
}

impl Default for LmsNotchConfig {
    fn default() -> Self {
        Self {
            ref_freq: 125e3,
            mu: mu_for_fwhm(1e3, 1e6),
            leakage: 0.0,
            output_clamp: None,
        }
    }
}

/// Step size giving a notch of full width `fwhm` at sample rate `sample_rate`.
pub fn mu_for_fwhm(fwhm: f64, sample_rate: f64) -> f64 {
    PI * fwhm / sample_rate
}

/// Leakage that limits the centre rejection to `depth_db`.
pub fn leakage_for_depth(mu: f64, depth_db: f64) -> f64 {
    mu / (10f64.powf(depth_db / 20.0) - 1.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LmsNotchState {
    pub w_cos: f64,
    pub w_sin: f64,
    pub mu: f64,
    pub ref_freq: f64,
    pub phase_accumulator: f64,
    leakage: f64,
    clamp: Option<f64>,
    phase_step: f64,
    steps: usize,
}

impl LmsNotchState {
    pub fn new(cfg: &LmsNotchConfig, sample_rate: f64) -> Result<Self> {
        require(cfg.mu > 0.0 && cfg.mu < 1.0, "mu", cfg.mu, "in (0, 1)")?;
        require((0.0..1.0).contains(&cfg.leakage), "leakage", cfg.leakage, "in [0, 1)")?;
        require(cfg.ref_freq > 0.0, "ref_freq", cfg.ref_freq, "> 0")?;
        if let Some(c) = cfg.output_clamp {
            require(c > 0.0, "output_clamp", c, "> 0")?;
        }
        if sample_rate <= 4.0 * cfg.ref_freq {
            return Err(Error::Undersampled {
                rate: sample_rate,
                freq: cfg.ref_freq,
            });
        }
        Ok(Self {
            w_cos: 0.0,
            w_sin: 0.0,
            mu: cfg.mu,
            ref_freq: cfg.ref_freq,
            phase_accumulator: 0.0,
            leakage: cfg.leakage,
            clamp: cfg.output_clamp,
            phase_step: TAU * cfg.ref_freq / sample_rate,
            steps: 0,
        })
    }

    /// One sample in place; returns the cancelled output.
    pub fn step(&mut self, input: f64) -> Result<f64> {
        let (s, c) = self.phase_accumulator.sin_cos();
        let mut estimate = self.w_cos * c + self.w_sin * s;
        if let Some(limit) = self.clamp {
            estimate = estimate.clamp(-limit, limit);
        }
        let output = input - estimate;
        let keep = 1.0 - self.leakage;
        self.w_cos = keep * self.w_cos + 2.0 * self.mu * output * c;
        self.w_sin = keep * self.w_sin + 2.0 * self.mu * output * s;
        self.phase_accumulator = (self.phase_accumulator + self.phase_step) % TAU;
        self.steps += 1;
        if !(self.w_cos.abs() <= DIVERGENCE_LIMIT && self.w_sin.abs() <= DIVERGENCE_LIMIT) {
            return Err(Error::Diverged(self.steps));
        }
        Ok(output)
    }

    pub fn weight_magnitude(&self) -> f64 {
        self.w_cos.hypot(self.w_sin)
    }
}

pub fn lms_step(mut state: LmsNotchState, input: f64) -> Result<(f64, LmsNotchState)> {
    let out = state.step(input)?;
    Ok((out, state))
}

/// Run a whole record through a fresh notch.
pub fn cancel(input: &TimeSeries, cfg: &LmsNotchConfig) -> Result<TimeSeries> {
    let mut state = LmsNotchState::new(cfg, input.sample_rate())?;
    let out = input
        .values()
        .iter()
        .map(|&x| state.step(x))
        .collect::<Result<Vec<_>>>()?;
    TimeSeries::new(out, input.dt(), input.kind())
}

/// Closed-loop input-to-output response at frequency `freq`.
pub fn notch_transfer(cfg: &LmsNotchConfig, sample_rate: f64, freq: f64) -> Complex<f64> {
    let w0 = TAU * cfg.ref_freq / sample_rate;
    let z = Complex::from_polar(1.0, TAU * freq / sample_rate);
    let a = 1.0 - cfg.leakage;
    let d = z * z - 2.0 * a * z * w0.cos() + a * a;
    d / (d + cfg.mu * (2.0 * z * w0.cos() - 2.0 * a))
}

/// Samples after which the notch has settled.
pub fn settling_samples(cfg: &LmsNotchConfig) -> usize {
    (10.0 / (cfg.mu + cfg.leakage)).ceil() as usize
}

fn welch_segment(len: usize, sample_rate: f64, bandwidth: f64) -> Result<usize> {
    let duration = len as f64 / sample_rate;
    if bandwidth <= 2.0 / duration {
        return Err(Error::TooShort(format!(
            "{duration} s record cannot resolve a {bandwidth} Hz band"
        )));
    }
    let wanted = (4.0 * sample_rate / bandwidth).ceil() as usize;
    let seg = wanted.min(2 * len / 9);
    if sample_rate / seg as f64 > bandwidth {
        return Err(Error::TooShort(format!(
            "{len} samples give fewer than 8 segments for a {bandwidth} Hz band"
        )));
    }
    Ok(seg)
}

/// Band power around `ref_freq`, Hann/Welch with at least 8 half-overlapping
/// segments. Returns (input power, output power).
pub fn band_powers(input: &TimeSeries, output: &TimeSeries, ref_freq: f64, bandwidth: f64) -> Result<(f64, f64)> {
    if input.len() != output.len() {
        return Err(Error::LengthMismatch(input.len(), output.len()));
    }
    require(bandwidth > 0.0, "bandwidth", bandwidth, "> 0")?;
    let fs = input.sample_rate();
    let seg = welch_segment(input.len(), fs, bandwidth)?;
    let lo = ref_freq - bandwidth / 2.0;
    let hi = ref_freq + bandwidth / 2.0;
    let pin = welch_psd(input.values(), fs, seg)?.band_power(lo, hi);
    let pout = welch_psd(output.values(), fs, seg)?.band_power(lo, hi);
    Ok((pin, pout))
}

/// Rejection in dB: input over output band power around `ref_freq`.
pub fn notch_depth(input: &TimeSeries, output: &TimeSeries, ref_freq: f64, bandwidth: f64) -> Result<f64> {
    let (pin, pout) = band_powers(input, output, ref_freq, bandwidth)?;
    if pout <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (pin / pout).log10())
}

/// Amplitude and phase of the component at `freq` (projection onto cos/sin
/// over a whole number of periods from the end of the record).
pub fn tone_phasor(series: &TimeSeries, freq: f64, skip: usize) -> Result<Complex<f64>> {
    let fs = series.sample_rate();
    let per = fs / freq;
    let avail = series.len().saturating_sub(skip);
    let count = ((avail as f64 / per).floor() * per).round() as usize;
    if count == 0 {
        return Err(Error::TooShort(format!("{avail} samples after settling")));
    }
    let start = series.len() - count;
    let mut acc = Complex::new(0.0, 0.0);
    for (i, &x) in series.values()[start..].iter().enumerate() {
        let arg = TAU * freq * (start + i) as f64 / fs;
        acc += x * Complex::from_polar(1.0, -arg);
    }
    Ok(acc * (2.0 / count as f64))
}

/// Technical intensity noise at the pump modulation frequency over an
/// electronic floor. The notch sees only the technical noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IntensityNoiseScenario {
    pub sample_rate: f64,
    pub ref_freq: f64,
    pub notch_fwhm: f64,
    /// Target closed-loop rejection, dB.
    pub rejection_db: f64,
    /// Target residual above the floor, dB.
    pub residual_above_floor_db: f64,
    /// Electronic floor, units²/Hz.
    pub floor_psd: f64,
    /// Measurement band around the reference, Hz.
    pub band: f64,
    pub samples: usize,
}

impl Default for IntensityNoiseScenario {
    fn default() -> Self {
        Self {
            sample_rate: 1e6,
            ref_freq: 125e3,
            notch_fwhm: 1e3,
            rejection_db: 27.0,
            residual_above_floor_db: 9.0,
            floor_psd: 1e-12,
            band: 20.0,
            samples: 1 << 22,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IntensityNoiseOutcome {
    pub notch: LmsNotchConfig,
    pub technical_psd: f64,
    pub rejection_db: f64,
    pub residual_above_floor_db: f64,
    pub input: TimeSeries,
    pub output: TimeSeries,
}

impl IntensityNoiseScenario {
    /// Technical-noise PSD and in-band mean |H|^2 demanded by the two targets.
    pub fn targets(&self) -> Result<(f64, f64)> {
        let rej = 10f64.powf(self.rejection_db / 10.0);
        let above = 10f64.powf(self.residual_above_floor_db / 10.0);
        require(
            rej > above,
            "rejection_db",
            self.rejection_db,
            "> residual_above_floor_db",
        )?;
        let technical = self.floor_psd * (rej * above - 1.0);
        let ratio = (above - 1.0) * self.floor_psd / technical;
        Ok((technical, ratio))
    }

    /// Expected Welch band power of `|H|^2` for white input, normalised to a
    /// flat response: the Hann spectral kernel is folded into each bin.
    fn band_mean_response(&self, cfg: &LmsNotchConfig) -> f64 {
        let seg = match welch_segment(self.samples, self.sample_rate, self.band) {
            Ok(seg) => seg,
            Err(_) => return f64::INFINITY,
        };
        let bin = self.sample_rate / seg as f64;
        let lo = self.ref_freq - self.band / 2.0;
        let hi = self.ref_freq + self.band / 2.0;
        let first = (lo / bin).ceil() as i64;
        let last = (hi / bin).floor() as i64;
        let kernel = |nu: f64| {
            if nu.abs() < 1e-9 {
                return 1.0;
            }
            if (nu.abs() - 1.0).abs() < 1e-9 {
                return 0.25;
            }
            let sinc = (PI * nu).sin() / (PI * nu);
            (sinc / (1.0 - nu * nu)).powi(2)
        };
        let step = 0.02;
        let offsets: Vec<f64> = (-400..=400).map(|i| i as f64 * step).collect();
        let norm: f64 = offsets.iter().map(|&u| kernel(u)).sum();
        let mut total = 0.0;
        for k in first..=last {
            let fk = k as f64 * bin;
            total += offsets
                .iter()
                .map(|&u| kernel(u) * notch_transfer(cfg, self.sample_rate, fk + u * bin).norm_sqr())
                .sum::<f64>()
                / norm;
        }
        total / (last - first + 1) as f64
    }

    /// Notch with the leakage chosen so the in-band response meets the target.
    pub fn calibrated_notch(&self) -> Result<LmsNotchConfig> {
        let (_, target) = self.targets()?;
        let base = LmsNotchConfig {
            ref_freq: self.ref_freq,
            mu: mu_for_fwhm(self.notch_fwhm, self.sample_rate),
            leakage: 0.0,
            output_clamp: None,
        };
        if self.band_mean_response(&base) > target {
            return Err(Error::InvalidParameter {
                name: "band",
                value: self.band,
                requirement: "narrow enough for the notch to reach the target depth",
            });
        }
        let (mut lo, mut hi) = (0.0, base.mu);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            let r = self.band_mean_response(&LmsNotchConfig { leakage: mid, ..base });
            if r < target {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(LmsNotchConfig {
            leakage: 0.5 * (lo + hi),
            ..base
        })
    }

    pub fn run(&self, seed: u64) -> Result<IntensityNoiseOutcome> {
        require(self.sample_rate > 0.0, "sample_rate", self.sample_rate, "> 0")?;
        require(self.floor_psd > 0.0, "floor_psd", self.floor_psd, "> 0")?;
        let (technical_psd, _) = self.targets()?;
        let notch = self.calibrated_notch()?;
        let skip = settling_samples(&notch);
        let n = self.samples + skip;
        let fs = self.sample_rate;
        let technical = noise::white_with_psd(n, technical_psd, fs, &mut noise::rng(noise::derive_seed(seed, 1)));
        let floor_in = noise::white_with_psd(n, self.floor_psd, fs, &mut noise::rng(noise::derive_seed(seed, 2)));
        let floor_out = noise::white_with_psd(n, self.floor_psd, fs, &mut noise::rng(noise::derive_seed(seed, 3)));
        let mut state = LmsNotchState::new(&notch, fs)?;
        let mut input = Vec::with_capacity(self.samples);
        let mut output = Vec::with_capacity(self.samples);
        for i in 0..n {
            let residual = state.step(technical[i])?;
            if i >= skip {
                input.push(technical[i] + floor_in[i]);
                output.push(residual + floor_out[i]);
            }
        }
        let input = TimeSeries::new(input, 1.0 / fs, SeriesKind::Detector)?;
        let output = TimeSeries::new(output, 1.0 / fs, SeriesKind::Detector)?;
        let (pin, pout) = band_powers(&input, &output, self.ref_freq, self.band)?;
        let seg = welch_segment(input.len(), fs, self.band)?;
        let bins = welch_psd(&output.values()[..seg], fs, seg)?
            .band_bins(self.ref_freq - self.band / 2.0, self.ref_freq + self.band / 2.0);
        let floor_power = self.floor_psd * bins as f64 * fs / seg as f64;
        Ok(IntensityNoiseOutcome {
            notch,
            technical_psd,
            rejection_db: 10.0 * (pin / pout).log10(),
            residual_above_floor_db: 10.0 * (pout / floor_power).log10(),
            input,
            output,
        })
    }
}

/// Probe RAM tone at the FM frequency cancelled by the notch.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RamCancelScenario {
    pub sample_rate: f64,
    pub ref_freq: f64,
    pub notch_fwhm: f64,
    /// Centre depth set through the leakage, dB.
    pub depth_db: f64,
    pub ram_depth: f64,
    pub ram_phase: f64,
    pub detector_noise_rms: f64,
    pub band: f64,
    pub samples: usize,
}

impl Default for RamCancelScenario {
    fn default() -> Self {
        Self {
            sample_rate: 20e6,
            ref_freq: 2.5e6,
            notch_fwhm: 10e3,
            depth_db: 45.0,
            ram_depth: 1e-3,
            ram_phase: 0.0,
            detector_noise_rms: 3e-6,
            band: 2e3,
            samples: 1 << 18,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RamCancelOutcome {
    pub notch: LmsNotchConfig,
    pub depth_db: f64,
    /// Residual RAM phasor after the canceller (depth, phase).
    pub residual: Complex<f64>,
    pub input: TimeSeries,
    pub output: TimeSeries,
}

impl RamCancelScenario {
    pub fn notch(&self) -> LmsNotchConfig {
        let mu = mu_for_fwhm(self.notch_fwhm, self.sample_rate);
        LmsNotchConfig {
            ref_freq: self.ref_freq,
            mu,
            leakage: leakage_for_depth(mu, self.depth_db),
            output_clamp: None,
        }
    }

    pub fn run(&self, seed: u64) -> Result<RamCancelOutcome> {
        require(self.ram_depth > 0.0, "ram_depth", self.ram_depth, "> 0")?;
        let notch = self.notch();
        let skip = settling_samples(&notch);
        let n = self.samples + skip;
        let fs = self.sample_rate;
        let det = noise::white(n, self.detector_noise_rms, &mut noise::rng(noise::derive_seed(seed, 4)));
        let mut state = LmsNotchState::new(&notch, fs)?;
        let mut input = Vec::with_capacity(self.samples);
        let mut output = Vec::with_capacity(self.samples);
        for (i, d) in det.iter().enumerate() {
            let arg = TAU * self.ref_freq * i as f64 / fs + self.ram_phase;
            let x = self.ram_depth * arg.cos() + d;
            let y = state.step(x)?;
            if i >= skip {
                input.push(x);
                output.push(y);
            }
        }
        let input = TimeSeries::new(input, 1.0 / fs, SeriesKind::Detector)?;
        let output = TimeSeries::new(output, 1.0 / fs, SeriesKind::Detector)?;
        let depth_db = notch_depth(&input, &output, self.ref_freq, self.band)?;
        let before = tone_phasor(&input, self.ref_freq, 0)?;
        let after = tone_phasor(&output, self.ref_freq, 0)?;
        // re-express relative to the original RAM phase
        let residual = Complex::from_polar(after.norm(), self.ram_phase + (after / before).arg());
        Ok(RamCancelOutcome {
            notch,
            depth_db,
            residual,
            input,
            output,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const FS: f64 = 1e6;

    fn tone(freq: f64, amp: f64, phase: f64, n: usize) -> TimeSeries {
        let v = (0..n)
            .map(|i| amp * (TAU * freq * i as f64 / FS + phase).cos())
            .collect();
        TimeSeries::new(v, 1.0 / FS, SeriesKind::Detector).unwrap()
    }

    fn mean_square(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }

    #[test]
    fn zero_input_stays_zero() {
        let mut s = LmsNotchState::new(&LmsNotchConfig::default(), FS).unwrap();
        for _ in 0..1000 {
            let (y, next) = lms_step(s, 0.0).unwrap();
            assert_eq!(y, 0.0);
            s = next;
        }
        assert_eq!((s.w_cos, s.w_sin), (0.0, 0.0));
    }

    #[test]
    fn tone_at_reference_is_suppressed_40_db() {
        let cfg = LmsNotchConfig::default();
        let settle = (10.0 / cfg.mu).ceil() as usize;
        let x = tone(cfg.ref_freq, 1.0, 0.4, settle + 40_000);
        let y = cancel(&x, &cfg).unwrap();
        let before = mean_square(&x.values()[settle..]);
        let after = mean_square(&y.values()[settle..]);
        assert!(10.0 * (before / after).log10() >= 40.0);
    }

    #[test]
    fn far_tone_passes() {
        let cfg = LmsNotchConfig::default();
        let width = cfg.mu * FS / PI;
        let n = 200_000;
        for sign in [-1.0, 1.0] {
            let f = cfg.ref_freq + sign * 10.0 * width;
            let x = tone(f, 1.0, 0.0, n);
            let y = cancel(&x, &cfg).unwrap();
            let db = 10.0 * (mean_square(&x.values()[n / 2..]) / mean_square(&y.values()[n / 2..])).log10();
            assert!(db.abs() < 3.0, "{db}");
        }
    }

    #[test]
    fn transfer_matches_simulation() {
        let cfg = LmsNotchConfig {
            leakage: leakage_for_depth(LmsNotchConfig::default().mu, 30.0),
            ..LmsNotchConfig::default()
        };
        let skip = 20 * settling_samples(&cfg);
        for df in [0.0, 100.0, 300.0, 500.0, 1200.0] {
            let f = cfg.ref_freq + df;
            let x = tone(f, 1.0, 0.0, skip + 100_000);
            let y = cancel(&x, &cfg).unwrap();
            let h = tone_phasor(&y, f, skip).unwrap() / tone_phasor(&x, f, skip).unwrap();
            let oracle = notch_transfer(&cfg, FS, f);
            assert!(
                (h - oracle).norm() < 1e-3 * oracle.norm().max(1e-2),
                "{df}: {h} vs {oracle}"
            );
        }
        let centre = notch_transfer(&cfg, FS, cfg.ref_freq).norm();
        assert!((20.0 * centre.log10() + 30.0).abs() < 0.1);
    }

    #[test]
    fn notch_width_follows_mu() {
        let half_power_width = |cfg: &LmsNotchConfig| {
            let mut f = 0.0;
            while notch_transfer(cfg, FS, cfg.ref_freq + f).norm_sqr() < 0.5 {
                f += 1.0;
            }
            2.0 * f
        };
        let cfg = LmsNotchConfig::default();
        let w1 = half_power_width(&cfg);
        assert!((w1 / 1e3 - 1.0).abs() < 0.05, "{w1}");
        let w2 = half_power_width(&LmsNotchConfig {
            mu: 2.0 * cfg.mu,
            ..cfg
        });
        assert!((w2 / w1 - 2.0).abs() < 0.6);
    }

    fn convergence_time(cfg: &LmsNotchConfig, phase: f64) -> usize {
        let n = 40 * settling_samples(cfg);
        let x = tone(cfg.ref_freq, 1.0, phase, n);
        let y = cancel(&x, cfg).unwrap();
        let block = 64;
        let p0 = mean_square(&x.values()[..block]);
        y.values()
            .chunks(block)
            .position(|c| mean_square(c) < 1e-4 * p0)
            .unwrap()
            * block
    }

    #[test]
    fn doubling_mu_halves_convergence() {
        let cfg = LmsNotchConfig::default();
        let t1 = convergence_time(&cfg, 0.3) as f64;
        let t2 = convergence_time(
            &LmsNotchConfig {
                mu: 2.0 * cfg.mu,
                ..cfg
            },
            0.3,
        ) as f64;
        assert!((t1 / t2 - 2.0).abs() < 0.6, "{t1} {t2}");
    }

    #[test]
    fn ensemble_tone_power_decreases_until_converged() {
        let cfg = LmsNotchConfig::default();
        let block = 64;
        let blocks = 4 * settling_samples(&cfg) / block;
        let mut power = vec![0.0; blocks];
        for seed in 0..10 {
            let phase = TAU * noise::gaussian(&mut noise::rng(seed)).fract();
            let x = tone(cfg.ref_freq, 1.0, phase, blocks * block);
            let y = cancel(&x, &cfg).unwrap();
            for (p, c) in power.iter_mut().zip(y.values().chunks(block)) {
                *p += mean_square(c) / 10.0;
            }
        }
        let floor = 1e-12 * power[0];
        for w in power.windows(2) {
            if w[0] < floor {
                break;
            }
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "{} -> {}", w[0], w[1]);
        }
    }

    #[test]
    fn divergence_is_reported() {
        let cfg = LmsNotchConfig::default();
        let big = tone(cfg.ref_freq, 1e7, 0.0, 10_000);
        assert!(matches!(cancel(&big, &cfg), Err(Error::Diverged(_))));
        let mut s = LmsNotchState::new(&cfg, FS).unwrap();
        assert!(matches!(s.step(f64::NAN), Err(Error::Diverged(1))));
    }

    #[test]
    fn clamp_limits_cancellation() {
        let cfg = LmsNotchConfig {
            output_clamp: Some(0.5),
            ..LmsNotchConfig::default()
        };
        let settle = settling_samples(&cfg);
        let x = tone(cfg.ref_freq, 1.0, 0.0, settle * 4);
        let y = cancel(&x, &cfg).unwrap();
        let resid = tone_phasor(&y, cfg.ref_freq, 2 * settle).unwrap().norm();
        assert!(resid > 0.3, "{resid}");
    }

    #[test]
    fn invalid_configs() {
        let bad = LmsNotchConfig {
            mu: 1.5,
            ..LmsNotchConfig::default()
        };
        assert!(LmsNotchState::new(&bad, FS).is_err());
        assert!(matches!(
            LmsNotchState::new(&LmsNotchConfig::default(), 400e3),
            Err(Error::Undersampled { .. })
        ));
    }

    #[test]
    fn notch_depth_basics() {
        let x = TimeSeries::new(
            noise::white(1 << 16, 1.0, &mut noise::rng(5)),
            1.0 / FS,
            SeriesKind::Detector,
        )
        .unwrap();
        assert!(notch_depth(&x, &x, 125e3, 1e3).unwrap().abs() < 1e-12);
        let short = TimeSeries::new(vec![0.0; 1000], 1.0 / FS, SeriesKind::Detector).unwrap();
        assert!(matches!(
            notch_depth(&short, &short, 125e3, 1e3),
            Err(Error::TooShort(_))
        ));
        let other = TimeSeries::new(vec![0.0; 999], 1.0 / FS, SeriesKind::Detector).unwrap();
        assert!(matches!(
            notch_depth(&short, &other, 125e3, 1e3),
            Err(Error::LengthMismatch(..))
        ));
    }

    #[test]
    fn intensity_targets() {
        let s = IntensityNoiseScenario::default();
        let (t, r) = s.targets().unwrap();
        assert!((t / s.floor_psd / 3980.0 - 1.0).abs() < 1e-3);
        assert!((r / 1.744e-3 - 1.0).abs() < 1e-3);
        let notch = s.calibrated_notch().unwrap();
        assert!((s.band_mean_response(&notch) / r - 1.0).abs() < 1e-9);
    }

    #[test]
    fn ram_scenario_depth() {
        let out = RamCancelScenario::default().run(1).unwrap();
        assert!((40.0..=50.0).contains(&out.depth_db), "{}", out.depth_db);
        let expected = 1e-3 * 10f64.powf(-45.0 / 20.0);
        assert!((out.residual.norm() / expected - 1.0).abs() < 0.05);
    }
}
