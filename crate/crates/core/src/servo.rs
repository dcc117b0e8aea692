//! Laser frequency servo: free-running laser noise, cavity prestabilization
//! as a noise-shaping filter, and the long-term PI lock to the iodine error
//! signal in analytic-baseband form.

use std::f64::consts::TAU;

use num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::freq::{SeriesKind, TimeSeries};
use crate::noise;
use crate::sigchain::ErrorChain;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NoiseModel {
    /// h0, Hz²/Hz
    pub white_freq_psd: f64,
    /// h-1, Hz²
    pub flicker_freq_coeff: f64,
    /// Hz/s
    pub linear_drift: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            white_freq_psd: 4e6,
            flicker_freq_coeff: 1e5,
            linear_drift: 1.0,
        }
    }
}

impl NoiseModel {
    pub const QUIET: Self = Self {
        white_freq_psd: 0.0,
        flicker_freq_coeff: 0.0,
        linear_drift: 0.0,
    };

    pub fn validate(&self) -> Result<()> {
        require(
            self.white_freq_psd >= 0.0,
            "white_freq_psd",
            self.white_freq_psd,
            ">= 0",
        )?;
        require(
            self.flicker_freq_coeff >= 0.0,
            "flicker_freq_coeff",
            self.flicker_freq_coeff,
            ">= 0",
        )?;
        require(self.linear_drift >= 0.0, "linear_drift", self.linear_drift, ">= 0")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PrestabConfig {
    /// Hz
    pub unity_gain_freq: f64,
    /// Deepest suppression, dB (negative).
    pub suppression_floor: f64,
}

impl Default for PrestabConfig {
    fn default() -> Self {
        Self {
            unity_gain_freq: 20e3,
            suppression_floor: -30.0,
        }
    }
}

impl PrestabConfig {
    pub fn validate(&self) -> Result<()> {
        require(
            self.unity_gain_freq >= 0.0,
            "unity_gain_freq",
            self.unity_gain_freq,
            ">= 0",
        )?;
        require(
            self.suppression_floor <= 0.0,
            "suppression_floor",
            self.suppression_floor,
            "<= 0 dB",
        )
    }

    /// Magnitude of the suppression at `freq`.
    pub fn gain(&self, freq: f64) -> f64 {
        let floor = 10f64.powf(self.suppression_floor / 20.0);
        if self.unity_gain_freq == 0.0 {
            return 1.0;
        }
        let f = freq.abs();
        let g = f / (f * f + self.unity_gain_freq * self.unity_gain_freq).sqrt();
        g.max(floor)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PiConfig {
    /// Hz of correction per unit error.
    pub kp: f64,
    /// Hz/s of correction per unit error.
    pub ki: f64,
    /// Hz
    pub update_rate: f64,
    /// Hz
    pub correction_limit: f64,
}

impl PiConfig {
    /// Integral gain for a unity-gain frequency `bandwidth` on a discriminator
    /// of slope `slope` (error per Hz); proportional gain `kp_ratio / slope`.
    pub fn from_loop_shape(
        slope: f64,
        bandwidth: f64,
        kp_ratio: f64,
        update_rate: f64,
        correction_limit: f64,
    ) -> Result<Self> {
        require(slope.is_finite() && slope != 0.0, "slope", slope, "finite and non-zero")?;
        require(bandwidth > 0.0, "bandwidth", bandwidth, "> 0")?;
        require(
            update_rate > 20.0 * bandwidth,
            "update_rate",
            update_rate,
            "> 20 x bandwidth",
        )?;
        let pi = Self {
            kp: kp_ratio / slope,
            ki: TAU * bandwidth / slope,
            update_rate,
            correction_limit,
        };
        pi.validate()?;
        Ok(pi)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.update_rate > 0.0, "update_rate", self.update_rate, "> 0")?;
        require(
            self.correction_limit > 0.0,
            "correction_limit",
            self.correction_limit,
            "> 0",
        )
    }

    pub fn with_ki(self, ki: f64) -> Self {
        Self { ki, ..self }
    }
}

/// Loop parameters in the form stored in configuration files.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    /// Unity-gain frequency of the long-term loop, Hz.
    pub bandwidth: f64,
    /// Proportional gain relative to one unit of error per Hz.
    pub kp_ratio: f64,
    pub update_rate: f64,
    pub correction_limit: f64,
    /// White-FM level, Hz²/Hz, that the error-signal noise imposes on the
    /// locked laser. Fitted so the locked Allan deviation is 7.2e-13 at 1 s.
    pub locked_white_fm_h0: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        let f0 = 597_366_498_654_620.0;
        Self {
            bandwidth: 10.0,
            kp_ratio: 0.1,
            update_rate: 1e3,
            correction_limit: 5e6,
            locked_white_fm_h0: 2.0 * (7.2e-13 * f0) * (7.2e-13 * f0),
        }
    }
}

impl LoopConfig {
    pub fn pi_for(&self, chain: &ErrorChain) -> Result<PiConfig> {
        PiConfig::from_loop_shape(
            chain.slope(),
            self.bandwidth,
            self.kp_ratio,
            self.update_rate,
            self.correction_limit,
        )
    }

    /// Per-update rms of the error-signal noise.
    pub fn error_noise_rms(&self, chain: &ErrorChain) -> f64 {
        error_noise_rms(chain.slope(), self.locked_white_fm_h0, self.update_rate)
    }
}

/// Error noise rms per sample equivalent to white FM `h0` through a
/// discriminator of slope `slope`.
pub fn error_noise_rms(slope: f64, h0: f64, update_rate: f64) -> f64 {
    slope.abs() * (h0 * update_rate / 2.0).sqrt()
}

/// Free-running laser frequency offset, Hz, sampled at `rate`.
pub fn simulate_free_laser(model: &NoiseModel, duration: f64, rate: f64, seed: u64) -> Result<TimeSeries> {
    model.validate()?;
    require(rate > 0.0, "rate", rate, "> 0")?;
    require(duration > 0.0, "duration", duration, "> 0")?;
    let n = (duration * rate).round() as usize;
    require(
        (1..=1 << 28).contains(&n),
        "duration",
        duration,
        "rate x duration in [1, 2^28] samples",
    )?;
    let mut values = vec![0.0; n];
    if model.white_freq_psd > 0.0 {
        let w = noise::white_with_psd(
            n,
            model.white_freq_psd,
            rate,
            &mut noise::rng(noise::derive_seed(seed, 10)),
        );
        values.iter_mut().zip(w).for_each(|(v, x)| *v += x);
    }
    if model.flicker_freq_coeff > 0.0 {
        let f = noise::flicker(
            n,
            model.flicker_freq_coeff,
            rate,
            &mut noise::rng(noise::derive_seed(seed, 11)),
        );
        values.iter_mut().zip(f).for_each(|(v, x)| *v += x);
    }
    if model.linear_drift > 0.0 {
        for (i, v) in values.iter_mut().enumerate() {
            *v += model.linear_drift * i as f64 / rate;
        }
    }
    TimeSeries::new(values, 1.0 / rate, SeriesKind::FrequencyOffset)
}

fn linear_trend(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.len() < 2 {
        return (values.first().copied().unwrap_or(0.0), 0.0);
    }
    let tm = (n - 1.0) / 2.0;
    let ym = values.iter().sum::<f64>() / n;
    let mut sxy = 0.0;
    let mut sxx = 0.0;
    for (i, y) in values.iter().enumerate() {
        let dx = i as f64 - tm;
        sxy += dx * (y - ym);
        sxx += dx * dx;
    }
    let slope = sxy / sxx;
    (ym - slope * tm, slope)
}

/// Shape the frequency noise with the first-order cavity loop response.
pub fn prestabilize(series: &TimeSeries, cfg: &PrestabConfig) -> Result<TimeSeries> {
    cfg.validate()?;
    if series.kind() != SeriesKind::FrequencyOffset {
        return Err(Error::InvalidParameter {
            name: "series",
            value: f64::NAN,
            requirement: "frequency-offset series",
        });
    }
    if cfg.unity_gain_freq == 0.0 {
        return Ok(series.clone());
    }
    let n = series.len();
    let (intercept, slope) = linear_trend(series.values());
    let mut buf: Vec<Complex<f64>> = series
        .values()
        .iter()
        .enumerate()
        .map(|(i, v)| Complex::new(v - intercept - slope * i as f64, 0.0))
        .collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(n).process(&mut buf);
    let df = series.sample_rate() / n as f64;
    for (k, b) in buf.iter_mut().enumerate() {
        let bin = if k <= n / 2 { k } else { n - k };
        *b *= cfg.gain(bin as f64 * df);
    }
    planner.plan_fft_inverse(n).process(&mut buf);
    let trend_gain = cfg.gain(0.0);
    let values = buf
        .iter()
        .enumerate()
        .map(|(i, c)| c.re / n as f64 + trend_gain * (intercept + slope * i as f64))
        .collect();
    TimeSeries::new(values, series.dt(), SeriesKind::FrequencyOffset)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LockOutcome {
    /// Laser offset from the shifted line centre, Hz.
    pub locked: TimeSeries,
    pub in_lock: Vec<bool>,
    /// Error signal as seen by the controller, noise included.
    pub error: TimeSeries,
}

impl LockOutcome {
    pub fn always_locked(&self) -> bool {
        self.in_lock.iter().all(|&b| b)
    }
}

/// Close the long-term loop. `laser` is the (prestabilized) free laser at
/// the PI update rate; `lock_point_offset` is the initial detuning from the
/// shifted centre; `error_noise_rms` is white noise added to every error sample.
pub fn close_lock(
    laser: &TimeSeries,
    chain: &ErrorChain,
    pi: &PiConfig,
    lock_point_offset: f64,
    error_noise_rms: f64,
    seed: u64,
) -> Result<LockOutcome> {
    pi.validate()?;
    let hwhm = chain.context().hwhm;
    require(
        lock_point_offset.abs() < hwhm,
        "lock_point_offset",
        lock_point_offset,
        "|offset| < HWHM",
    )?;
    require(error_noise_rms >= 0.0, "error_noise_rms", error_noise_rms, ">= 0")?;
    let rel = (laser.sample_rate() / pi.update_rate - 1.0).abs();
    require(
        rel < 1e-9,
        "update_rate",
        pi.update_rate,
        "equal to the laser series rate",
    )?;
    let dt = 1.0 / pi.update_rate;
    let mut rng = noise::rng(noise::derive_seed(seed, 20));
    let mut integ = 0.0;
    let mut correction = 0.0;
    let mut locked = Vec::with_capacity(laser.len());
    let mut errors = Vec::with_capacity(laser.len());
    let mut in_lock = Vec::with_capacity(laser.len());
    let limit = pi.correction_limit;
    for &free in laser.values() {
        let nu = free + lock_point_offset + correction;
        let noise = if error_noise_rms > 0.0 {
            error_noise_rms * noise::gaussian(&mut rng)
        } else {
            0.0
        };
        let e = chain.error(nu) + noise;
        integ = (integ + pi.ki * e * dt).clamp(-limit, limit);
        correction = (-(pi.kp * e + integ)).clamp(-limit, limit);
        locked.push(nu);
        errors.push(e);
        in_lock.push(nu.is_finite() && nu.abs() < 2.0 * hwhm);
    }
    Ok(LockOutcome {
        locked: TimeSeries::new(locked, dt, SeriesKind::FrequencyOffset)?,
        in_lock,
        error: TimeSeries::new(errors, dt, SeriesKind::Demodulated)?,
    })
}
