//! Detection chain: FM spectroscopy of the probe with residual amplitude
//! modulation (RAM), digital lock-in demodulation, the modulation-transfer
//! error signal and the pump-chopped double demodulation.
//!
//! Two fidelity levels are provided. The analytic baseband path evaluates the
//! demodulated output directly from the sideband decomposition; the
//! time-domain path samples the photocurrent and runs it through [`LockIn`].

use std::f64::consts::{FRAC_PI_2, PI};

use num_complex::Complex;
use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::freq::{FrequencyOffset, SeriesKind, TimeSeries};
use crate::lineshape::LineContext;
use crate::noise::{self, Rng};
use crate::special::{bessel_j_sequence, brent_root};

/// Lock-in phase that selects the dispersion (quadrature) component.
pub const DISPERSION_PHASE: f64 = FRAC_PI_2;

/// Pump chopping is a 50% duty square wave.
pub const CHOP_DUTY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModulationMode {
    /// Phase modulation by the EOM.
    Phase,
    /// Frequency modulation applied through the intensity-control AOM.
    Frequency,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModulationConfig {
    /// Hz
    pub probe_mod_freq: f64,
    /// Modulation index; for FM this is deviation / modulation frequency.
    pub index: f64,
    pub mode: ModulationMode,
    /// Relative intensity modulation depth at the modulation frequency.
    pub ram_depth: f64,
    /// RAM phase relative to the lock-in reference, rad.
    pub ram_phase: f64,
    /// Extra RAM contributed by the AOM in [`ModulationMode::Frequency`].
    pub aom_extra_ram_depth: f64,
}

impl Default for ModulationConfig {
    fn default() -> Self {
        Self {
            probe_mod_freq: 2.5e6,
            index: 1.0,
            mode: ModulationMode::Phase,
            ram_depth: 0.0,
            ram_phase: 0.0,
            aom_extra_ram_depth: 0.0,
        }
    }
}

impl ModulationConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.probe_mod_freq > 0.0, "probe_mod_freq", self.probe_mod_freq, "> 0")?;
        require(self.index >= 0.0, "index", self.index, ">= 0")?;
        require(
            (0.0..1.0).contains(&self.ram_depth),
            "ram_depth",
            self.ram_depth,
            "in [0, 1)",
        )?;
        require(
            (0.0..1.0).contains(&self.aom_extra_ram_depth),
            "aom_extra_ram_depth",
            self.aom_extra_ram_depth,
            "in [0, 1)",
        )?;
        require(
            self.effective_ram_depth() < 1.0,
            "ram_depth",
            self.effective_ram_depth(),
            "total < 1",
        )
    }

    pub fn effective_ram_depth(&self) -> f64 {
        match self.mode {
            ModulationMode::Phase => self.ram_depth,
            ModulationMode::Frequency => self.ram_depth + self.aom_extra_ram_depth,
        }
    }

    pub fn with_ram_depth(self, ram_depth: f64) -> Self {
        Self { ram_depth, ..self }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PumpModConfig {
    /// Modulation-transfer pump FM frequency, Hz.
    pub mt_mod_freq: f64,
    /// Pump FM peak deviation, Hz.
    pub mt_deviation: f64,
    /// Scale of the modulation-transfer error signal.
    pub mt_gain: f64,
    /// Pump amplitude-chop frequency, Hz.
    pub chop_freq: f64,
    pub aom_probe_shift: f64,
    pub aom_pump_shift: f64,
}

impl Default for PumpModConfig {
    fn default() -> Self {
        Self {
            mt_mod_freq: 125e3,
            mt_deviation: 30e3,
            mt_gain: 1.0,
            chop_freq: 200.0,
            aom_probe_shift: 250e6,
            aom_pump_shift: 80e6,
        }
    }
}

impl PumpModConfig {
    pub fn validate(&self, probe_mod_freq: f64) -> Result<()> {
        require(self.chop_freq > 0.0, "chop_freq", self.chop_freq, "> 0")?;
        require(self.mt_deviation > 0.0, "mt_deviation", self.mt_deviation, "> 0")?;
        require(
            self.chop_freq < self.mt_mod_freq,
            "chop_freq",
            self.chop_freq,
            "< mt_mod_freq",
        )?;
        require(
            self.mt_mod_freq < probe_mod_freq,
            "mt_mod_freq",
            self.mt_mod_freq,
            "< probe_mod_freq",
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockInConfig {
    pub ref_freq: f64,
    pub ref_phase: f64,
    /// s
    pub time_constant: f64,
}

impl Default for LockInConfig {
    fn default() -> Self {
        Self {
            ref_freq: 2.5e6,
            ref_phase: DISPERSION_PHASE,
            time_constant: 0.1,
        }
    }
}

/// Carrier and sideband amplitudes `J_0 ..= J_max_order` of a modulation with index `index`.
pub fn sideband_amplitudes(index: f64, max_order: usize) -> Vec<f64> {
    bessel_j_sequence(index, max_order.max(1))
}

fn sideband_order(index: f64) -> usize {
    (index + 6.0 * index.cbrt() + 12.0).ceil() as usize
}

/// Harmonic content of the detected probe intensity: DC, first and second harmonic phasors.
struct Harmonics {
    dc: f64,
    first: Complex<f64>,
    second: Complex<f64>,
}

fn field_components(detuning: f64, ctx: &LineContext, modulation: &ModulationConfig) -> Vec<Complex<f64>> {
    let order = sideband_order(modulation.index);
    let bessel = sideband_amplitudes(modulation.index, order);
    let half_depth = 0.5 * ctx.optical_depth;
    (-(order as i64)..=order as i64)
        .map(|k| {
            let n = k.unsigned_abs() as usize;
            let amp = if k < 0 && n % 2 == 1 { -bessel[n] } else { bessel[n] };
            let d = detuning + k as f64 * modulation.probe_mod_freq;
            let loss = half_depth * ctx.absorption(d);
            let phase = half_depth * ctx.dispersion(d);
            amp * Complex::new(-loss, -phase).exp()
        })
        .collect()
}

fn harmonics(detuning: f64, ctx: &LineContext, modulation: &ModulationConfig) -> Harmonics {
    let a = field_components(detuning, ctx, modulation);
    let dc = a.iter().map(|c| c.norm_sqr()).sum();
    let first = a.windows(2).map(|w| w[1] * w[0].conj()).sum();
    let second = a.windows(3).map(|w| w[2] * w[0].conj()).sum();
    Harmonics { dc, first, second }
}

fn check_resolved(ctx: &LineContext, modulation: &ModulationConfig) -> Result<()> {
    if modulation.probe_mod_freq <= 10.0 * ctx.hwhm {
        return Err(Error::UnresolvedSidebands {
            mod_freq: modulation.probe_mod_freq,
            hwhm: ctx.hwhm,
        });
    }
    Ok(())
}

/// Demodulated FM-spectroscopy output at lock-in phase `phase` for a laser
/// detuned `detuning` Hz from the unperturbed line centre. At
/// [`DISPERSION_PHASE`] the central feature follows the Lamb-dip dispersion.
pub fn fm_demod_signal(detuning: f64, ctx: &LineContext, modulation: &ModulationConfig, phase: f64) -> Result<f64> {
    check_resolved(ctx, modulation)?;
    modulation.validate()?;
    Ok(fm_output(detuning, ctx, modulation, phase))
}

fn fm_output(detuning: f64, ctx: &LineContext, modulation: &ModulationConfig, phase: f64) -> f64 {
    let h = harmonics(detuning, ctx, modulation);
    let m = modulation.effective_ram_depth();
    let chi = phase + modulation.ram_phase;
    let ram = 0.5 * m * (h.dc * Complex::from_polar(1.0, chi) + h.second * Complex::from_polar(1.0, -chi));
    2.0 * ((h.first + ram) * Complex::from_polar(1.0, -phase)).re
}

/// Displacement of the dispersion zero crossing caused by RAM, in Hz.
pub fn ram_lock_shift_hz(modulation: &ModulationConfig, ctx: &LineContext) -> Result<f64> {
    check_resolved(ctx, modulation)?;
    modulation.validate()?;
    let span = 2.0 * ctx.hwhm;
    let c = ctx.center_shift;
    let f = |d: f64| fm_output(d, ctx, modulation, DISPERSION_PHASE);
    let root = brent_root(f, c - span, c + span, 1e-9).ok_or(Error::NoZeroCrossing(span))?;
    Ok(root - c)
}

pub fn ram_lock_shift(modulation: &ModulationConfig, ctx: &LineContext) -> Result<FrequencyOffset> {
    FrequencyOffset::from_hz_f64(ram_lock_shift_hz(modulation, ctx)?)
}

/// Streaming lock-in: multiply by `2 cos(2 pi f t + phase)` and low-pass with a
/// single-pole filter of the configured time constant.
#[derive(Debug, Clone)]
pub struct LockIn {
    omega_dt: f64,
    phase: f64,
    alpha: f64,
    index: u64,
    state: f64,
}

impl LockIn {
    pub fn new(cfg: &LockInConfig, dt: f64) -> Result<Self> {
        require(cfg.time_constant > 0.0, "time_constant", cfg.time_constant, "> 0")?;
        require(dt > 0.0, "dt", dt, "> 0")?;
        let rate = 1.0 / dt;
        if rate <= 4.0 * cfg.ref_freq {
            return Err(Error::Undersampled {
                rate,
                freq: cfg.ref_freq,
            });
        }
        Ok(Self {
            omega_dt: 2.0 * PI * cfg.ref_freq * dt,
            phase: cfg.ref_phase,
            alpha: 1.0 - (-dt / cfg.time_constant).exp(),
            index: 0,
            state: 0.0,
        })
    }

    pub fn process(&mut self, x: f64) -> f64 {
        let arg = self.omega_dt * self.index as f64 + self.phase;
        self.index += 1;
        let mixed = 2.0 * x * arg.cos();
        self.state += self.alpha * (mixed - self.state);
        self.state
    }

    pub fn output(&self) -> f64 {
        self.state
    }
}

pub fn lock_in(signal: &TimeSeries, cfg: &LockInConfig) -> Result<TimeSeries> {
    let mut li = LockIn::new(cfg, signal.dt())?;
    let out = signal.values().iter().map(|&x| li.process(x)).collect();
    TimeSeries::new(out, signal.dt(), SeriesKind::Demodulated)
}

/// Settings for the sampled photodetector path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TimeDomainConfig {
    /// Samples per second (at least 10 MS/s).
    pub sample_rate: f64,
    /// s
    pub duration: f64,
    /// Lock-in time constant, s.
    pub time_constant: f64,
    /// Detector white-noise rms per sample.
    pub detector_noise_rms: f64,
}

impl Default for TimeDomainConfig {
    fn default() -> Self {
        Self {
            sample_rate: 20e6,
            duration: 1e-3,
            time_constant: 5e-5,
            detector_noise_rms: 0.0,
        }
    }
}

/// Sampled photocurrent `|E(t)|^2 (1 + m cos(W t + phase + ram_phase))` plus detector noise.
pub fn fm_detector_record(
    detuning: f64,
    ctx: &LineContext,
    modulation: &ModulationConfig,
    phase: f64,
    cfg: &TimeDomainConfig,
    rng: &mut Rng,
) -> Result<TimeSeries> {
    require(cfg.sample_rate >= 10e6, "sample_rate", cfg.sample_rate, ">= 10 MS/s")?;
    require(
        cfg.duration > 0.0 && cfg.duration <= 1.0,
        "duration",
        cfg.duration,
        "in (0, 1] s",
    )?;
    modulation.validate()?;
    let a = field_components(detuning, ctx, modulation);
    let order = (a.len() / 2) as i64;
    let n = (cfg.duration * cfg.sample_rate).round() as usize;
    let dt = 1.0 / cfg.sample_rate;
    let omega = 2.0 * PI * modulation.probe_mod_freq;
    let m = modulation.effective_ram_depth();
    let mut values = Vec::with_capacity(n);
    for i in 0..n {
        let t = i as f64 * dt;
        let step = Complex::from_polar(1.0, omega * t);
        let mut rot = Complex::from_polar(1.0, -(order as f64) * omega * t);
        let mut field = Complex::new(0.0, 0.0);
        for c in &a {
            field += c * rot;
            rot *= step;
        }
        let ram = 1.0 + m * (omega * t + phase + modulation.ram_phase).cos();
        let noise = if cfg.detector_noise_rms > 0.0 {
            cfg.detector_noise_rms * noise::gaussian(rng)
        } else {
            0.0
        };
        values.push(field.norm_sqr() * ram + noise);
    }
    TimeSeries::new(values, dt, SeriesKind::Detector)
}

/// Time-domain counterpart of [`fm_demod_signal`]: samples the detector,
/// demodulates, and averages the settled output over whole modulation periods.
pub fn fm_demod_time_domain(
    detuning: f64,
    ctx: &LineContext,
    modulation: &ModulationConfig,
    phase: f64,
    cfg: &TimeDomainConfig,
    seed: u64,
) -> Result<f64> {
    check_resolved(ctx, modulation)?;
    let record = fm_detector_record(detuning, ctx, modulation, phase, cfg, &mut noise::rng(seed))?;
    let li = LockInConfig {
        ref_freq: modulation.probe_mod_freq,
        ref_phase: phase,
        time_constant: cfg.time_constant,
    };
    let out = lock_in(&record, &li)?;
    let settle = (12.0 * cfg.time_constant * cfg.sample_rate).ceil() as usize;
    let per_period = cfg.sample_rate / modulation.probe_mod_freq;
    let available = out.len().saturating_sub(settle);
    let periods = (available as f64 / per_period).floor();
    let count = (periods * per_period).round() as usize;
    if periods < 1.0 || count == 0 {
        return Err(Error::TooShort(format!(
            "{} samples leave no settled modulation period",
            out.len()
        )));
    }
    let tail = &out.values()[out.len() - count..];
    Ok(tail.iter().sum::<f64>() / count as f64)
}

/// Modulation-transfer error signal: first harmonic of the saturated
/// absorption as the pump frequency is swept by `mt_deviation` at
/// `mt_mod_freq`, plus a pump-independent `background_offset`. `offset` is the
/// laser detuning from the shifted line centre. Odd, with positive slope.
pub fn modulation_transfer_error(offset: f64, ctx: &LineContext, pump: &PumpModConfig, background_offset: f64) -> f64 {
    mt_first_harmonic(offset, ctx, pump) + background_offset
}

fn mt_first_harmonic(offset: f64, ctx: &LineContext, pump: &PumpModConfig) -> f64 {
    const POINTS: usize = 64;
    let hole = |d: f64| {
        let x = d / ctx.hwhm;
        ctx.optical_depth * ctx.dip_contrast / (1.0 + x * x)
    };
    let sum: f64 = (0..POINTS)
        .map(|j| {
            let phi = 2.0 * PI * j as f64 / POINTS as f64;
            hole(offset + pump.mt_deviation * phi.cos()) * phi.cos()
        })
        .sum();
    -pump.mt_gain * 2.0 * sum / POINTS as f64
}

/// Pump-chopped double demodulation of the modulation-transfer signal. Only
/// the pump-dependent part survives, scaled by the chop duty cycle.
pub fn double_demod_error(offset: f64, ctx: &LineContext, pump: &PumpModConfig, background_offset: f64) -> f64 {
    let on = modulation_transfer_error(offset, ctx, pump, background_offset);
    let off = background_offset;
    CHOP_DUTY * (on - off)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Discriminator {
    /// 2.5 MHz FM spectroscopy of the probe, quadrature output.
    FmSpectroscopy,
    /// 125 kHz modulation transfer from the pump.
    ModulationTransfer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Demodulation {
    Single,
    /// Second lock-in at the pump chop frequency.
    Double,
}

/// A complete error-signal path in analytic baseband form, oriented so the
/// slope at the line centre is positive.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorChain {
    ctx: LineContext,
    modulation: ModulationConfig,
    pump: PumpModConfig,
    discriminator: Discriminator,
    demodulation: Demodulation,
    background_offset: f64,
    polarity: f64,
}

impl ErrorChain {
    pub fn new(
        ctx: LineContext,
        modulation: ModulationConfig,
        pump: PumpModConfig,
        discriminator: Discriminator,
        demodulation: Demodulation,
        background_offset: f64,
    ) -> Result<Self> {
        modulation.validate()?;
        pump.validate(modulation.probe_mod_freq)?;
        if discriminator == Discriminator::FmSpectroscopy {
            check_resolved(&ctx, &modulation)?;
        }
        let mut chain = Self {
            ctx,
            modulation,
            pump,
            discriminator,
            demodulation,
            background_offset,
            polarity: 1.0,
        };
        let probe = 0.05 * ctx.hwhm;
        let clean = |o: f64| chain.raw_clean(o);
        chain.polarity = if clean(probe) >= clean(-probe) { 1.0 } else { -1.0 };
        Ok(chain)
    }

    /// Discriminator output without RAM or background offset, pump on.
    fn raw_clean(&self, offset: f64) -> f64 {
        let d = offset + self.ctx.center_shift;
        match self.discriminator {
            Discriminator::FmSpectroscopy => fm_output(
                d,
                &self.ctx,
                &self.modulation.with_ram_depth(0.0).no_aom_ram(),
                DISPERSION_PHASE,
            ),
            Discriminator::ModulationTransfer => mt_first_harmonic(offset, &self.ctx, &self.pump),
        }
    }

    fn raw(&self, offset: f64, ctx: &LineContext) -> f64 {
        let d = offset + self.ctx.center_shift;
        let signal = match self.discriminator {
            Discriminator::FmSpectroscopy => fm_output(d, ctx, &self.modulation, DISPERSION_PHASE),
            Discriminator::ModulationTransfer => {
                if ctx.dip_contrast == 0.0 {
                    0.0
                } else {
                    mt_first_harmonic(offset, ctx, &self.pump)
                }
            }
        };
        signal + self.background_offset
    }

    /// Error signal for a laser `offset` Hz from the shifted line centre.
    pub fn error(&self, offset: f64) -> f64 {
        let value = match self.demodulation {
            Demodulation::Single => self.raw(offset, &self.ctx),
            Demodulation::Double => {
                CHOP_DUTY * (self.raw(offset, &self.ctx) - self.raw(offset, &self.ctx.without_dip()))
            }
        };
        self.polarity * value
    }

    /// Pump-on and pump-off outputs of the first demodulator, oriented.
    pub fn first_stage(&self, offset: f64) -> (f64, f64) {
        (
            self.polarity * self.raw(offset, &self.ctx),
            self.polarity * self.raw(offset, &self.ctx.without_dip()),
        )
    }

    /// Numeric slope at the shifted centre, per Hz.
    pub fn slope(&self) -> f64 {
        let h = 1e-3 * self.ctx.hwhm;
        (self.error(h) - self.error(-h)) / (2.0 * h)
    }

    /// Lock point: zero crossing of the error, Hz from the shifted centre.
    pub fn zero_crossing(&self) -> Result<f64> {
        let span = 2.0 * self.ctx.hwhm;
        brent_root(|o| self.error(o), -span, span, 1e-9).ok_or(Error::NoZeroCrossing(span))
    }

    /// Largest |error| of the clean discriminator within +/-3 HWHM.
    pub fn peak_error(&self) -> f64 {
        let scale = match self.demodulation {
            Demodulation::Single => 1.0,
            Demodulation::Double => CHOP_DUTY,
        };
        (0..=600)
            .map(|i| (i as f64 / 100.0 - 3.0) * self.ctx.hwhm)
            .map(|o| self.raw_clean(o).abs())
            .fold(0.0, f64::max)
            * scale
    }

    pub fn context(&self) -> &LineContext {
        &self.ctx
    }

    pub fn demodulation(&self) -> Demodulation {
        self.demodulation
    }

    pub fn with_background_offset(&self, background_offset: f64) -> Self {
        Self {
            background_offset,
            ..self.clone()
        }
    }

    pub fn with_demodulation(&self, demodulation: Demodulation) -> Self {
        Self {
            demodulation,
            ..self.clone()
        }
    }
}

impl ModulationConfig {
    fn no_aom_ram(self) -> Self {
        Self {
            aom_extra_ram_depth: 0.0,
            ..self
        }
    }
}

/// Double demodulation with explicit time sampling of the chop: the
/// first-stage output switches between pump-on and pump-off values, passes a
/// single-pole filter of `first_stage_tau`, and is demodulated against a
/// +/-1 square reference over `periods` chop periods (the first is discarded).
pub fn double_demod_sampled(
    chain: &ErrorChain,
    offset: f64,
    chop_freq: f64,
    first_stage_tau: f64,
    periods: usize,
    samples_per_period: usize,
) -> Result<f64> {
    require(periods >= 2, "periods", periods as f64, ">= 2")?;
    require(
        samples_per_period >= 4 && samples_per_period.is_multiple_of(2),
        "samples_per_period",
        samples_per_period as f64,
        "even and >= 4",
    )?;
    let (on, off) = chain.first_stage(offset);
    let dt = 1.0 / (chop_freq * samples_per_period as f64);
    let alpha = if first_stage_tau > 0.0 {
        1.0 - (-dt / first_stage_tau).exp()
    } else {
        1.0
    };
    let half = samples_per_period / 2;
    let mut state = off;
    let mut acc = 0.0;
    let mut count = 0usize;
    for p in 0..periods {
        for s in 0..samples_per_period {
            let pumped = s < half;
            let target = if pumped { on } else { off };
            state += alpha * (target - state);
            if p > 0 {
                acc += if pumped { state } else { -state };
                count += 1;
            }
        }
    }
    Ok(acc / count as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::{BroadeningModel, CellConditions, HyperfineLine, SaturationConfig, ShiftModel};

    fn ctx_at(pressure: f64) -> LineContext {
        LineContext::new(
            &HyperfineLine::default(),
            &BroadeningModel::default(),
            &ShiftModel::default(),
            &SaturationConfig::default(),
            &CellConditions::default().with_pressure(pressure),
        )
        .unwrap()
    }

    #[test]
    fn bessel_sidebands() {
        let j = sideband_amplitudes(0.0, 3);
        assert_eq!(j, vec![1.0, 0.0, 0.0, 0.0]);
        let j = sideband_amplitudes(1.0, 20);
        assert!((j[0] - 0.765198).abs() < 1e-6);
        assert!((j[1] - 0.440051).abs() < 1e-6);
    }

    #[test]
    fn fm_signal_is_odd_about_centre() {
        let ctx = ctx_at(0.066);
        let m = ModulationConfig::default();
        let c = ctx.center_shift;
        assert!(fm_demod_signal(c, &ctx, &m, DISPERSION_PHASE).unwrap().abs() < 1e-15);
        let peak = fm_demod_signal(c + ctx.hwhm, &ctx, &m, DISPERSION_PHASE).unwrap().abs();
        for i in 1..40 {
            let d = i as f64 * 5e3;
            let up = fm_demod_signal(c + d, &ctx, &m, DISPERSION_PHASE).unwrap();
            let down = fm_demod_signal(c - d, &ctx, &m, DISPERSION_PHASE).unwrap();
            assert!((up + down).abs() <= 1e-9 * peak, "{d}: {up} {down}");
        }
    }

    #[test]
    fn central_feature_follows_dispersion() {
        let ctx = ctx_at(0.066);
        let m = ModulationConfig::default();
        let c = ctx.center_shift;
        let s1 = fm_demod_signal(c + ctx.hwhm, &ctx, &m, DISPERSION_PHASE).unwrap();
        let s05 = fm_demod_signal(c + 0.5 * ctx.hwhm, &ctx, &m, DISPERSION_PHASE).unwrap();
        let s3 = fm_demod_signal(c + 3.0 * ctx.hwhm, &ctx, &m, DISPERSION_PHASE).unwrap();
        // D(x) = -x/(1+x^2): D(0.5)/D(1) = 0.8, D(3)/D(1) = 0.6
        assert!((s05 / s1 - 0.8).abs() < 0.01, "{}", s05 / s1);
        assert!((s3 / s1 - 0.6).abs() < 0.01, "{}", s3 / s1);
    }

    #[test]
    fn sideband_features_have_opposite_sign() {
        let ctx = ctx_at(0.066);
        let m = ModulationConfig::default();
        let c = ctx.center_shift;
        let w = m.probe_mod_freq;
        let h = ctx.hwhm;
        let centre = fm_demod_signal(c + h, &ctx, &m, DISPERSION_PHASE).unwrap();
        let upper = fm_demod_signal(c + w + h, &ctx, &m, DISPERSION_PHASE).unwrap();
        let lower = fm_demod_signal(c - w + h, &ctx, &m, DISPERSION_PHASE).unwrap();
        assert!(upper * centre < 0.0 && lower * centre < 0.0);
    }

    #[test]
    fn off_line_in_phase_output_tracks_doppler_slope() {
        let ctx = ctx_at(0.066);
        let m = ModulationConfig::default();
        let c = ctx.center_shift;
        let far = c + 50e6;
        let with_dip = fm_demod_signal(far, &ctx, &m, 0.0).unwrap();
        let background = fm_demod_signal(far, &ctx.without_dip(), &m, 0.0).unwrap();
        assert!((with_dip - background).abs() < 1e-3 * background.abs().max(1e-12));
        // quadrature has no Doppler contribution
        let q = fm_demod_signal(far, &ctx.without_dip(), &m, DISPERSION_PHASE).unwrap();
        assert!(q.abs() < 1e-14);
    }

    #[test]
    fn unresolved_sidebands_are_rejected() {
        let ctx = ctx_at(0.33);
        let m = ModulationConfig {
            probe_mod_freq: 400e3,
            ..ModulationConfig::default()
        };
        assert!(matches!(
            fm_demod_signal(0.0, &ctx, &m, DISPERSION_PHASE),
            Err(Error::UnresolvedSidebands { .. })
        ));
    }

    #[test]
    fn ram_baseline_matches_analytic_term() {
        let ctx = ctx_at(0.33);
        let far = ctx.center_shift + 30.0 * ctx.hwhm;
        for phase in [0.0, 0.7, 2.0] {
            let m = ModulationConfig {
                ram_depth: 1e-3,
                ram_phase: phase,
                ..ModulationConfig::default()
            };
            let with = fm_demod_signal(far, &ctx, &m, DISPERSION_PHASE).unwrap();
            let without = fm_demod_signal(far, &ctx, &m.with_ram_depth(0.0), DISPERSION_PHASE).unwrap();
            // m * P_dc * cos(ram_phase), P_dc = sum |a_k|^2
            let dc: f64 = field_components(far, &ctx, &m).iter().map(|c| c.norm_sqr()).sum();
            let expected = 1e-3 * dc * phase.cos();
            assert!(((with - without) - expected).abs() < 1e-3 * 1e-3 * dc, "{phase}");
        }
    }

    #[test]
    fn ram_shift_is_linear_and_vanishes_without_ram() {
        let ctx = ctx_at(0.33);
        let base = ModulationConfig::default();
        assert_eq!(ram_lock_shift(&base, &ctx).unwrap(), FrequencyOffset::ZERO);
        for m in [1e-4, 5e-4, 1e-3] {
            let s1 = ram_lock_shift_hz(&base.with_ram_depth(m / 2.0), &ctx).unwrap();
            let s2 = ram_lock_shift_hz(&base.with_ram_depth(m), &ctx).unwrap();
            assert!((s2 / s1 - 2.0).abs() < 0.1, "{m}: {}", s2 / s1);
        }
        let s = ram_lock_shift_hz(&base.with_ram_depth(1e-3), &ctx).unwrap();
        let r = ram_lock_shift_hz(&base.with_ram_depth(1e-5), &ctx).unwrap();
        assert!((r / s - 1e-2).abs() < 1e-3);
        assert!(matches!(
            ram_lock_shift_hz(&base.with_ram_depth(0.5), &ctx),
            Err(Error::NoZeroCrossing(_))
        ));
    }

    #[test]
    fn aom_mode_adds_ram() {
        let m = ModulationConfig {
            mode: ModulationMode::Frequency,
            ram_depth: 1e-4,
            aom_extra_ram_depth: 2e-4,
            ..ModulationConfig::default()
        };
        assert!((m.effective_ram_depth() - 3e-4).abs() < 1e-18);
        let pm = ModulationConfig {
            mode: ModulationMode::Phase,
            ..m
        };
        assert_eq!(pm.effective_ram_depth(), 1e-4);
    }

    fn tone(freq: f64, amp: f64, phase: f64, rate: f64, n: usize) -> TimeSeries {
        let values = (0..n)
            .map(|i| amp * (2.0 * PI * freq * i as f64 / rate + phase).cos())
            .collect();
        TimeSeries::new(values, 1.0 / rate, SeriesKind::Detector).unwrap()
    }

    #[test]
    fn lock_in_recovers_matched_amplitude() {
        let rate = 100e3;
        let cfg = LockInConfig {
            ref_freq: 1e3,
            ref_phase: 0.3,
            time_constant: 10e-3,
        };
        let n = (12.0 * cfg.time_constant * rate) as usize;
        // average the 2f ripple over the last ten reference periods
        let tail_mean = |s: &TimeSeries| s.values()[n - 1000..].iter().sum::<f64>() / 1000.0;
        let out = lock_in(&tone(1e3, 2.0, 0.3, rate, n), &cfg).unwrap();
        let amp = tail_mean(&out);
        assert!((amp / 2.0 - 1.0).abs() < 1e-3, "{amp}");
        let quad = lock_in(&tone(1e3, 2.0, 0.3 + FRAC_PI_2, rate, n), &cfg).unwrap();
        assert!(tail_mean(&quad).abs() < 2e-3);
    }

    #[test]
    fn lock_in_rejects_off_reference_tone() {
        let rate = 100e3;
        let cfg = LockInConfig {
            ref_freq: 1e3,
            ref_phase: 0.0,
            time_constant: 10e-3,
        };
        let n = (20.0 * cfg.time_constant * rate) as usize;
        let off = lock_in(&tone(1e3 + 10.0 / cfg.time_constant, 1.0, 0.0, rate, n), &cfg).unwrap();
        let tail = &off.values()[n / 2..];
        let peak = tail.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        // single pole at w tau = 2 pi 10: |H| = 1/sqrt(1 + (20 pi)^2), -36 dB
        let oracle = 1.0 / (1.0 + (20.0 * PI).powi(2)).sqrt();
        assert!(20.0 * peak.log10() <= -20.0);
        assert!((peak / oracle - 1.0).abs() < 0.1, "{peak} vs {oracle}");
    }

    #[test]
    fn lock_in_is_linear_and_checks_sampling() {
        let rate = 50e3;
        let cfg = LockInConfig {
            ref_freq: 2e3,
            ref_phase: 0.1,
            time_constant: 1e-3,
        };
        let x = tone(2e3, 1.0, 0.2, rate, 2000);
        let y = tone(2.3e3, 0.5, 1.0, rate, 2000);
        let combo = TimeSeries::new(
            x.values()
                .iter()
                .zip(y.values())
                .map(|(a, b)| 3.0 * a - 2.0 * b)
                .collect(),
            x.dt(),
            SeriesKind::Detector,
        )
        .unwrap();
        let lx = lock_in(&x, &cfg).unwrap();
        let ly = lock_in(&y, &cfg).unwrap();
        let lc = lock_in(&combo, &cfg).unwrap();
        for i in 0..lc.len() {
            assert!((lc.values()[i] - (3.0 * lx.values()[i] - 2.0 * ly.values()[i])).abs() < 1e-12);
        }
        let slow = LockInConfig { ref_freq: 20e3, ..cfg };
        assert!(matches!(lock_in(&x, &slow), Err(Error::Undersampled { .. })));
    }

    #[test]
    fn time_domain_agrees_with_analytic() {
        let ctx = ctx_at(0.33);
        let cfg = TimeDomainConfig::default();
        for (ram, det) in [(0.0, 1.0), (1e-3, 1.0), (1e-3, -0.5)] {
            let m = ModulationConfig {
                ram_depth: ram,
                ram_phase: 0.4,
                ..ModulationConfig::default()
            };
            let d = ctx.center_shift + det * ctx.hwhm;
            let analytic = fm_demod_signal(d, &ctx, &m, DISPERSION_PHASE).unwrap();
            let sampled = fm_demod_time_domain(d, &ctx, &m, DISPERSION_PHASE, &cfg, 1).unwrap();
            assert!(
                (sampled / analytic - 1.0).abs() < 0.01,
                "{ram} {det}: {sampled} vs {analytic}"
            );
        }
    }

    #[test]
    fn modulation_transfer_shape() {
        let ctx = ctx_at(0.33);
        let pump = PumpModConfig::default();
        assert!(modulation_transfer_error(0.0, &ctx, &pump, 0.0).abs() < 1e-15);
        let up = modulation_transfer_error(10e3, &ctx, &pump, 0.0);
        let down = modulation_transfer_error(-10e3, &ctx, &pump, 0.0);
        assert!(up > 0.0 && down < 0.0);
        assert!((up + down).abs() < 1e-15);
    }

    fn mt_chain(ctx: LineContext, demod: Demodulation) -> ErrorChain {
        ErrorChain::new(
            ctx,
            ModulationConfig::default(),
            PumpModConfig::default(),
            Discriminator::ModulationTransfer,
            demod,
            0.0,
        )
        .unwrap()
    }

    #[test]
    fn offset_moves_single_demod_zero_by_b_over_slope() {
        let chain = mt_chain(ctx_at(0.33), Demodulation::Single);
        let slope = chain.slope();
        let b = 0.01 * chain.peak_error();
        let shifted = chain.with_background_offset(b);
        let root = shifted.zero_crossing().unwrap();
        let linear = -b / slope;
        assert!((root / linear - 1.0).abs() < 0.01, "{root} vs {linear}");
    }

    #[test]
    fn double_demod_removes_background() {
        let single = mt_chain(ctx_at(0.33), Demodulation::Single);
        let double = single.with_demodulation(Demodulation::Double);
        assert!((double.zero_crossing().unwrap() - single.zero_crossing().unwrap()).abs() < 1e-6);
        let peak = single.peak_error();
        for frac in [0.05, 0.1, 0.3] {
            let b = frac * peak;
            assert!(double.with_background_offset(b).zero_crossing().unwrap().abs() < 1.0);
            assert!(single.with_background_offset(b).zero_crossing().unwrap().abs() > 100.0);
        }
    }

    #[test]
    fn chopped_pump_halves_the_output() {
        let single = mt_chain(ctx_at(0.33), Demodulation::Single);
        let ctx = *single.context();
        let pump = PumpModConfig::default();
        for off in [5e3, 20e3, -30e3] {
            let direct = double_demod_error(off, &ctx, &pump, 0.0);
            let sampled = double_demod_sampled(
                &single.with_background_offset(0.2 * single.peak_error()),
                off,
                200.0,
                5e-6,
                20,
                1000,
            )
            .unwrap();
            let full = single.error(off);
            assert!((sampled / full - 0.5).abs() < 0.01, "{}", sampled / full);
            assert!((direct / modulation_transfer_error(off, &ctx, &pump, 0.0) - 0.5).abs() < 1e-12);
        }
    }
}
