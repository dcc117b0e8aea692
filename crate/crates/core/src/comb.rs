//! Femtosecond-comb measurement: mode grid, the f0-cancelling beat/mix,
//! gated counting, mode-number determination and absolute reconstruction.
//!
//! The mixer removes the carrier-envelope offset, so the laser is compared
//! against the grid `p * f_rep` and f0 drops out of every result.

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::freq::{FrequencyOffset, OpticalFrequency, SeriesKind, TimeSeries};
use crate::noise;

/// Largest rounding residual accepted when determining the mode number.
pub const MODE_RESIDUAL_LIMIT: f64 = 0.4;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombConfig {
    pub f_rep: FrequencyOffset,
    /// Carrier-envelope offset (arbitrary default).
    pub f_0: FrequencyOffset,
    /// Fractional instability of the RF reference at 1 s.
    pub ref_instability_1s: f64,
    /// Repetition-rate change used to find the mode number.
    pub f_rep_step: FrequencyOffset,
}

impl Default for CombConfig {
    fn default() -> Self {
        Self {
            f_rep: FrequencyOffset::from_hz(1_000_000_000),
            f_0: FrequencyOffset::from_hz(140_000_000),
            ref_instability_1s: 7.2e-14,
            f_rep_step: FrequencyOffset::from_hz(1_000),
        }
    }
}

impl CombConfig {
    pub fn validate(&self) -> Result<()> {
        let rep = self.f_rep.millihertz();
        require(rep > 0, "f_rep", self.f_rep.as_hz_f64(), "> 0")?;
        let f0 = self.f_0.millihertz();
        require((0..rep).contains(&f0), "f_0", self.f_0.as_hz_f64(), "in [0, f_rep)")?;
        require(
            self.ref_instability_1s >= 0.0,
            "ref_instability_1s",
            self.ref_instability_1s,
            ">= 0",
        )
    }

    pub fn with_f_rep(self, f_rep: FrequencyOffset) -> Self {
        Self { f_rep, ..self }
    }

    /// Same comb with the repetition rate raised by `f_rep_step`.
    pub fn stepped(self) -> Self {
        self.with_f_rep(self.f_rep + self.f_rep_step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CounterConfig {
    /// s
    pub gate: f64,
    /// Hz
    pub resolution: f64,
    /// s
    pub dead_time: f64,
}

impl Default for CounterConfig {
    fn default() -> Self {
        Self {
            gate: 1.0,
            resolution: 1e-3,
            dead_time: 0.0,
        }
    }
}

impl CounterConfig {
    pub fn validate(&self) -> Result<()> {
        require(self.gate > 0.0, "gate", self.gate, "> 0")?;
        require(self.resolution >= 1e-3, "resolution", self.resolution, ">= 1 mHz")?;
        require(self.dead_time >= 0.0, "dead_time", self.dead_time, ">= 0")
    }
}

/// Frequency of comb mode `p`: `f_0 + p * f_rep`, exact.
pub fn mode_freq(p: u64, comb: &CombConfig) -> Result<OpticalFrequency> {
    comb.f_rep
        .millihertz()
        .checked_mul(p as i128)
        .and_then(|x| x.checked_add(comb.f_0.millihertz()))
        .map(OpticalFrequency::from_millihertz)
        .ok_or(Error::Overflow)
}

/// Mode index and signed mixer output for a laser against the f0-free grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Beat {
    pub p: u64,
    pub mixed: FrequencyOffset,
}

/// `p = floor(laser / f_rep + 1/2)`, `mixed = laser - p * f_rep`.
pub fn beat_and_mix(laser: OpticalFrequency, comb: &CombConfig) -> Result<Beat> {
    comb.validate()?;
    let rep = comb.f_rep.millihertz();
    let nu = laser.millihertz();
    require(nu >= rep, "laser", laser.as_hz_f64(), "within the comb span")?;
    let p = (nu + rep / 2).div_euclid(rep);
    let mixed = nu - p * rep;
    Ok(Beat {
        p: u64::try_from(p).map_err(|_| Error::Overflow)?,
        mixed: FrequencyOffset::from_millihertz(mixed),
    })
}

/// Beat of `laser` against a known mode `p`, as when f_rep is stepped while
/// the same mode is tracked. The mixer output must stay within `f_rep / 2`.
pub fn beat_on_mode(laser: OpticalFrequency, p: u64, comb: &CombConfig) -> Result<Beat> {
    comb.validate()?;
    let rep = comb.f_rep.millihertz();
    let mixed = laser.millihertz() - rep.checked_mul(p as i128).ok_or(Error::Overflow)?;
    require(
        2 * mixed.abs() <= rep,
        "f_rep_step",
        comb.f_rep_step.as_hz_f64(),
        "small enough to keep the beat within f_rep / 2",
    )?;
    Ok(Beat {
        p,
        mixed: FrequencyOffset::from_millihertz(mixed),
    })
}

/// What a sign-blind counter reports.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CounterReading {
    pub magnitude: FrequencyOffset,
    pub negative: bool,
}

impl CounterReading {
    pub fn from_signed(mixed: FrequencyOffset) -> Self {
        Self {
            magnitude: mixed.abs(),
            negative: mixed.millihertz() < 0,
        }
    }

    pub fn signed(self) -> FrequencyOffset {
        if self.negative {
            -self.magnitude
        } else {
            self.magnitude
        }
    }
}

/// Sign of the mixer output from two magnitudes, before and after raising
/// f_rep by a step small enough that `p * step < |mixed|`. Raising f_rep
/// lowers a positive beat and deepens a negative one.
pub fn resolve_sign(before: FrequencyOffset, after: FrequencyOffset) -> Result<bool> {
    match after.cmp(&before) {
        std::cmp::Ordering::Less => Ok(false),
        std::cmp::Ordering::Greater => Ok(true),
        std::cmp::Ordering::Equal => Err(Error::InvalidParameter {
            name: "f_rep_step",
            value: 0.0,
            requirement: "large enough to change the beat magnitude",
        }),
    }
}

/// Count one value per gate. `laser` holds laser frequency fluctuations (Hz)
/// on top of `beat`; the reference noise acts on the `p * f_rep` term.
pub fn count(
    beat: Beat,
    laser: &TimeSeries,
    comb: &CombConfig,
    counter: &CounterConfig,
    seed: u64,
) -> Result<TimeSeries> {
    comb.validate()?;
    counter.validate()?;
    let rate = laser.sample_rate();
    let per_gate = counter.gate * rate;
    let per_dead = counter.dead_time * rate;
    let gate_len = per_gate.round() as usize;
    let dead_len = per_dead.round() as usize;
    require(
        gate_len >= 1 && (per_gate - gate_len as f64).abs() < 1e-6 && (per_dead - dead_len as f64).abs() < 1e-6,
        "gate",
        counter.gate,
        "a whole number of laser samples",
    )?;
    let period = gate_len + dead_len;
    let gates = if laser.len() >= gate_len {
        (laser.len() - gate_len) / period + 1
    } else {
        0
    };
    if gates == 0 {
        return Err(Error::TooShort(format!(
            "{} s of laser data for a {} s gate",
            laser.duration(),
            counter.gate
        )));
    }
    let mut rng = noise::rng(noise::derive_seed(seed, 30));
    let carrier = comb.f_rep.as_hz_f64() * beat.p as f64;
    let sigma_ref = comb.ref_instability_1s / counter.gate.sqrt();
    let mixed = beat.mixed.as_hz_f64();
    let mut values = Vec::with_capacity(gates);
    for g in 0..gates {
        let start = g * period;
        let window = &laser.values()[start..start + gate_len];
        let avg = window.iter().sum::<f64>() / gate_len as f64;
        let y = if sigma_ref > 0.0 {
            sigma_ref * noise::gaussian(&mut rng)
        } else {
            0.0
        };
        let raw = mixed + avg - carrier * y;
        values.push((raw / counter.resolution).round() * counter.resolution);
    }
    TimeSeries::new(values, period as f64 / rate, SeriesKind::CountedHertz)
}

/// Mean of a counted series with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CountMean {
    pub mean: f64,
    pub std_error: f64,
}

impl CountMean {
    pub fn of(series: &TimeSeries) -> Self {
        let v = series.values();
        let n = v.len() as f64;
        let mean = series.mean();
        let std_error = if v.len() > 1 {
            (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
        } else {
            0.0
        };
        Self { mean, std_error }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModeNumber {
    pub p: u64,
    pub residual: f64,
}

/// Mode number from counts at two repetition rates:
/// `p = round((c_a - c_b) / (f_rep_b - f_rep_a))`.
pub fn determine_mode_number(
    counts_a: CountMean,
    counts_b: CountMean,
    f_rep_a: FrequencyOffset,
    f_rep_b: FrequencyOffset,
) -> Result<ModeNumber> {
    let delta = (f_rep_b - f_rep_a).as_hz_f64();
    require(delta != 0.0, "f_rep_step", delta, "non-zero")?;
    let estimate = (counts_a.mean - counts_b.mean) / delta;
    let p = estimate.round();
    let residual = (estimate - p).abs();
    let sigma = counts_a.std_error.hypot(counts_b.std_error);
    let margin_ok = delta.abs() >= 2.0 * sigma / MODE_RESIDUAL_LIMIT;
    if !margin_ok || residual >= MODE_RESIDUAL_LIMIT || p < 1.0 {
        return Err(Error::AmbiguousModeNumber { residual, margin_ok });
    }
    Ok(ModeNumber { p: p as u64, residual })
}

/// `p * f_rep + counted_mean`, the mean rounded to the millihertz.
pub fn reconstruct(counted_mean: f64, p: u64, comb: &CombConfig) -> Result<OpticalFrequency> {
    let grid = comb.f_rep.millihertz().checked_mul(p as i128).ok_or(Error::Overflow)?;
    let mean = FrequencyOffset::from_hz_f64(counted_mean)?;
    OpticalFrequency::from_millihertz(grid)
        .checked_add_offset(mean)
        .ok_or(Error::Overflow)
}
