//! Exact frequency arithmetic and uniformly sampled records.
//!
//! Absolute optical frequencies (~6e14 Hz) and RF quantities share one
//! representation: a signed count of millihertz held in an `i128`. Sums and
//! differences are exact; conversion to `f64` happens only for offsets, where
//! the magnitudes are small enough to be represented without loss.

use std::fmt;
use std::ops::{Add, AddAssign, Mul, Neg, Sub};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{require, Error, Result};

const MHZ_PER_HZ: i128 = 1_000;
const MHZ_PER_KHZ: i128 = 1_000_000;
/// Parsed magnitudes are capped here, far above any physical frequency.
const MAX_MHZ: i128 = 1_000_000_000_000_000_000_000_000_000;

/// Absolute frequency as an exact integer number of millihertz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct OpticalFrequency {
    millihertz: i128,
}

/// Signed frequency difference (beat notes, mixer outputs, shifts), in millihertz.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct FrequencyOffset {
    millihertz: i128,
}

fn round_to_millihertz(hz: f64) -> Result<i128> {
    let scaled = (hz * MHZ_PER_HZ as f64).round();
    if !scaled.is_finite() || scaled.abs() > MAX_MHZ as f64 {
        return Err(Error::Overflow);
    }
    Ok(scaled as i128)
}

/// Parses a decimal string in kHz into millihertz, rejecting sub-mHz digits.
fn parse_khz_millihertz(text: &str) -> Result<i128> {
    let trimmed = text.trim();
    let err = || Error::Parse(text.to_string());
    let (negative, body) = match trimmed.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, trimmed.strip_prefix('+').unwrap_or(trimmed)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    let all_digits = |s: &str| s.bytes().all(|b| b.is_ascii_digit() || b == b'_');
    if !all_digits(int_part) || !all_digits(frac_part) {
        return Err(err());
    }
    let frac: String = frac_part.chars().filter(|c| *c != '_').collect();
    let significant = frac.trim_end_matches('0');
    if significant.len() > 6 {
        return Err(Error::Precision(text.to_string()));
    }
    let mut value: i128 = 0;
    for b in int_part.bytes().filter(|b| *b != b'_') {
        value = value
            .checked_mul(10)
            .and_then(|v| v.checked_add(i128::from(b - b'0')))
            .ok_or(Error::Overflow)?;
    }
    value = value.checked_mul(MHZ_PER_KHZ).ok_or(Error::Overflow)?;
    let mut frac_mhz: i128 = 0;
    for (i, b) in significant.bytes().enumerate() {
        frac_mhz += i128::from(b - b'0') * 10i128.pow(5 - i as u32);
    }
    value += frac_mhz;
    if value > MAX_MHZ {
        return Err(Error::Overflow);
    }
    Ok(if negative { -value } else { value })
}

/// Exact kHz rendering with trailing fractional zeros removed.
fn format_khz_exact(mhz: i128) -> String {
    let sign = if mhz < 0 { "-" } else { "" };
    let abs = mhz.unsigned_abs();
    let int = abs / MHZ_PER_KHZ as u128;
    let frac = abs % MHZ_PER_KHZ as u128;
    if frac == 0 {
        format!("{sign}{int}")
    } else {
        let digits = format!("{frac:06}");
        format!("{sign}{int}.{}", digits.trim_end_matches('0'))
    }
}

/// kHz with two decimals (10 Hz resolution), rounding half away from zero.
fn format_khz_2dp(mhz: i128) -> String {
    let sign = if mhz < 0 { "-" } else { "" };
    let abs = mhz.unsigned_abs();
    let tens_of_hz = (abs + 5_000) / 10_000;
    format!("{sign}{}.{:02}", tens_of_hz / 100, tens_of_hz % 100)
}

/// Hz with three decimals, i.e. the full millihertz value.
fn format_hz_millis(mhz: i128) -> String {
    let sign = if mhz < 0 { "-" } else { "" };
    let abs = mhz.unsigned_abs();
    format!("{sign}{}.{:03}", abs / 1_000, abs % 1_000)
}

macro_rules! millihertz_common {
    ($ty:ident) => {
        impl $ty {
            pub const ZERO: Self = Self { millihertz: 0 };

            pub const fn from_millihertz(millihertz: i128) -> Self {
                Self { millihertz }
            }

            pub const fn from_hz(hz: i64) -> Self {
                Self {
                    millihertz: hz as i128 * MHZ_PER_HZ,
                }
            }

            /// Nearest millihertz to a floating-point value in Hz.
            pub fn from_hz_f64(hz: f64) -> Result<Self> {
                round_to_millihertz(hz).map(Self::from_millihertz)
            }

            /// Parses a decimal kHz string. At most three sub-Hz digits may be non-zero.
            pub fn from_khz_str(text: &str) -> Result<Self> {
                parse_khz_millihertz(text).map(Self::from_millihertz)
            }

            pub const fn millihertz(self) -> i128 {
                self.millihertz
            }

            pub fn as_hz_f64(self) -> f64 {
                // split keeps the integer-Hz part exact for values below 2^53 Hz
                let hz = self.millihertz.div_euclid(MHZ_PER_HZ);
                let rem = self.millihertz.rem_euclid(MHZ_PER_HZ);
                hz as f64 + rem as f64 / MHZ_PER_HZ as f64
            }

            /// Exact kHz string; inverse of [`Self::from_khz_str`].
            pub fn to_khz_exact(self) -> String {
                format_khz_exact(self.millihertz)
            }

            /// Report format: kHz with two decimals.
            pub fn to_khz_2dp(self) -> String {
                format_khz_2dp(self.millihertz)
            }

            /// Data-file format: Hz with millihertz resolution.
            pub fn to_hz_millis(self) -> String {
                format_hz_millis(self.millihertz)
            }

            pub fn checked_add_offset(self, rhs: FrequencyOffset) -> Option<Self> {
                self.millihertz
                    .checked_add(rhs.millihertz)
                    .map(Self::from_millihertz)
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{} kHz", self.to_khz_exact())
            }
        }

        impl FromStr for $ty {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                Self::from_khz_str(s)
            }
        }

        impl Serialize for $ty {
            fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
                s.serialize_str(&self.to_khz_exact())
            }
        }

        impl<'de> Deserialize<'de> for $ty {
            fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
                let text = String::deserialize(d)?;
                Self::from_khz_str(&text).map_err(serde::de::Error::custom)
            }
        }

        impl Add<FrequencyOffset> for $ty {
            type Output = Self;
            fn add(self, rhs: FrequencyOffset) -> Self {
                Self::from_millihertz(self.millihertz + rhs.millihertz)
            }
        }

        impl Sub<FrequencyOffset> for $ty {
            type Output = Self;
            fn sub(self, rhs: FrequencyOffset) -> Self {
                Self::from_millihertz(self.millihertz - rhs.millihertz)
            }
        }

        impl AddAssign<FrequencyOffset> for $ty {
            fn add_assign(&mut self, rhs: FrequencyOffset) {
                self.millihertz += rhs.millihertz;
            }
        }
    };
}

millihertz_common!(OpticalFrequency);
millihertz_common!(FrequencyOffset);

impl OpticalFrequency {
    /// Reinterprets the absolute value as an offset from zero.
    pub const fn as_offset(self) -> FrequencyOffset {
        FrequencyOffset::from_millihertz(self.millihertz)
    }
}

impl FrequencyOffset {
    pub const fn abs(self) -> Self {
        Self::from_millihertz(self.millihertz.abs())
    }

    pub const fn signum(self) -> i32 {
        self.millihertz.signum() as i32
    }
}

impl Sub for OpticalFrequency {
    type Output = FrequencyOffset;
    fn sub(self, rhs: Self) -> FrequencyOffset {
        FrequencyOffset::from_millihertz(self.millihertz - rhs.millihertz)
    }
}

impl Neg for FrequencyOffset {
    type Output = Self;
    fn neg(self) -> Self {
        Self::from_millihertz(-self.millihertz)
    }
}

impl Mul<i64> for FrequencyOffset {
    type Output = Self;
    fn mul(self, rhs: i64) -> Self {
        Self::from_millihertz(self.millihertz * i128::from(rhs))
    }
}

/// Parses a decimal kHz string into an absolute frequency.
pub fn freq_from_khz_string(text: &str) -> Result<OpticalFrequency> {
    OpticalFrequency::from_khz_str(text)
}

/// `(f - reference) / reference`, with the difference taken exactly.
pub fn fractional_offset(f: OpticalFrequency, reference: OpticalFrequency) -> Result<f64> {
    if reference.millihertz == 0 {
        return Err(Error::ZeroReference);
    }
    let diff = (f - reference).millihertz;
    Ok(diff as f64 / reference.millihertz as f64)
}

/// What a [`TimeSeries`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SeriesKind {
    /// Raw photodetector samples.
    Detector,
    /// Lock-in output.
    Demodulated,
    /// Dimensionless fractional frequency `y`.
    FractionalFrequency,
    /// Per-gate counter readings in Hz.
    CountedHertz,
    /// Laser frequency offset in Hz from a nominal value.
    FrequencyOffset,
}

impl SeriesKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SeriesKind::Detector => "detector",
            SeriesKind::Demodulated => "demodulated",
            SeriesKind::FractionalFrequency => "fractional-frequency",
            SeriesKind::CountedHertz => "counted-hertz",
            SeriesKind::FrequencyOffset => "frequency-offset",
        }
    }
}

/// Uniformly sampled real record. `dt` is the sample interval or, for counted
/// records, the gate period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    dt: f64,
    kind: SeriesKind,
}

impl TimeSeries {
    pub fn new(values: Vec<f64>, dt: f64, kind: SeriesKind) -> Result<Self> {
        require(!values.is_empty(), "series length", 0.0, "at least 1")?;
        require(dt > 0.0 && dt.is_finite(), "dt", dt, "positive and finite")?;
        Ok(Self { values, dt, kind })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn sample_rate(&self) -> f64 {
        1.0 / self.dt
    }

    pub fn kind(&self) -> SeriesKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.values.len() as f64 * self.dt
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Same samples, relabelled and rescaled.
    pub fn map(&self, kind: SeriesKind, f: impl Fn(f64) -> f64) -> Self {
        Self {
            values: self.values.iter().map(|&v| f(v)).collect(),
            dt: self.dt,
            kind,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MEASURED_KHZ: &str = "597366498654.62";

    #[test]
    fn parses_the_absolute_frequency() {
        let f = freq_from_khz_string(MEASURED_KHZ).unwrap();
        assert_eq!(f.millihertz(), 597_366_498_654_620_000);
        assert_eq!(freq_from_khz_string("0").unwrap().millihertz(), 0);
        assert_eq!(freq_from_khz_string("0.000001").unwrap().millihertz(), 1);
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(freq_from_khz_string("abc"), Err(Error::Parse(_))));
        assert!(matches!(freq_from_khz_string(""), Err(Error::Parse(_))));
        assert!(matches!(freq_from_khz_string("1.2.3"), Err(Error::Parse(_))));
        assert!(matches!(freq_from_khz_string("1.0000001"), Err(Error::Precision(_))));
        // trailing zeros below the millihertz are harmless
        assert_eq!(freq_from_khz_string("1.0000010").unwrap().millihertz(), 1_000_001);
        assert!(matches!(
            freq_from_khz_string("9999999999999999999999999999999999"),
            Err(Error::Overflow)
        ));
    }

    #[test]
    fn report_formats() {
        let f = freq_from_khz_string(MEASURED_KHZ).unwrap();
        assert_eq!(f.to_khz_2dp(), "597366498654.62");
        assert_eq!(f.to_khz_exact(), "597366498654.62");
        assert_eq!(f.to_hz_millis(), "597366498654620.000");
        let g = OpticalFrequency::from_millihertz(597_366_498_654_625_000);
        assert_eq!(g.to_khz_2dp(), "597366498654.63");
        assert_eq!(FrequencyOffset::from_millihertz(-1).to_hz_millis(), "-0.001");
        assert_eq!(FrequencyOffset::from_millihertz(-1).to_khz_exact(), "-0.000001");
    }

    #[test]
    fn fractional_offset_examples() {
        let reference = OpticalFrequency::from_hz(597_366_498_654_620);
        assert_eq!(fractional_offset(reference, reference).unwrap(), 0.0);
        // 430.1 Hz: exact integer difference, then division; 430.1/597366498654620
        let f = reference + FrequencyOffset::from_millihertz(430_100);
        let y = fractional_offset(f, reference).unwrap();
        assert!((y - 7.2e-13).abs() < 1e-15, "{y}");
        let expected = 430.1 / 597_366_498_654_620.0;
        assert!((y - expected).abs() <= 1e-15 * expected);
        let g = reference - FrequencyOffset::from_millihertz(1);
        let y = fractional_offset(g, reference).unwrap();
        assert!((y / -1.674e-18 - 1.0).abs() < 0.01, "{y}");
        assert_eq!(
            fractional_offset(reference, OpticalFrequency::ZERO),
            Err(Error::ZeroReference)
        );
    }

    #[test]
    fn time_series_invariants() {
        assert!(TimeSeries::new(vec![], 1.0, SeriesKind::Detector).is_err());
        assert!(TimeSeries::new(vec![1.0], 0.0, SeriesKind::Detector).is_err());
        let ts = TimeSeries::new(vec![1.0, 3.0], 0.5, SeriesKind::CountedHertz).unwrap();
        assert_eq!(ts.duration(), 1.0);
        assert_eq!(ts.mean(), 2.0);
    }

    proptest! {
        #[test]
        fn add_sub_exact(a in -(1i128 << 100)..(1i128 << 100), b in -(1i128 << 100)..(1i128 << 100)) {
            let fa = OpticalFrequency::from_millihertz(a);
            let ob = FrequencyOffset::from_millihertz(b);
            prop_assert_eq!((fa + ob) - ob, fa);
            prop_assert_eq!((fa + ob) - fa, ob);
        }

        #[test]
        fn khz_format_round_trips(mhz in -(10i128.pow(24))..10i128.pow(24)) {
            let f = OpticalFrequency::from_millihertz(mhz);
            prop_assert_eq!(freq_from_khz_string(&f.to_khz_exact()).unwrap(), f);
        }

        #[test]
        fn fractional_offset_antisymmetric(offset in -1_000_000_000i128..1_000_000_000) {
            let reference = OpticalFrequency::from_hz(597_366_498_654_620);
            let d = FrequencyOffset::from_millihertz(offset);
            let up = fractional_offset(reference + d, reference).unwrap();
            let down = fractional_offset(reference - d, reference).unwrap();
            prop_assert!((up + down).abs() <= 1e-30);
        }

        #[test]
        fn offset_round_trip_loses_under_a_millihertz(offset in -1_000_000_000_000i128..1_000_000_000_000) {
            let reference = OpticalFrequency::from_hz(597_366_498_654_620);
            let f = reference + FrequencyOffset::from_millihertz(offset);
            let y = fractional_offset(f, reference).unwrap();
            let back_hz = y * reference.as_hz_f64();
            let back = reference + FrequencyOffset::from_hz_f64(back_hz).unwrap();
            prop_assert!((back - f).millihertz().abs() <= 1);
        }
    }
}
