use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::freq::{FrequencyOffset, OpticalFrequency};
use crate::lineshape::CellConditions;

/// Local linear-regression slope of `(pressure, shift)` samples within
/// `window` of `at`.
pub fn pressure_slope(samples: &[(f64, f64)], at: f64, window: f64) -> Result<f64> {
    let pts: Vec<(f64, f64)> = samples
        .iter()
        .copied()
        .filter(|(p, _)| (p - at).abs() <= window * (1.0 + 1e-12))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientData(format!(
            "{} samples within {window} Pa of {at} Pa",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateScan);
    }
    Ok(sxy / sxx)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementSet {
    pub label: String,
    pub values: Vec<OpticalFrequency>,
    pub conditions: CellConditions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SetSummary {
    pub label: String,
    pub n: usize,
    pub mean: OpticalFrequency,
    pub std_hz: f64,
    pub peak_to_peak: FrequencyOffset,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityReport {
    pub sets: Vec<SetSummary>,
    pub grand_mean: OpticalFrequency,
    pub std_of_set_means_hz: f64,
}

fn div_round(num: i128, den: i128) -> i128 {
    let q = num.div_euclid(den);
    let r = num.rem_euclid(den);
    if 2 * r >= den {
        q + 1
    } else {
        q
    }
}

/// Sample standard deviation of millihertz values, in Hz, independent of
/// input order.
fn sample_std_hz(values: &[i128]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let base = v[0];
    let n = v.len() as i128;
    let sum: i128 = v.iter().map(|x| x - base).sum();
    let mean = sum as f64 / n as f64;
    let ss: f64 = v.iter().map(|x| ((x - base) as f64 - mean).powi(2)).sum();
    (ss / (n - 1) as f64).sqrt() * 1e-3
}

pub fn repeatability(sets: &[MeasurementSet]) -> Result<RepeatabilityReport> {
    if sets.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} measurement sets, need 2",
            sets.len()
        )));
    }
    let mut summaries = Vec::with_capacity(sets.len());
    for s in sets {
        if s.values.is_empty() {
            return Err(Error::InsufficientData(format!("set {:?} is empty", s.label)));
        }
        let mhz: Vec<i128> = s.values.iter().map(|v| v.millihertz()).collect();
        let sum: i128 = mhz.iter().sum();
        let lo = *mhz.iter().min().unwrap_or(&0);
        let hi = *mhz.iter().max().unwrap_or(&0);
        summaries.push(SetSummary {
            label: s.label.clone(),
            n: mhz.len(),
            mean: OpticalFrequency::from_millihertz(div_round(sum, mhz.len() as i128)),
            std_hz: sample_std_hz(&mhz),
            peak_to_peak: FrequencyOffset::from_millihertz(hi - lo),
        });
    }
    let means: Vec<i128> = summaries.iter().map(|s| s.mean.millihertz()).collect();
    let total: i128 = means.iter().sum();
    Ok(RepeatabilityReport {
        grand_mean: OpticalFrequency::from_millihertz(div_round(total, means.len() as i128)),
        std_of_set_means_hz: sample_std_hz(&means),
        sets: summaries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lineshape::{center_shift, BroadeningModel, HyperfineLine, ShiftModel};

    #[test]
    fn linear_model_slope_is_exact() {
        let s: Vec<(f64, f64)> = (0..11)
            .map(|i| (0.3 + 0.01 * i as f64, -2.5e4 * (0.3 + 0.01 * i as f64)))
            .collect();
        assert!((pressure_slope(&s, 0.35, 0.05).unwrap() + 2.5e4).abs() < 1e-6);
        assert!(matches!(
            pressure_slope(&s[..2], 0.3, 0.05),
            Err(Error::InsufficientData(_))
        ));
    }

    fn model_samples(around: f64) -> Vec<(f64, f64)> {
        let line = HyperfineLine::default();
        let b = BroadeningModel::default();
        let m = ShiftModel::default();
        (-10..=10)
            .map(|i| around + 0.005 * i as f64)
            .map(|p| {
                let c = CellConditions::default().with_pressure(p);
                (p, center_shift(&m, &b, &line, &c).unwrap().as_hz_f64())
            })
            .collect()
    }

    #[test]
    fn default_shift_slope() {
        let slope = pressure_slope(&model_samples(0.33), 0.33, 0.05).unwrap();
        assert!((slope / -38.4e3 - 1.0).abs() < 0.02, "{slope}");
        let high = pressure_slope(&model_samples(0.6), 0.6, 0.05).unwrap();
        assert!(high.abs() < 38.4e3);
    }

    fn set(label: &str, mhz: &[i128]) -> MeasurementSet {
        MeasurementSet {
            label: label.into(),
            values: mhz.iter().map(|m| OpticalFrequency::from_millihertz(*m)).collect(),
            conditions: CellConditions::default(),
        }
    }

    #[test]
    fn closed_forms() {
        let r = repeatability(&[set("a", &[5, 5]), set("b", &[5])]).unwrap();
        assert_eq!(r.std_of_set_means_hz, 0.0);
        let r = repeatability(&[set("a", &[0]), set("b", &[1_000_000])]).unwrap();
        assert!((r.std_of_set_means_hz - 1000.0 / 2f64.sqrt()).abs() < 1e-9);
        assert!(repeatability(&[set("a", &[0])]).is_err());
        assert!(repeatability(&[set("a", &[0]), set("b", &[])]).is_err());
    }

    #[test]
    fn reorder_invariant() {
        let base: i128 = 597_366_498_654_620_000;
        let sets = vec![
            set("d1", &[base + 123, base - 77_000, base + 5]),
            set("d2", &[base + 900_001]),
            set("d3", &[base - 1_200_333, base - 1_100_000]),
            set("d4", &[base + 2_000_000, base + 1_999_999, base + 1]),
        ];
        let a = repeatability(&sets).unwrap();
        let mut rev = sets.clone();
        rev.reverse();
        let b = repeatability(&rev).unwrap();
        assert_eq!(a.grand_mean, b.grand_mean);
        assert_eq!(a.std_of_set_means_hz, b.std_of_set_means_hz);
        assert_eq!(a.sets[0].peak_to_peak, FrequencyOffset::from_millihertz(77_123));
    }
}
