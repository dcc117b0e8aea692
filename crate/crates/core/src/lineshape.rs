//! The a7 hyperfine line: pressure broadening, line-centre shifts and the
//! saturated-absorption profile on its Doppler background.
//!
//! Calibration anchors: HWHM 32 kHz at 0.066 Pa and 45 kHz at 0.33 Pa; a local
//! pressure sensitivity of -38.4 kHz/Pa at 0.33 Pa; about 1 kHz of shift per
//! factor of two in probe power.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{require, Error, Result};
use crate::freq::{FrequencyOffset, OpticalFrequency};

const BOLTZMANN: f64 = 1.380_649e-23;
const ATOMIC_MASS: f64 = 1.660_539_066_60e-27;
const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Molecular mass of 127I2 used for the Doppler width.
pub const IODINE_MASS_U: f64 = 254.0;

/// Nominal a7 centre used for defaults (the measured value).
pub const A7_CENTER_KHZ: &str = "597366498654.62";

/// Gaussian Doppler standard deviation `f0 * sqrt(kT / M c^2)`.
pub fn doppler_sigma(center_hz: f64, temperature_k: f64, mass_u: f64) -> f64 {
    center_hz * (BOLTZMANN * temperature_k / (mass_u * ATOMIC_MASS * SPEED_OF_LIGHT.powi(2))).sqrt()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HyperfineLine {
    pub unperturbed_center: OpticalFrequency,
    /// Hz
    pub natural_hwhm: f64,
    /// Excited-state decay rate, s^-1.
    pub gamma_e: f64,
    /// Ground-state decay rate, s^-1.
    pub gamma_g: f64,
    /// Hz
    pub doppler_sigma: f64,
}

impl Default for HyperfineLine {
    /// Unperturbed centre placed so that the shifted centre at the default
    /// cell conditions is the measured a7 frequency.
    fn default() -> Self {
        let observed = OpticalFrequency::from_khz_str(A7_CENTER_KHZ).expect("valid constant");
        let raw = Self::with_center(observed);
        let broadening = BroadeningModel::default();
        let shift = ShiftModel::default();
        raw.anchored(observed, &shift, &broadening, &CellConditions::default())
            .expect("default line is consistent")
    }
}

impl HyperfineLine {
    /// Default rates and widths around an explicit unperturbed centre.
    pub fn with_center(unperturbed_center: OpticalFrequency) -> Self {
        // (gamma_e + gamma_g) / 4 pi = 10 kHz with gamma_e / gamma_g = 4
        let total = 4.0 * PI * 10e3;
        Self {
            unperturbed_center,
            natural_hwhm: 10e3,
            gamma_e: 0.8 * total,
            gamma_g: 0.2 * total,
            doppler_sigma: doppler_sigma(unperturbed_center.as_hz_f64(), 300.0, IODINE_MASS_U),
        }
    }

    /// Same line with the unperturbed centre moved so that the shifted centre
    /// under `cond` equals `observed`.
    pub fn anchored(
        &self,
        observed: OpticalFrequency,
        shift: &ShiftModel,
        broadening: &BroadeningModel,
        cond: &CellConditions,
    ) -> Result<Self> {
        let s = center_shift(shift, broadening, self, cond)?;
        Ok(Self {
            unperturbed_center: observed - s,
            ..self.clone()
        })
    }

    /// Unperturbed centre plus the shift under `cond`, to the millihertz.
    pub fn shifted_center(
        &self,
        shift: &ShiftModel,
        broadening: &BroadeningModel,
        cond: &CellConditions,
    ) -> Result<OpticalFrequency> {
        Ok(self.unperturbed_center + center_shift(shift, broadening, self, cond)?)
    }

    pub fn validate(&self) -> Result<()> {
        require(self.natural_hwhm > 0.0, "natural_hwhm", self.natural_hwhm, "> 0")?;
        require(self.gamma_e >= 0.0, "gamma_e", self.gamma_e, ">= 0")?;
        require(self.gamma_g >= 0.0, "gamma_g", self.gamma_g, ">= 0")?;
        require(self.doppler_sigma > 0.0, "doppler_sigma", self.doppler_sigma, "> 0")
    }

    /// `(gamma_e - gamma_g) / (gamma_e + gamma_g)`.
    pub fn decay_asymmetry(&self) -> Result<f64> {
        let sum = self.gamma_e + self.gamma_g;
        if sum == 0.0 {
            return Err(Error::UndefinedDecayRatio);
        }
        Ok((self.gamma_e - self.gamma_g) / sum)
    }
}

/// Pressure broadening `hwhm(P) = zero_pressure_hwhm + pressure_broadening * P`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BroadeningModel {
    /// Hz; transit, natural and residual contributions.
    pub zero_pressure_hwhm: f64,
    /// Hz/Pa
    pub pressure_broadening: f64,
}

impl BroadeningModel {
    /// The unique affine model through two (pressure, HWHM) points.
    pub fn through(p1: f64, w1: f64, p2: f64, w2: f64) -> Result<Self> {
        require(p1 != p2, "anchor pressures", p1, "distinct")?;
        let k = (w2 - w1) / (p2 - p1);
        let model = Self {
            zero_pressure_hwhm: w1 - k * p1,
            pressure_broadening: k,
        };
        require(k > 0.0, "pressure_broadening", k, "> 0 (width grows with pressure)")?;
        require(
            model.zero_pressure_hwhm > 0.0,
            "zero_pressure_hwhm",
            model.zero_pressure_hwhm,
            "> 0",
        )?;
        Ok(model)
    }

    pub fn hwhm_at(&self, pressure: f64) -> Result<f64> {
        require(pressure >= 0.0, "pressure", pressure, ">= 0")?;
        Ok(self.zero_pressure_hwhm + self.pressure_broadening * pressure)
    }
}

impl Default for BroadeningModel {
    fn default() -> Self {
        Self::through(0.066, 32e3, 0.33, 45e3).expect("anchors are consistent")
    }
}

pub fn hwhm(model: &BroadeningModel, cond: &CellConditions) -> Result<f64> {
    model.hwhm_at(cond.pressure)
}

/// Line-centre shift `c_lin P + A r / hwhm(P) + s_pow sign log2(P_probe / P_ref)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ShiftModel {
    /// Hz/Pa
    pub linear_coeff: f64,
    /// Hz^2; multiplies `r / hwhm`.
    pub nonlinear_amplitude: f64,
    /// Hz per factor of two in probe power.
    pub power_coeff: f64,
    /// +1 or -1.
    pub power_sign: f64,
    /// W
    pub reference_probe_power: f64,
}

impl ShiftModel {
    /// Splits a target local slope at `pressure` into a linear part
    /// (`linear_fraction`) and the nonlinear `1/hwhm` part.
    pub fn calibrated(
        broadening: &BroadeningModel,
        asymmetry: f64,
        pressure: f64,
        target_slope: f64,
        linear_fraction: f64,
    ) -> Result<Self> {
        require(
            asymmetry != 0.0 || linear_fraction == 1.0,
            "decay asymmetry",
            asymmetry,
            "non-zero unless the shift is purely linear",
        )?;
        let w = broadening.hwhm_at(pressure)?;
        let linear = linear_fraction * target_slope;
        let nonlinear_slope = (1.0 - linear_fraction) * target_slope;
        // d/dP [A r / w(P)] = -A r k / w^2
        let amplitude = if asymmetry == 0.0 {
            0.0
        } else {
            -nonlinear_slope * w * w / (asymmetry * broadening.pressure_broadening)
        };
        Ok(Self {
            linear_coeff: linear,
            nonlinear_amplitude: amplitude,
            power_coeff: 1e3,
            power_sign: -1.0,
            reference_probe_power: 400e-6,
        })
    }

    /// Analytic `d shift / dP`.
    pub fn pressure_slope(&self, broadening: &BroadeningModel, asymmetry: f64, pressure: f64) -> Result<f64> {
        let w = broadening.hwhm_at(pressure)?;
        Ok(self.linear_coeff - self.nonlinear_amplitude * asymmetry * broadening.pressure_broadening / (w * w))
    }

    /// Shift in Hz as a float, for sweeps and derivatives.
    pub fn shift_hz(&self, broadening: &BroadeningModel, line: &HyperfineLine, cond: &CellConditions) -> Result<f64> {
        require(cond.pressure > 0.0, "pressure", cond.pressure, "> 0")?;
        require(cond.probe_power > 0.0, "probe_power", cond.probe_power, "> 0")?;
        let r = line.decay_asymmetry()?;
        let w = broadening.hwhm_at(cond.pressure)?;
        let power = self.power_coeff * self.power_sign * (cond.probe_power / self.reference_probe_power).log2();
        Ok(self.linear_coeff * cond.pressure + self.nonlinear_amplitude * r / w + power)
    }
}

impl Default for ShiftModel {
    fn default() -> Self {
        let line = HyperfineLine::with_center(OpticalFrequency::ZERO);
        let r = line.decay_asymmetry().expect("default rates are non-zero");
        Self::calibrated(&BroadeningModel::default(), r, 0.33, -38.4e3, 0.6).expect("default calibration")
    }
}

/// Shift of the line centre, rounded to the millihertz.
pub fn center_shift(
    model: &ShiftModel,
    broadening: &BroadeningModel,
    line: &HyperfineLine,
    cond: &CellConditions,
) -> Result<FrequencyOffset> {
    FrequencyOffset::from_hz_f64(model.shift_hz(broadening, line, cond)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CellConditions {
    /// Pa
    pub pressure: f64,
    /// W
    pub probe_power: f64,
    /// W
    pub pump_power: f64,
    /// m
    pub beam_diameter: f64,
    /// m
    pub cell_length: f64,
}

impl Default for CellConditions {
    fn default() -> Self {
        Self {
            pressure: 0.33,
            probe_power: 400e-6,
            pump_power: 2.7e-3,
            beam_diameter: 6e-3,
            cell_length: 4.0,
        }
    }
}

impl CellConditions {
    pub fn validate(&self) -> Result<()> {
        require(self.pressure > 0.0, "pressure", self.pressure, "> 0")?;
        require(self.probe_power > 0.0, "probe_power", self.probe_power, "> 0")?;
        require(self.pump_power > 0.0, "pump_power", self.pump_power, "> 0")?;
        require(self.beam_diameter > 0.0, "beam_diameter", self.beam_diameter, "> 0")?;
        require(self.cell_length > 0.0, "cell_length", self.cell_length, "> 0")
    }

    pub fn with_pressure(self, pressure: f64) -> Self {
        Self { pressure, ..self }
    }

    pub fn with_probe_power(self, probe_power: f64) -> Self {
        Self { probe_power, ..self }
    }
}

/// Everything the detection chain needs to know about the line at fixed
/// conditions. Detunings elsewhere are measured from the unperturbed centre.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LineContext {
    /// Hz, shifted centre minus unperturbed centre.
    pub center_shift: f64,
    pub hwhm: f64,
    pub doppler_sigma: f64,
    /// Lamb-dip depth as a fraction of the Doppler peak.
    pub dip_contrast: f64,
    /// Intensity optical depth at the Doppler peak.
    pub optical_depth: f64,
}

/// Dip and absorption-depth settings that are not part of the line itself.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SaturationConfig {
    pub dip_contrast: f64,
    pub optical_depth: f64,
}

impl Default for SaturationConfig {
    fn default() -> Self {
        Self {
            dip_contrast: 0.01,
            optical_depth: 1.0,
        }
    }
}

impl LineContext {
    pub fn new(
        line: &HyperfineLine,
        broadening: &BroadeningModel,
        shift: &ShiftModel,
        saturation: &SaturationConfig,
        cond: &CellConditions,
    ) -> Result<Self> {
        line.validate()?;
        cond.validate()?;
        require(
            (0.0..1.0).contains(&saturation.dip_contrast),
            "dip_contrast",
            saturation.dip_contrast,
            "in [0, 1)",
        )?;
        require(
            saturation.optical_depth >= 0.0,
            "optical_depth",
            saturation.optical_depth,
            ">= 0",
        )?;
        Ok(Self {
            center_shift: shift.shift_hz(broadening, line, cond)?,
            hwhm: broadening.hwhm_at(cond.pressure)?,
            doppler_sigma: line.doppler_sigma,
            dip_contrast: saturation.dip_contrast,
            optical_depth: saturation.optical_depth,
        })
    }

    /// Normalised absorption: Doppler Gaussian minus the Lorentzian Lamb dip.
    pub fn absorption(&self, detuning: f64) -> f64 {
        let d = detuning - self.center_shift;
        let x = d / self.hwhm;
        (-0.5 * (d / self.doppler_sigma).powi(2)).exp() - self.dip_contrast / (1.0 + x * x)
    }

    /// Dispersion partner of the Lamb dip, `-contrast x / (1 + x^2)`.
    pub fn dispersion(&self, detuning: f64) -> f64 {
        let x = (detuning - self.center_shift) / self.hwhm;
        -self.dip_contrast * x / (1.0 + x * x)
    }

    /// Same line with the pump blocked: no Lamb dip.
    pub fn without_dip(&self) -> Self {
        Self {
            dip_contrast: 0.0,
            ..*self
        }
    }
}

/// Absorption and dispersion over a list of detunings (Hz from the unperturbed centre).
pub fn saturation_profile(ctx: &LineContext, detunings: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let absorption = detunings.iter().map(|&d| ctx.absorption(d)).collect();
    let dispersion = detunings.iter().map(|&d| ctx.dispersion(d)).collect();
    (absorption, dispersion)
}
