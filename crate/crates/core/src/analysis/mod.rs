//! Statistics and fitting: Allan deviation, dispersion lineshape fits,
//! pressure-shift regression and set-wise repeatability.

mod allan;
mod fit;
mod stats;

pub use allan::{allan_deviation, allan_deviation_direct, allan_deviation_with, log_slope, octave_taus, AllanResult};
pub use fit::{dispersion_model, fit_dispersion, DispersionFit, DispersionGuess};
pub use stats::{pressure_slope, repeatability, MeasurementSet, RepeatabilityReport, SetSummary};
