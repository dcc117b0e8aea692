//! Simulation and analysis toolkit for an Ar+ laser locked to narrow
//! saturated-absorption lines of molecular iodine at 501.7 nm.
//!
//! The crate covers the whole chain: line model ([`lineshape`]), FM and
//! modulation-transfer detection ([`sigchain`]), adaptive narrow-band noise
//! cancelling ([`canceller`]), frequency locking ([`servo`]), femtosecond-comb
//! counting ([`comb`]) and stability/repeatability statistics ([`analysis`]).
//! Absolute frequencies are exact integer millihertz ([`freq`]).

pub mod analysis;
pub mod canceller;
pub mod comb;
pub mod error;
pub mod freq;
pub mod lineshape;
pub mod noise;
pub mod servo;
pub mod sigchain;
pub mod special;
pub mod spectral;

pub use error::{Error, Result};
pub use freq::{fractional_offset, freq_from_khz_string, FrequencyOffset, OpticalFrequency, SeriesKind, TimeSeries};
pub use lineshape::{BroadeningModel, CellConditions, HyperfineLine, LineContext, SaturationConfig, ShiftModel};
pub use sigchain::{Demodulation, Discriminator, ErrorChain};
