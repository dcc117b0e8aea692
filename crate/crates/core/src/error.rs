use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("cannot parse {0:?} as a decimal kHz frequency")]
    Parse(String),
    #[error("{0:?} has digits below the millihertz")]
    Precision(String),
    #[error("frequency value out of range")]
    Overflow,
    #[error("{name} = {value} is invalid: must be {requirement}")]
    InvalidParameter {
        name: &'static str,
        value: f64,
        requirement: &'static str,
    },
    #[error("reference frequency is zero")]
    ZeroReference,
    #[error("decay-rate asymmetry undefined: both decay rates are zero")]
    UndefinedDecayRatio,
    #[error("modulation at {mod_freq} Hz does not resolve a line of HWHM {hwhm} Hz (needs > 10 x HWHM)")]
    UnresolvedSidebands { mod_freq: f64, hwhm: f64 },
    #[error("no zero crossing within +/-{0} Hz")]
    NoZeroCrossing(f64),
    #[error("sample rate {rate} Hz is too low for a {freq} Hz reference")]
    Undersampled { rate: f64, freq: f64 },
    #[error("adaptive weights diverged at sample {0}")]
    Diverged(usize),
    #[error("record too short: {0}")]
    TooShort(String),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("mode number ambiguous (rounding residual {residual:.3}, margin satisfied: {margin_ok})")]
    AmbiguousModeNumber { residual: f64, margin_ok: bool },
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("fit did not converge after {0} iterations")]
    NonConvergence(usize),
    #[error("degenerate scan: all detunings are equal")]
    DegenerateScan,
}

pub(crate) fn require(cond: bool, name: &'static str, value: f64, requirement: &'static str) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            value,
            requirement,
        })
    }
}
