//! Scenario configuration: one TOML file with a section per component,
//! `--set section.key=value` overrides, unknown-key warnings with
//! suggestions, range validation and a canonical hash.

use std::path::Path;

use iodine_core::canceller::{IntensityNoiseScenario, RamCancelScenario};
use iodine_core::comb::{CombConfig, CounterConfig};
use iodine_core::lineshape::{BroadeningModel, CellConditions, HyperfineLine, SaturationConfig, ShiftModel};
use iodine_core::servo::{LoopConfig, NoiseModel, PrestabConfig};
use iodine_core::sigchain::{Demodulation, Discriminator, ModulationConfig, PumpModConfig, TimeDomainConfig};
use iodine_core::{Error as CoreError, FrequencyOffset};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use toml::{Table, Value};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{0}")]
    Syntax(String),
    #[error("override {0:?} is not of the form section.key=value")]
    MalformedOverride(String),
    #[error("override of unknown key `{key}`{hint}")]
    UnknownOverride { key: String, hint: String },
    #[error("invalid value: {0}")]
    Type(String),
    #[error("{key}: {message}")]
    Range { key: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ChainConfig {
    pub discriminator: Discriminator,
    pub demodulation: Demodulation,
    /// Pump-independent offset on the first demodulator output.
    pub background_offset: f64,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            discriminator: Discriminator::FmSpectroscopy,
            demodulation: Demodulation::Double,
            background_offset: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanConfig {
    pub pressure: f64,
    /// Hz either side of the shifted centre.
    pub span: f64,
    pub points: usize,
    /// Peak dispersion signal over the rms of the added noise.
    pub snr: f64,
    pub seeds: usize,
}

impl Default for ScanConfig {
    fn default() -> Self {
        Self {
            pressure: 0.066,
            span: 300e3,
            points: 121,
            snr: 30.0,
            seeds: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LockRunConfig {
    pub gates: usize,
    /// Initial laser detuning from the shifted centre, Hz.
    pub lock_point_offset: f64,
}

impl Default for LockRunConfig {
    fn default() -> Self {
        Self {
            gates: 1000,
            lock_point_offset: 2e3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombMeasureConfig {
    pub gates: usize,
    /// Monte Carlo trials of the mode-number determination.
    pub trials: usize,
    /// Standard error of each count mean in the trials, Hz.
    pub trial_count_sigma: f64,
    pub trial_step: FrequencyOffset,
}

impl Default for CombMeasureConfig {
    fn default() -> Self {
        Self {
            gates: 200,
            trials: 1000,
            trial_count_sigma: 100.0,
            trial_step: FrequencyOffset::from_hz(10_000),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AllanConfig {
    pub gates: usize,
    pub slope_from: f64,
    pub slope_to: f64,
}

impl Default for AllanConfig {
    fn default() -> Self {
        Self {
            gates: 1000,
            slope_from: 1.0,
            slope_to: 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PressureShiftConfig {
    pub at: f64,
    pub window: f64,
    pub step: f64,
    pub high_pressure: f64,
}

impl Default for PressureShiftConfig {
    fn default() -> Self {
        Self {
            at: 0.33,
            window: 0.05,
            step: 0.005,
            high_pressure: 0.6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RepeatabilityConfig {
    pub sets: usize,
    pub values_per_set: usize,
    /// Day-to-day cell pressure scatter, Pa.
    pub pressure_sigma: f64,
    /// Within-day scatter of single measurements, Hz.
    pub within_day_sigma: f64,
    /// Independent synthetic campaigns for the distributional check.
    pub seeds: usize,
    /// Band, Hz, that the median std of set means must fall in.
    pub band_low: f64,
    pub band_high: f64,
}

impl Default for RepeatabilityConfig {
    fn default() -> Self {
        Self {
            sets: 4,
            values_per_set: 10,
            pressure_sigma: 0.022,
            within_day_sigma: 65.0,
            seeds: 200,
            band_low: 500.0,
            band_high: 1200.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullPipelineConfig {
    pub gates: usize,
}

impl Default for FullPipelineConfig {
    fn default() -> Self {
        Self { gates: 1000 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Block length for averaging long records before export.
    pub decimate: usize,
    pub gnuplot: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            decimate: 100,
            gnuplot: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub line: HyperfineLine,
    pub broadening: BroadeningModel,
    pub shift: ShiftModel,
    pub cell: CellConditions,
    pub saturation: SaturationConfig,
    pub modulation: ModulationConfig,
    pub pump: PumpModConfig,
    pub chain: ChainConfig,
    pub time_domain: TimeDomainConfig,
    pub notch_fig2: IntensityNoiseScenario,
    pub ram_reject: RamCancelScenario,
    pub noise: NoiseModel,
    pub prestab: PrestabConfig,
    pub servo: LoopConfig,
    pub comb: CombConfig,
    pub counter: CounterConfig,
    pub scan: ScanConfig,
    pub lock_run: LockRunConfig,
    pub comb_measure: CombMeasureConfig,
    pub allan: AllanConfig,
    pub pressure_shift: PressureShiftConfig,
    pub repeatability: RepeatabilityConfig,
    pub full_pipeline: FullPipelineConfig,
    pub output: OutputConfig,
}

fn range(section: &str, err: CoreError) -> ConfigError {
    match err {
        CoreError::InvalidParameter {
            name,
            value,
            requirement,
        } => ConfigError::Range {
            key: format!("{section}.{name}"),
            message: format!("{value} is out of range: must be {requirement}"),
        },
        other => ConfigError::Range {
            key: section.to_string(),
            message: other.to_string(),
        },
    }
}

fn check(section: &str, name: &str, ok: bool, requirement: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Range {
            key: format!("{section}.{name}"),
            message: format!("must be {requirement}"),
        })
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.line.validate().map_err(|e| range("line", e))?;
        self.cell.validate().map_err(|e| range("cell", e))?;
        self.modulation.validate().map_err(|e| range("modulation", e))?;
        self.pump
            .validate(self.modulation.probe_mod_freq)
            .map_err(|e| range("pump", e))?;
        self.noise.validate().map_err(|e| range("noise", e))?;
        self.prestab.validate().map_err(|e| range("prestab", e))?;
        self.comb.validate().map_err(|e| range("comb", e))?;
        self.counter.validate().map_err(|e| range("counter", e))?;
        check(
            "broadening",
            "pressure_broadening",
            self.broadening.pressure_broadening > 0.0,
            "> 0",
        )?;
        check(
            "broadening",
            "zero_pressure_hwhm",
            self.broadening.zero_pressure_hwhm > 0.0,
            "> 0",
        )?;
        check(
            "saturation",
            "dip_contrast",
            (0.0..1.0).contains(&self.saturation.dip_contrast),
            "in [0, 1)",
        )?;
        check(
            "saturation",
            "optical_depth",
            self.saturation.optical_depth >= 0.0,
            ">= 0",
        )?;
        check("servo", "bandwidth", self.servo.bandwidth > 0.0, "> 0")?;
        check(
            "servo",
            "update_rate",
            self.servo.update_rate > 20.0 * self.servo.bandwidth,
            "> 20 x bandwidth",
        )?;
        check(
            "servo",
            "locked_white_fm_h0",
            self.servo.locked_white_fm_h0 >= 0.0,
            ">= 0",
        )?;
        check("servo", "correction_limit", self.servo.correction_limit > 0.0, "> 0")?;
        check("scan", "pressure", self.scan.pressure > 0.0, "> 0")?;
        check("scan", "points", self.scan.points >= 8, ">= 8")?;
        check("scan", "snr", self.scan.snr > 0.0, "> 0")?;
        check("scan", "seeds", self.scan.seeds >= 1, ">= 1")?;
        check("scan", "span", self.scan.span > 0.0, "> 0")?;
        check("lock_run", "gates", self.lock_run.gates >= 3, ">= 3")?;
        check("comb_measure", "gates", self.comb_measure.gates >= 4, ">= 4")?;
        check(
            "comb_measure",
            "trial_count_sigma",
            self.comb_measure.trial_count_sigma >= 0.0,
            ">= 0",
        )?;
        check("allan", "gates", self.allan.gates >= 3, ">= 3")?;
        check(
            "allan",
            "slope_to",
            self.allan.slope_to > self.allan.slope_from,
            "> slope_from",
        )?;
        check("pressure_shift", "at", self.pressure_shift.at > 0.0, "> 0")?;
        check("pressure_shift", "window", self.pressure_shift.window > 0.0, "> 0")?;
        check("pressure_shift", "step", self.pressure_shift.step > 0.0, "> 0")?;
        check(
            "pressure_shift",
            "high_pressure",
            self.pressure_shift.high_pressure > 0.0,
            "> 0",
        )?;
        check("repeatability", "sets", self.repeatability.sets >= 2, ">= 2")?;
        check(
            "repeatability",
            "values_per_set",
            self.repeatability.values_per_set >= 1,
            ">= 1",
        )?;
        check(
            "repeatability",
            "pressure_sigma",
            self.repeatability.pressure_sigma >= 0.0,
            ">= 0",
        )?;
        check(
            "repeatability",
            "within_day_sigma",
            self.repeatability.within_day_sigma >= 0.0,
            ">= 0",
        )?;
        check("repeatability", "seeds", self.repeatability.seeds >= 1, ">= 1")?;
        check("full_pipeline", "gates", self.full_pipeline.gates >= 8, ">= 8")?;
        check("output", "decimate", self.output.decimate >= 1, ">= 1")?;
        Ok(())
    }

    /// SHA-256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serialises");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }
}

#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: Config,
    pub warnings: Vec<String>,
}

fn defaults_table() -> Table {
    match Value::try_from(Config::default()).expect("defaults serialise") {
        Value::Table(t) => t,
        _ => unreachable!("config is a table"),
    }
}

fn suggestion<'a>(key: &str, candidates: impl Iterator<Item = &'a String>) -> Option<String> {
    candidates
        .map(|c| (strsim::levenshtein(key, c), c))
        .filter(|(d, _)| *d <= 2)
        .min()
        .map(|(_, c)| c.clone())
}

fn hint(path: &str, suggestion: Option<String>) -> String {
    match suggestion {
        Some(s) => {
            let prefix = path.rsplit_once('.').map(|(p, _)| format!("{p}.")).unwrap_or_default();
            format!(" (did you mean `{prefix}{s}`?)")
        }
        None => String::new(),
    }
}

/// Integer literals are accepted where the default is a float.
fn coerce(value: Value, like: &Value) -> Value {
    match (&value, like) {
        (Value::Integer(i), Value::Float(_)) => Value::Float(*i as f64),
        _ => value,
    }
}

fn merge(base: &mut Table, user: Table, path: &str, warnings: &mut Vec<String>) {
    for (key, value) in user {
        let full = if path.is_empty() {
            key.clone()
        } else {
            format!("{path}.{key}")
        };
        match base.get_mut(&key) {
            None => {
                let s = suggestion(&key, base.keys());
                warnings.push(format!("unknown key `{full}`{}", hint(&full, s)));
            }
            Some(Value::Table(inner)) => match value {
                Value::Table(t) => merge(inner, t, &full, warnings),
                other => {
                    warnings.push(format!("`{full}` is a section; ignoring value {other}"));
                }
            },
            Some(slot) => {
                let v = coerce(value, slot);
                *slot = v;
            }
        }
    }
}

fn parse_override_value(raw: &str, like: &Value) -> Value {
    if let Value::String(_) = like {
        let trimmed = raw.trim();
        let unquoted = trimmed
            .strip_prefix('"')
            .and_then(|s| s.strip_suffix('"'))
            .unwrap_or(trimmed);
        return Value::String(unquoted.to_string());
    }
    match toml::from_str::<Table>(&format!("v = {raw}")) {
        Ok(mut t) => coerce(t.remove("v").unwrap_or(Value::String(raw.into())), like),
        Err(_) => Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::MalformedOverride(spec.to_string()))?;
    let key = key.trim();
    let parts: Vec<&str> = key.split('.').collect();
    if parts.len() < 2 || parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::MalformedOverride(spec.to_string()));
    }
    let mut current = table;
    for (i, part) in parts.iter().enumerate() {
        let last = i + 1 == parts.len();
        let known: Vec<String> = current.keys().cloned().collect();
        let unknown = || ConfigError::UnknownOverride {
            key: key.to_string(),
            hint: hint(key, suggestion(part, known.iter())),
        };
        if last {
            let slot = current.get_mut(*part).ok_or_else(unknown)?;
            if slot.is_table() {
                return Err(unknown());
            }
            *slot = parse_override_value(raw, slot);
            return Ok(());
        }
        current = match current.get_mut(*part) {
            Some(Value::Table(t)) => t,
            _ => return Err(unknown()),
        };
    }
    Ok(())
}

/// Parse configuration text, apply overrides and validate.
pub fn load_str(text: &str, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let user: Table = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let mut table = defaults_table();
    let mut warnings = Vec::new();
    merge(&mut table, user, "", &mut warnings);
    for o in overrides {
        apply_override(&mut table, o)?;
    }
    let config: Config = Value::Table(table)
        .try_into()
        .map_err(|e: toml::de::Error| ConfigError::Type(e.to_string()))?;
    config.validate()?;
    Ok(LoadedConfig { config, warnings })
}

/// Load from a file, or the defaults when `path` is `None`.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<LoadedConfig, ConfigError> {
    let text = match path {
        Some(p) => std::fs::read_to_string(p).map_err(|source| ConfigError::Read {
            path: p.display().to_string(),
            source,
        })?,
        None => String::new(),
    };
    load_str(&text, overrides)
}
