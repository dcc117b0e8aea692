//! The named experiments. Each returns JSON results, pass/fail checks
//! against reference values and the files to write.

use std::f64::consts::TAU;
use std::str::FromStr;

use iodine_core::analysis::{
    allan_deviation_direct, allan_deviation_with, fit_dispersion, log_slope, octave_taus, pressure_slope,
    repeatability, AllanResult, DispersionGuess, MeasurementSet,
};
use iodine_core::canceller::{tone_phasor, IntensityNoiseOutcome};
use iodine_core::comb::{
    beat_and_mix, beat_on_mode, count, determine_mode_number, reconstruct, resolve_sign, Beat, CombConfig, CountMean,
    CounterReading,
};
use iodine_core::noise::{self, derive_seed};
use iodine_core::servo::{close_lock, prestabilize, simulate_free_laser, LockOutcome, NoiseModel};
use iodine_core::sigchain::{fm_demod_signal, fm_demod_time_domain, ram_lock_shift_hz, DISPERSION_PHASE};
use iodine_core::spectral::welch_psd;
use iodine_core::{
    CellConditions, Error, ErrorChain, FrequencyOffset, LineContext, OpticalFrequency, Result, SeriesKind, TimeSeries,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::Config;
use crate::output::{decimate, fixed, gnuplot, sci, Artifact, Csv};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Scenario {
    LineshapeScan,
    NotchFig2,
    RamReject,
    LockRun,
    CombMeasure,
    Allan,
    PressureShift,
    Repeatability,
    FullPipeline,
}

impl Scenario {
    pub const ALL: [Scenario; 9] = [
        Scenario::LineshapeScan,
        Scenario::NotchFig2,
        Scenario::RamReject,
        Scenario::LockRun,
        Scenario::CombMeasure,
        Scenario::Allan,
        Scenario::PressureShift,
        Scenario::Repeatability,
        Scenario::FullPipeline,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scenario::LineshapeScan => "lineshape-scan",
            Scenario::NotchFig2 => "notch-fig2",
            Scenario::RamReject => "ram-reject",
            Scenario::LockRun => "lock-run",
            Scenario::CombMeasure => "comb-measure",
            Scenario::Allan => "allan",
            Scenario::PressureShift => "pressure-shift",
            Scenario::Repeatability => "repeatability",
            Scenario::FullPipeline => "full-pipeline",
        }
    }

    /// Seed for this scenario derived from the master seed, independent of
    /// which other scenarios run alongside it.
    pub fn seed(self, master: u64) -> u64 {
        let index = Self::ALL.iter().position(|s| *s == self).unwrap_or(0) as u64;
        derive_seed(master, 1000 + index)
    }
}

impl FromStr for Scenario {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some(found) = Self::ALL.iter().find(|x| x.name() == s) {
            return Ok(*found);
        }
        let near = Self::ALL
            .iter()
            .map(|x| (strsim::levenshtein(s, x.name()), x.name()))
            .filter(|(d, _)| *d <= 2)
            .min()
            .map(|(_, n)| format!(" (did you mean `{n}`?)"))
            .unwrap_or_default();
        Err(format!("unknown scenario `{s}`{near}"))
    }
}

impl std::fmt::Display for Scenario {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub value: f64,
    pub expected: String,
}

impl Check {
    fn within(name: &str, value: f64, target: f64, tol: f64, unit: &str) -> Self {
        Self {
            name: name.into(),
            passed: (value - target).abs() <= tol,
            value,
            expected: format!("{target} +/- {tol} {unit}").trim_end().to_string(),
        }
    }

    fn at_least(name: &str, value: f64, min: f64, unit: &str) -> Self {
        Self {
            name: name.into(),
            passed: value >= min,
            value,
            expected: format!(">= {min} {unit}").trim_end().to_string(),
        }
    }

    fn at_most(name: &str, value: f64, max: f64, unit: &str) -> Self {
        Self {
            name: name.into(),
            passed: value <= max,
            value,
            expected: format!("<= {max} {unit}").trim_end().to_string(),
        }
    }

    fn flag(name: &str, passed: bool, detail: &str) -> Self {
        Self {
            name: name.into(),
            passed,
            value: if passed { 1.0 } else { 0.0 },
            expected: detail.into(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ScenarioOutput {
    pub results: Value,
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

pub fn run_scenario(scenario: Scenario, cfg: &Config, seed: u64) -> Result<ScenarioOutput> {
    match scenario {
        Scenario::LineshapeScan => lineshape_scan(cfg, seed),
        Scenario::NotchFig2 => notch_fig2(cfg, seed),
        Scenario::RamReject => ram_reject(cfg, seed),
        Scenario::LockRun => lock_run(cfg, seed),
        Scenario::CombMeasure => comb_measure(cfg, seed),
        Scenario::Allan => allan(cfg, seed),
        Scenario::PressureShift => pressure_shift(cfg),
        Scenario::Repeatability => repeatability_scenario(cfg, seed),
        Scenario::FullPipeline => full_pipeline(cfg, seed),
    }
}

const REFERENCE_ALLAN_1S: f64 = 7.2e-13;

fn context(cfg: &Config, cond: &CellConditions) -> Result<LineContext> {
    LineContext::new(&cfg.line, &cfg.broadening, &cfg.shift, &cfg.saturation, cond)
}

fn chain(cfg: &Config, ctx: LineContext) -> Result<ErrorChain> {
    ErrorChain::new(
        ctx,
        cfg.modulation,
        cfg.pump,
        cfg.chain.discriminator,
        cfg.chain.demodulation,
        cfg.chain.background_offset,
    )
}

fn shifted_center(cfg: &Config, cond: &CellConditions) -> Result<OpticalFrequency> {
    cfg.line.shifted_center(&cfg.shift, &cfg.broadening, cond)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn lineshape_scan(cfg: &Config, seed: u64) -> Result<ScenarioOutput> {
    let sc = &cfg.scan;
    let cond = cfg.cell.with_pressure(sc.pressure);
    let ctx = context(cfg, &cond)?;
    let offsets: Vec<f64> = (0..sc.points)
        .map(|i| -sc.span + 2.0 * sc.span * i as f64 / (sc.points - 1) as f64)
        .collect();
    let clean = offsets
        .iter()
        .map(|o| fm_demod_signal(ctx.center_shift + o, &ctx, &cfg.modulation, DISPERSION_PHASE))
        .collect::<Result<Vec<f64>>>()?;
    let peak = clean.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    let noise_rms = peak / sc.snr;
    let mut fits = Vec::with_capacity(sc.seeds);
    let mut first_scan = Vec::new();
    for k in 0..sc.seeds {
        let mut rng = noise::rng(derive_seed(seed, k as u64));
        let y: Vec<f64> = clean
            .iter()
            .map(|c| c + noise_rms * noise::gaussian(&mut rng))
            .collect();
        let fit = fit_dispersion(&offsets, &y, &guess_from_data(&offsets, &y))?;
        if k == 0 {
            first_scan = y;
        }
        fits.push(fit);
    }
    let hwhms: Vec<f64> = fits.iter().map(|f| f.hwhm).collect();
    let med = median(hwhms.clone());
    let expected = ctx.hwhm;
    let tol = if (sc.pressure - 0.066).abs() < 1e-9 { 1e3 } else { 1.5e3 };
    let first = fits[0];
    let mut csv = Csv::new(&["offset_Hz", "signal", "clean", "fit"]);
    for ((o, y), c) in offsets.iter().zip(&first_scan).zip(&clean) {
        let f = iodine_core::analysis::dispersion_model(*o, first.center, first.hwhm, first.amplitude, first.baseline);
        csv.row(&[fixed(*o, 1), sci(*y), sci(*c), sci(f)]);
    }
    let mut artifacts = vec![
        csv.into_artifact("scan.csv"),
        Artifact {
            name: "fit.json".into(),
            contents: pretty(&json!({
                "center_Hz": first.center,
                "hwhm_Hz": first.hwhm,
                "amplitude": first.amplitude,
                "baseline": first.baseline,
                "residual_rms": first.residual_rms,
                "iterations": first.iterations,
                "converged": first.converged,
            })),
        },
    ];
    if cfg.output.gnuplot {
        artifacts.push(gnuplot(
            "FM dispersion scan",
            "scan.csv",
            "offset (Hz)",
            "signal",
            &[(2, "points"), (4, "lines")],
            false,
        ));
    }
    let results = json!({
        "pressure_Pa": sc.pressure,
        "model_hwhm_Hz": expected,
        "median_hwhm_Hz": med,
        "first_seed_hwhm_Hz": first.hwhm,
        "hwhm_spread_Hz": std_dev(&hwhms),
        "seeds": sc.seeds,
        "noise_rms": noise_rms,
    });
    Ok(ScenarioOutput {
        results,
        checks: vec![Check::within("median fitted HWHM", med, expected, tol, "Hz")],
        artifacts,
    })
}

fn guess_from_data(x: &[f64], y: &[f64]) -> DispersionGuess {
    let (imax, _) = y
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |a, (i, v)| if *v > a.1 { (i, *v) } else { a });
    let (imin, _) = y
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |a, (i, v)| if *v < a.1 { (i, *v) } else { a });
    let step = (x[x.len() - 1] - x[0]) / (x.len() - 1) as f64;
    let spread = y[imax] - y[imin];
    DispersionGuess {
        center: 0.5 * (x[imax] + x[imin]),
        hwhm: (0.5 * (x[imax] - x[imin]).abs()).max(step),
        amplitude: if imax < imin { spread } else { -spread },
        baseline: y.iter().sum::<f64>() / y.len() as f64,
    }
}

fn std_dev(v: &[f64]) -> f64 {
    if v.len() < 2 {
        return 0.0;
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json serialises");
    s.push('\n');
    s
}

fn psd_csv(
    name: &str,
    input: &TimeSeries,
    output: &TimeSeries,
    center: f64,
    half_span: f64,
    segment: usize,
    floor: Option<f64>,
) -> Result<Artifact> {
    let fs = input.sample_rate();
    let pin = welch_psd(input.values(), fs, segment)?;
    let pout = welch_psd(output.values(), fs, segment)?;
    let mut header = vec!["freq_Hz", "input_psd_dB", "output_psd_dB"];
    if floor.is_some() {
        header.push("floor_psd_dB");
    }
    let mut csv = Csv::new(&header);
    let din = pin.to_db();
    let dout = pout.to_db();
    for (i, f) in pin.freqs.iter().enumerate() {
        if (f - center).abs() <= half_span {
            let mut row = vec![fixed(*f, 3), fixed(din[i], 4), fixed(dout[i], 4)];
            if let Some(fl) = floor {
                row.push(fixed(10.0 * fl.log10(), 4));
            }
            csv.row(&row);
        }
    }
    Ok(csv.into_artifact(name))
}

fn notch_fig2(cfg: &Config, seed: u64) -> Result<ScenarioOutput> {
    let sc = &cfg.notch_fig2;
    let IntensityNoiseOutcome {
        notch,
        technical_psd,
        rejection_db,
        residual_above_floor_db,
        input,
        output,
    } = sc.run(seed)?;
    let mut artifacts = vec![psd_csv(
        "psd.csv",
        &input,
        &output,
        sc.ref_freq,
        10e3,
        1 << 14,
        Some(sc.floor_psd),
    )?];
    if cfg.output.gnuplot {
        artifacts.push(gnuplot(
            "Intensity noise around the pump modulation",
            "psd.csv",
            "frequency (Hz)",
            "PSD (dB)",
            &[(2, "lines"), (3, "lines"), (4, "lines")],
            false,
        ));
    }
    let results = json!({
        "rejection_dB": rejection_db,
        "residual_above_floor_dB": residual_above_floor_db,
        "mu": notch.mu,
        "leakage": notch.leakage,
        "technical_psd": technical_psd,
        "floor_psd": sc.floor_psd,
        "band_Hz": sc.band,
        "samples": sc.samples,
    });
    Ok(ScenarioOutput {
        results,
        checks: vec![
            Check::within("band-power rejection", rejection_db, sc.rejection_db, 1.5, "dB"),
            Check::within(
                "residual above floor",
                residual_above_floor_db,
                sc.residual_above_floor_db,
                2.0,
                "dB",
            ),
        ],
        artifacts,
    })
}

fn ram_reject(cfg: &Config, seed: u64) -> Result<ScenarioOutput> {
    let sc = &cfg.ram_reject;
    let out = sc.run(seed)?;
    let ctx = context(cfg, &cfg.cell)?;
    let before_mod = cfg.modulation.with_ram_depth(sc.ram_depth);
    let before_mod = iodine_core::sigchain::ModulationConfig {
        ram_phase: sc.ram_phase,
        ..before_mod
    };
    let after_mod = iodine_core::sigchain::ModulationConfig {
        ram_depth: out.residual.norm(),
        ram_phase: out.residual.arg(),
        ..before_mod
    };
    let before = ram_lock_shift_hz(&before_mod, &ctx)?;
    let after = ram_lock_shift_hz(&after_mod, &ctx)?;
    let ratio = after / before;
    let expected = 10f64.powf(-out.depth_db / 20.0);
    let probe = ctx.center_shift + ctx.hwhm;
    let analytic = fm_demod_signal(probe, &ctx, &before_mod, DISPERSION_PHASE)?;
    let sampled = fm_demod_time_domain(
        probe,
        &ctx,
        &before_mod,
        DISPERSION_PHASE,
        &cfg.time_domain,
        derive_seed(seed, 7),
    )?;
    let agreement = sampled / analytic - 1.0;
    let input_tone = tone_phasor(&out.input, sc.ref_freq, 0)?.norm();
    let mut artifacts = vec![psd_csv(
        "psd.csv",
        &out.input,
        &out.output,
        sc.ref_freq,
        50e3,
        1 << 15,
        None,
    )?];
    if cfg.output.gnuplot {
        artifacts.push(gnuplot(
            "RAM at the FM frequency",
            "psd.csv",
            "frequency (Hz)",
            "PSD (dB)",
            &[(2, "lines"), (3, "lines")],
            false,
        ));
    }
    let results = json!({
        "depth_dB": out.depth_db,
        "ram_in": input_tone,
        "ram_out": out.residual.norm(),
        "lock_shift_before_Hz": before,
        "lock_shift_after_Hz": after,
        "shift_ratio": ratio,
        "expected_ratio": expected,
        "mu": out.notch.mu,
        "leakage": out.notch.leakage,
        "time_domain_relative_difference": agreement,
    });
    Ok(ScenarioOutput {
        results,
        checks: vec![
            Check::at_least("RAM rejection", out.depth_db, 40.0, "dB"),
            Check::within("lock shift ratio / amplitude ratio", ratio / expected, 1.0, 0.1, ""),
            Check::within("time-domain vs analytic", agreement, 0.0, 0.01, ""),
        ],
        artifacts,
    })
}

struct LockRun {
    outcome: LockOutcome,
    zero_crossing: f64,
    settle_gates: usize,
    period_samples: usize,
}

fn settle_gates(cfg: &Config) -> usize {
    let settle_time = 20.0 / (TAU * cfg.servo.bandwidth);
    ((settle_time / cfg.counter.gate).ceil() as usize).max(1)
}

fn run_lock(cfg: &Config, model: &NoiseModel, h0_lock: f64, gates: usize, seed: u64) -> Result<LockRun> {
    let ctx = context(cfg, &cfg.cell)?;
    let ch = chain(cfg, ctx)?;
    let rate = cfg.servo.update_rate;
    let settle = settle_gates(cfg);
    let period = cfg.counter.gate + cfg.counter.dead_time;
    let duration = (gates + settle) as f64 * period;
    let free = simulate_free_laser(model, duration, rate, derive_seed(seed, 1))?;
    let laser = prestabilize(&free, &cfg.prestab)?;
    let pi = cfg.servo.pi_for(&ch)?;
    let sigma = iodine_core::servo::error_noise_rms(ch.slope(), h0_lock, rate);
    let outcome = close_lock(&laser, &ch, &pi, cfg.run_lock_offset(), sigma, derive_seed(seed, 2))?;
    Ok(LockRun {
        outcome,
        zero_crossing: ch.zero_crossing()?,
        settle_gates: settle,
        period_samples: (period * rate).round() as usize,
    })
}

impl Config {
    fn run_lock_offset(&self) -> f64 {
        self.lock_run.lock_point_offset
    }
}

fn slice_series(s: &TimeSeries, from: usize, to: usize) -> Result<TimeSeries> {
    TimeSeries::new(s.values()[from..to.min(s.len())].to_vec(), s.dt(), s.kind())
}

fn fractional(counted: &TimeSeries, optical: f64) -> TimeSeries {
    let m = counted.mean();
    counted.map(SeriesKind::FractionalFrequency, |v| (v - m) / optical)
}

fn allan_taus(gate: f64, n: usize, extra: f64) -> Vec<f64> {
    let mut taus = octave_taus(gate, n);
    let m = (extra / gate).round();
    if m >= 1.0 && (extra / gate - m).abs() < 1e-9 && n / m as usize >= 3 {
        taus.push(m * gate);
    }
    taus.sort_by(f64::total_cmp);
    taus.dedup();
    taus
}

fn allan_csv(plain: &AllanResult, over: &AllanResult) -> Artifact {
    let mut csv = Csv::new(&["tau_s", "sigma", "sigma_overlapping", "averages"]);
    for i in 0..plain.taus.len() {
        csv.row(&[
            fixed(plain.taus[i], 3),
            sci(plain.sigmas[i]),
            sci(over.sigmas[i]),
            plain.n_samples_per_tau[i].to_string(),
        ]);
    }
    csv.into_artifact("allan.csv")
}

fn stability_checks(
    plain: &AllanResult,
    over: &AllanResult,
    gate: f64,
    from: f64,
    to: f64,
) -> Result<(f64, f64, Vec<Check>)> {
    let s1 = plain
        .at(gate)
        .ok_or_else(|| Error::InsufficientData("no Allan point at the gate time".into()))?;
    let slope = log_slope(over, from, to)?;
    Ok((
        s1,
        slope,
        vec![
            Check::within("Allan deviation at 1 s / 7.2e-13", s1 / REFERENCE_ALLAN_1S, 1.0, 0.15, ""),
            Check::within("tau^-1/2 slope", slope, -0.5, 0.05, ""),
        ],
    ))
}

fn lock_run(cfg: &Config, seed: u64) -> Result<ScenarioOutput> {
    let gates = cfg.lock_run.gates;
    let run = run_lock(cfg, &cfg.noise, cfg.servo.locked_white_fm_h0, gates, seed)?;
    let center = shifted_center(cfg, &cfg.cell)?;
    let beat = beat_and_mix(center, &cfg.comb)?;
    let skip = run.settle_gates * run.period_samples;
    let locked = slice_series(&run.outcome.locked, skip, run.outcome.locked.len())?;
    let counted = count(beat, &locked, &cfg.comb, &cfg.counter, derive_seed(seed, 3))?;
    let y = fractional(&counted, center.as_hz_f64());
    let taus = allan_taus(cfg.counter.gate, y.len(), cfg.allan.slope_to);
    let plain = allan_deviation_with(&y, &taus, false)?;
    let over = allan_deviation_with(&y, &taus, true)?;
    let (s1, slope, mut checks) = stability_checks(
        &plain,
        &over,
        cfg.counter.gate,
        cfg.allan.slope_from,
        cfg.allan.slope_to,
    )?;
    let offsets: Vec<f64> = counted.values().iter().map(|c| c - beat.mixed.as_hz_f64()).collect();
    let mean_offset = offsets.iter().sum::<f64>() / offsets.len() as f64;
    let se = std_dev(&offsets) / (offsets.len() as f64).sqrt();
    let locked_fraction = run.outcome.in_lock.iter().filter(|b| **b).count() as f64 / run.outcome.in_lock.len() as f64;
    checks.push(Check::flag(
        "stayed in lock",
        run.outcome.always_locked(),
        "never left the capture range",
    ));
    checks.push(Check::at_most(
        "mean offset from lock point / standard error",
        (mean_offset - run.zero_crossing).abs() / se.max(1e-12),
        3.0,
        "",
    ));
    let mut locked_csv = Csv::new(&["time_s", "offset_Hz"]);
    let block = cfg.output.decimate;
    let dt = run.outcome.locked.dt() * block as f64;
    for (i, v) in decimate(run.outcome.locked.values(), block).iter().enumerate() {
        locked_csv.row(&[fixed(i as f64 * dt, 4), fixed(*v, 4)]);
    }
    let mut counts_csv = Csv::new(&["gate_index", "counted_Hz"]);
    for (i, v) in counted.values().iter().enumerate() {
        counts_csv.row(&[i.to_string(), fixed(*v, 3)]);
    }
    let mut artifacts = vec![
        locked_csv.into_artifact("locked.csv"),
        counts_csv.into_artifact("counts.csv"),
        allan_csv(&plain, &over),
    ];
    if cfg.output.gnuplot {
        artifacts.push(gnuplot(
            "Locked laser, 1 s gates",
            "counts.csv",
            "gate",
            "counted (Hz)",
            &[(2, "lines")],
            false,
        ));
        artifacts.push(gnuplot(
            "Relative Allan deviation",
            "allan.csv",
            "tau (s)",
            "sigma_y",
            &[(2, "linespoints"), (3, "linespoints")],
            true,
        ));
    }
    let results = json!({
        "gates": counted.len(),
        "settle_gates": run.settle_gates,
        "allan_1s": s1,
        "slope": slope,
        "slope_range_s": [cfg.allan.slope_from, cfg.allan.slope_to],
        "mean_offset_Hz": mean_offset,
        "mean_offset_std_error_Hz": se,
        "lock_point_Hz": run.zero_crossing,
        "in_lock_fraction": locked_fraction,
        "taus_s": plain.taus,
        "sigmas": plain.sigmas,
        "sigmas_overlapping": over.sigmas,
    });
    Ok(ScenarioOutput {
        results,
        checks,
        artifacts,
    })
}

fn flat_laser(gates: usize, cfg: &Config) -> Result<TimeSeries> {
    let period = ((cfg.counter.gate + cfg.counter.dead_time) * cfg.servo.update_rate).round() as usize;
    TimeSeries::new(
        vec![0.0; gates * period],
        1.0 / cfg.servo.update_rate,
        SeriesKind::FrequencyOffset,
    )
}

/// Mode-number trials with synthetic count means of standard error `sigma`.
fn mode_number_trials(
    beat: Beat,
    f_rep: FrequencyOffset,
    step: FrequencyOffset,
    sigma: f64,
    trials: usize,
    seed: u64,
) -> (usize, bool) {
    let mut rng = noise::rng(derive_seed(seed, 3));
    let ca = beat.mixed.as_hz_f64();
    let cb = (beat.mixed - step * beat.p as i64).as_hz_f64();
    let margin = step.as_hz_f64().abs() >= 2.0 * sigma * 2f64.sqrt() / iodine_core::comb::MODE_RESIDUAL_LIMIT;
    let mut ok = 0;
    for _ in 0..trials {
        let a = CountMean {
            mean: ca + sigma * noise::gaussian(&mut rng),
            std_error: sigma,
        };
        let b = CountMean {
            mean: cb + sigma * noise::gaussian(&mut rng),
            std_error: sigma,
        };
        if let Ok(m) = determine_mode_number(a, b, f_rep, f_rep + step) {
            if m.p == beat.p {
                ok += 1;
            }
        }
    }
    (ok, margin)
}

fn comb_measure(cfg: &Config, seed: u64) -> Result<ScenarioOutput> {
    let sc = &cfg.comb_measure;
    let laser = shifted_center(cfg, &cfg.cell)?;
    let comb_a = cfg.comb;
    let comb_b = comb_a.stepped();
    let beat_a = beat_and_mix(laser, &comb_a)?;
    let beat_b = beat_on_mode(laser, beat_a.p, &comb_b)?;
    let reading = CounterReading::from_signed(beat_a.mixed);
    let nudged = comb_a.with_f_rep(comb_a.f_rep + FrequencyOffset::from_hz(1));
    let nudged_beat = beat_on_mode(laser, beat_a.p, &nudged)?;
    let negative = resolve_sign(reading.magnitude, nudged_beat.mixed.abs())?;
    let half = sc.gates / 2;
    let counts_a = count(
        beat_a,
        &flat_laser(half, cfg)?,
        &comb_a,
        &cfg.counter,
        derive_seed(seed, 1),
    )?;
    let counts_b = count(
        beat_b,
        &flat_laser(sc.gates - half, cfg)?,
        &comb_b,
        &cfg.counter,
        derive_seed(seed, 2),
    )?;
    let mean_a = CountMean::of(&counts_a);
    let mean_b = CountMean::of(&counts_b);
    let mode = determine_mode_number(mean_a, mean_b, comb_a.f_rep, comb_b.f_rep)?;
    let absolute = reconstruct(mean_a.mean, mode.p, &comb_a)?;
    let error_hz = (absolute - laser).as_hz_f64();
    let (successes, margin_ok) = mode_number_trials(
        beat_a,
        comb_a.f_rep,
        sc.trial_step,
        sc.trial_count_sigma,
        sc.trials,
        seed,
    );
    let mut csv = Csv::new(&["gate_index", "f_rep_Hz", "counted_Hz"]);
    for (i, v) in counts_a.values().iter().enumerate() {
        csv.row(&[i.to_string(), comb_a.f_rep.to_hz_millis(), fixed(*v, 3)]);
    }
    for (i, v) in counts_b.values().iter().enumerate() {
        csv.row(&[(half + i).to_string(), comb_b.f_rep.to_hz_millis(), fixed(*v, 3)]);
    }
    let report = json!({
        "p": mode.p,
        "f_rep_Hz": comb_a.f_rep.to_hz_millis(),
        "mean_counted_Hz": fixed(mean_a.mean, 3),
        "absolute_kHz": absolute.to_khz_2dp(),
        "n_gates": counts_a.len(),
    });
    let artifacts = vec![
        csv.into_artifact("counts.csv"),
        Artifact {
            name: "reconstruction.json".into(),
            contents: pretty(&report),
        },
    ];
    let results = json!({
        "p": mode.p,
        "mode_residual": mode.residual,
        "mixed_a_Hz": beat_a.mixed.to_hz_millis(),
        "mixed_b_Hz": beat_b.mixed.to_hz_millis(),
        "counter_magnitude_Hz": reading.magnitude.to_hz_millis(),
        "counter_sign_negative": negative,
        "absolute_kHz": absolute.to_khz_2dp(),
        "expected_kHz": laser.to_khz_2dp(),
        "error_Hz": error_hz,
        "std_error_Hz": mean_a.std_error,
        "trials": sc.trials,
        "trial_successes": successes,
        "trial_margin_ok": margin_ok,
    });
    let needed = (0.999 * sc.trials as f64).ceil();
    let checks = vec![
        Check::flag(
            "counter sign resolved",
            negative == reading.negative,
            "sign from the f_rep nudge matches the beat",
        ),
        Check::flag("mode number", mode.p == beat_a.p, "recovered from the f_rep step"),
        Check::at_most(
            "reconstruction error / standard error",
            error_hz.abs() / mean_a.std_error.max(cfg.counter.resolution),
            3.0,
            "",
        ),
        Check::flag("margin precondition", margin_ok, "step >= 2 sigma / 0.4"),
        Check::at_least("mode-number trials recovered", successes as f64, needed, ""),
    ];
    Ok(ScenarioOutput {
        results,
        checks,
        artifacts,
    })
}

fn allan(cfg: &Config, seed: u64) -> Result<ScenarioOutput> {
    let sc = &cfg.allan;
    let center = shifted_center(cfg, &cfg.cell)?.as_hz_f64();
    let h0 = cfg.servo.locked_white_fm_h0 / (center * center);
    let rate = 1.0 / cfg.counter.gate;
    let y = TimeSeries::new(
        noise::white_with_psd(sc.gates, h0, rate, &mut noise::rng(derive_seed(seed, 1))),
        cfg.counter.gate,
        SeriesKind::FractionalFrequency,
    )?;
    let taus = allan_taus(cfg.counter.gate, y.len(), sc.slope_to);
    let plain = allan_deviation_with(&y, &taus, false)?;
    let over = allan_deviation_with(&y, &taus, true)?;
    let (s1, slope, mut checks) = stability_checks(&plain, &over, cfg.counter.gate, sc.slope_from, sc.slope_to)?;
    let short: Vec<f64> = y.values()[..64.min(y.len())].to_vec();
    let short_series = TimeSeries::new(short.clone(), y.dt(), SeriesKind::FractionalFrequency)?;
    let mut worst: f64 = 0.0;
    for m in 1..=short.len() / 3 {
        let fast = allan_deviation_with(&short_series, &[m as f64 * y.dt()], false)?.sigmas[0];
        let slow = allan_deviation_direct(&short, m);
        worst = worst.max((fast - slow).abs() / slow.max(f64::MIN_POSITIVE));
    }
    checks.push(Check::at_most(
        "direct-sum oracle, 64 samples",
        worst,
        1e-12,
        "relative",
    ));
    let mut artifacts = vec![allan_csv(&plain, &over)];
    if cfg.output.gnuplot {
        artifacts.push(gnuplot(
            "Relative Allan deviation",
            "allan.csv",
            "tau (s)",
            "sigma_y",
            &[(2, "linespoints"), (3, "linespoints")],
            true,
        ));
    }
    let results = json!({
        "h0_fractional": h0,
        "allan_1s": s1,
        "slope": slope,
        "oracle_max_relative_error": worst,
        "taus_s": plain.taus,
        "sigmas": plain.sigmas,
        "sigmas_overlapping": over.sigmas,
    });
    Ok(ScenarioOutput {
        results,
        checks,
        artifacts,
    })
}

fn lock_point(cfg: &Config, cond: &CellConditions) -> Result<f64> {
    let ctx = context(cfg, cond)?;
    Ok(ctx.center_shift + chain(cfg, ctx)?.zero_crossing()?)
}

fn pressure_shift(cfg: &Config) -> Result<ScenarioOutput> {
    let sc = &cfg.pressure_shift;
    let sweep = |around: f64| -> Result<Vec<(f64, f64)>> {
        let n = (sc.window / sc.step).round() as i64;
        (-n..=n)
            .map(|i| around + sc.step * i as f64)
            .filter(|p| *p > 0.0)
            .map(|p| {
                let cond = cfg.cell.with_pressure(p);
                Ok((p, cfg.shift.shift_hz(&cfg.broadening, &cfg.line, &cond)?))
            })
            .collect()
    };
    let near = sweep(sc.at)?;
    let high = sweep(sc.high_pressure)?;
    let slope = pressure_slope(&near, sc.at, sc.window)?;
    let slope_high = pressure_slope(&high, sc.high_pressure, sc.window)?;
    let full = lock_point(cfg, &cfg.cell)?;
    let halved = lock_point(cfg, &cfg.cell.with_probe_power(cfg.cell.probe_power / 2.0))?;
    let power_step = halved - full;
    let mut csv = Csv::new(&["pressure_Pa", "shift_Hz"]);
    let mut all: Vec<(f64, f64)> = near.iter().chain(&high).copied().collect();
    all.sort_by(|a, b| a.0.total_cmp(&b.0));
    for (p, s) in &all {
        csv.row(&[fixed(*p, 4), fixed(*s, 3)]);
    }
    let mut artifacts = vec![csv.into_artifact("shift.csv")];
    if cfg.output.gnuplot {
        artifacts.push(gnuplot(
            "Line-centre shift",
            "shift.csv",
            "pressure (Pa)",
            "shift (Hz)",
            &[(2, "linespoints")],
            false,
        ));
    }
    let results = json!({
        "at_Pa": sc.at,
        "slope_Hz_per_Pa": slope,
        "high_pressure_Pa": sc.high_pressure,
        "slope_high_Hz_per_Pa": slope_high,
        "probe_power_halving_shift_Hz": power_step,
    });
    Ok(ScenarioOutput {
        results,
        checks: vec![
            Check::within("pressure slope / -38.4 kHz/Pa", slope / -38.4e3, 1.0, 0.02, ""),
            Check::at_most("|slope| at the high pressure", slope_high.abs(), 38.4e3, "Hz/Pa"),
            Check::within(
                "lock-point move on probe-power halving",
                power_step.abs(),
                1e3,
                1.0,
                "Hz",
            ),
        ],
        artifacts,
    })
}

fn synthetic_campaign(cfg: &Config, seed: u64) -> Result<Vec<MeasurementSet>> {
    let sc = &cfg.repeatability;
    let mut rng = noise::rng(seed);
    (0..sc.sets)
        .map(|d| {
            let pressure = cfg.cell.pressure + sc.pressure_sigma * noise::gaussian(&mut rng);
            let conditions = cfg.cell.with_pressure(pressure);
            let center = shifted_center(cfg, &conditions)?;
            let values = (0..sc.values_per_set)
                .map(|_| {
                    let jitter = FrequencyOffset::from_hz_f64(sc.within_day_sigma * noise::gaussian(&mut rng))?;
                    Ok(center + jitter)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(MeasurementSet {
                label: format!("day-{}", d + 1),
                values,
                conditions,
            })
        })
        .collect()
}

fn repeatability_scenario(cfg: &Config, seed: u64) -> Result<ScenarioOutput> {
    let sc = &cfg.repeatability;
    let mut stds = Vec::with_capacity(sc.seeds);
    let mut first = None;
    for c in 0..sc.seeds {
        let sets = synthetic_campaign(cfg, derive_seed(seed, c as u64))?;
        let report = repeatability(&sets)?;
        stds.push(report.std_of_set_means_hz);
        if c == 0 {
            first = Some(report);
        }
    }
    let first = first.ok_or_else(|| Error::InsufficientData("no campaigns".into()))?;
    let med = median(stds.clone());
    let in_band = stds
        .iter()
        .filter(|s| (sc.band_low..=sc.band_high).contains(*s))
        .count();
    let mut sets_csv = Csv::new(&["label", "mean_kHz", "spread_Hz", "std_Hz"]);
    let mut per_set = Vec::new();
    for s in &first.sets {
        sets_csv.row(&[
            s.label.clone(),
            s.mean.to_khz_2dp(),
            fixed(s.peak_to_peak.as_hz_f64(), 3),
            fixed(s.std_hz, 3),
        ]);
        per_set.push(json!({
            "label": s.label,
            "mean_kHz": s.mean.to_khz_2dp(),
            "spread_Hz": s.peak_to_peak.as_hz_f64(),
        }));
    }
    let mut dist_csv = Csv::new(&["campaign", "std_of_set_means_Hz"]);
    for (i, s) in stds.iter().enumerate() {
        dist_csv.row(&[i.to_string(), fixed(*s, 3)]);
    }
    let artifacts = vec![
        sets_csv.into_artifact("sets.csv"),
        dist_csv.into_artifact("distribution.csv"),
        Artifact {
            name: "repeatability.json".into(),
            contents: pretty(&Value::Array(per_set)),
        },
    ];
    let results = json!({
        "campaigns": sc.seeds,
        "median_std_of_set_means_Hz": med,
        "fraction_in_band": in_band as f64 / sc.seeds as f64,
        "band_Hz": [sc.band_low, sc.band_high],
        "first_campaign": {
            "grand_mean_kHz": first.grand_mean.to_khz_2dp(),
            "std_of_set_means_Hz": first.std_of_set_means_hz,
        },
    });
    let mid = 0.5 * (sc.band_low + sc.band_high);
    Ok(ScenarioOutput {
        results,
        checks: vec![Check::within(
            "median std of set means",
            med,
            mid,
            0.5 * (sc.band_high - sc.band_low),
            "Hz",
        )],
        artifacts,
    })
}

struct Measurement {
    p: u64,
    absolute: OpticalFrequency,
    expected: OpticalFrequency,
    std_error: f64,
    residual: f64,
    gates: usize,
    mean_a: f64,
}

fn measure(cfg: &Config, model: &NoiseModel, h0_lock: f64, comb_a: &CombConfig, seed: u64) -> Result<Measurement> {
    let gates = cfg.full_pipeline.gates;
    let run = run_lock(cfg, model, h0_lock, gates, seed)?;
    let center = shifted_center(cfg, &cfg.cell)?;
    let expected = center + FrequencyOffset::from_hz_f64(run.zero_crossing)?;
    let comb_b = comb_a.stepped();
    let beat_a = beat_and_mix(center, comb_a)?;
    let beat_b = beat_on_mode(center, beat_a.p, &comb_b)?;
    let half = gates / 2;
    let start = run.settle_gates * run.period_samples;
    let mid = start + half * run.period_samples;
    let end = start + gates * run.period_samples;
    let first = slice_series(&run.outcome.locked, start, mid)?;
    let second = slice_series(&run.outcome.locked, mid, end)?;
    let counts_a = count(beat_a, &first, comb_a, &cfg.counter, derive_seed(seed, 3))?;
    let counts_b = count(beat_b, &second, &comb_b, &cfg.counter, derive_seed(seed, 4))?;
    let a = CountMean::of(&counts_a);
    let b = CountMean::of(&counts_b);
    let mode = determine_mode_number(a, b, comb_a.f_rep, comb_b.f_rep)?;
    Ok(Measurement {
        p: mode.p,
        absolute: reconstruct(a.mean, mode.p, comb_a)?,
        expected,
        std_error: a.std_error,
        residual: mode.residual,
        gates: counts_a.len() + counts_b.len(),
        mean_a: a.mean,
    })
}

fn full_pipeline(cfg: &Config, seed: u64) -> Result<ScenarioOutput> {
    let quiet_comb = CombConfig {
        ref_instability_1s: 0.0,
        ..cfg.comb
    };
    let clean = measure(cfg, &NoiseModel::QUIET, 0.0, &quiet_comb, seed)?;
    let noisy = measure(cfg, &cfg.noise, cfg.servo.locked_white_fm_h0, &cfg.comb, seed)?;
    let deviation = (noisy.absolute - noisy.expected).as_hz_f64();
    let report = json!({
        "p": noisy.p,
        "f_rep_Hz": cfg.comb.f_rep.to_hz_millis(),
        "mean_counted_Hz": fixed(noisy.mean_a, 3),
        "absolute_kHz": noisy.absolute.to_khz_2dp(),
        "n_gates": noisy.gates,
    });
    let results = json!({
        "absolute_kHz": noisy.absolute.to_khz_2dp(),
        "absolute_exact_kHz": noisy.absolute.to_khz_exact(),
        "expected_kHz": noisy.expected.to_khz_2dp(),
        "deviation_Hz": deviation,
        "std_error_Hz": noisy.std_error,
        "p": noisy.p,
        "mode_residual": noisy.residual,
        "n_gates": noisy.gates,
        "noiseless_absolute_kHz": clean.absolute.to_khz_exact(),
        "noiseless_p": clean.p,
    });
    let checks = vec![
        Check::flag(
            "noiseless reconstruction exact",
            clean.absolute == clean.expected,
            &format!("{} kHz", clean.expected.to_khz_exact()),
        ),
        Check::flag("mode number", noisy.p == clean.p, "same p with and without noise"),
        Check::at_most(
            "noisy deviation / standard error",
            deviation.abs() / noisy.std_error.max(cfg.counter.resolution),
            3.0,
            "",
        ),
    ];
    Ok(ScenarioOutput {
        results,
        checks,
        artifacts: vec![Artifact {
            name: "reconstruction.json".into(),
            contents: pretty(&report),
        }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_round_trip() {
        for s in Scenario::ALL {
            assert_eq!(s.name().parse::<Scenario>().unwrap(), s);
        }
        let err = "lock-rn".parse::<Scenario>().unwrap_err();
        assert!(err.contains("lock-run"), "{err}");
    }

    #[test]
    fn seeds_differ_per_scenario() {
        let a = Scenario::LockRun.seed(1);
        let b = Scenario::Allan.seed(1);
        assert_ne!(a, b);
        assert_eq!(a, Scenario::LockRun.seed(1));
    }

    #[test]
    fn data_driven_guess() {
        let x: Vec<f64> = (0..41).map(|i| (i as f64 - 20.0) * 5e3).collect();
        let y: Vec<f64> = x
            .iter()
            .map(|f| iodine_core::analysis::dispersion_model(*f, 0.0, 30e3, 2.0, 0.0))
            .collect();
        let g = guess_from_data(&x, &y);
        assert!((g.hwhm / 30e3 - 1.0).abs() < 0.2);
        assert!(g.amplitude > 0.0);
    }

    #[test]
    fn pressure_shift_defaults() {
        let out = pressure_shift(&Config::default()).unwrap();
        assert!(out.checks.iter().all(|c| c.passed), "{:?}", out.checks);
    }
}
