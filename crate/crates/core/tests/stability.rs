use iodine_core::analysis::{allan_deviation, allan_deviation_with, log_slope};
use iodine_core::comb::{beat_and_mix, count, CombConfig, CounterConfig};
use iodine_core::noise;
use iodine_core::servo::{close_lock, prestabilize, simulate_free_laser, LoopConfig, NoiseModel, PrestabConfig};
use iodine_core::sigchain::{Demodulation, Discriminator, ModulationConfig, PumpModConfig};
use iodine_core::*;

fn chain() -> ErrorChain {
    let ctx = LineContext::new(
        &HyperfineLine::default(),
        &BroadeningModel::default(),
        &ShiftModel::default(),
        &SaturationConfig::default(),
        &CellConditions::default(),
    )
    .unwrap();
    ErrorChain::new(
        ctx,
        ModulationConfig::default(),
        PumpModConfig::default(),
        Discriminator::FmSpectroscopy,
        Demodulation::Double,
        0.0,
    )
    .unwrap()
}

fn gate_average(s: &TimeSeries, per_gate: usize) -> Vec<f64> {
    s.values()
        .chunks_exact(per_gate)
        .map(|c| c.iter().sum::<f64>() / per_gate as f64)
        .collect()
}

fn fractional(values: Vec<f64>, optical: f64) -> TimeSeries {
    let m = values.iter().sum::<f64>() / values.len() as f64;
    TimeSeries::new(
        values.iter().map(|v| (v - m) / optical).collect(),
        1.0,
        SeriesKind::FractionalFrequency,
    )
    .unwrap()
}

#[test]
fn white_fm_gives_half_power_slope() {
    let h0 = 1e-24;
    let y = noise::white_with_psd(100_000, h0, 1.0, &mut noise::rng(11));
    let y = TimeSeries::new(y, 1.0, SeriesKind::FractionalFrequency).unwrap();
    let taus = [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0, 100.0];
    let r = allan_deviation_with(&y, &taus, true).unwrap();
    let slope = log_slope(&r, 1.0, 100.0).unwrap();
    assert!((slope + 0.5).abs() < 0.02, "{slope}");
    let expected = (h0 / 2.0).sqrt();
    assert!((r.sigmas[0] / expected - 1.0).abs() < 0.02);
}

struct Locked {
    locked: TimeSeries,
    free: TimeSeries,
}

fn locked_run(seconds: f64, seed: u64) -> Locked {
    let ch = chain();
    let lc = LoopConfig::default();
    let free = simulate_free_laser(&NoiseModel::default(), seconds, lc.update_rate, seed).unwrap();
    let pre = prestabilize(&free, &PrestabConfig::default()).unwrap();
    let out = close_lock(
        &pre,
        &ch,
        &lc.pi_for(&ch).unwrap(),
        0.0,
        lc.error_noise_rms(&ch),
        seed + 1,
    )
    .unwrap();
    assert!(out.always_locked());
    Locked {
        locked: out.locked,
        free,
    }
}

#[test]
fn counter_preserves_laser_stability() {
    let run = locked_run(300.0, 4);
    let center = HyperfineLine::default()
        .shifted_center(
            &ShiftModel::default(),
            &BroadeningModel::default(),
            &CellConditions::default(),
        )
        .unwrap();
    let comb = CombConfig::default();
    let beat = beat_and_mix(center, &comb).unwrap();
    let counted = count(beat, &run.locked, &comb, &CounterConfig::default(), 9).unwrap();
    let optical = center.as_hz_f64();
    let taus = [1.0, 2.0, 4.0, 8.0, 16.0];
    let direct = allan_deviation(&fractional(gate_average(&run.locked, 1000), optical), &taus).unwrap();
    let via_counter = allan_deviation(&fractional(counted.values().to_vec(), optical), &taus).unwrap();
    for (a, b) in direct.sigmas.iter().zip(&via_counter.sigmas) {
        assert!((b / a - 1.0).abs() < 0.05, "{a} vs {b}");
    }
}

#[test]
fn lock_beats_free_running_laser() {
    let run = locked_run(300.0, 21);
    let optical = 5.9736649865462e14;
    let taus = [1.0, 10.0, 30.0];
    let locked = allan_deviation(&fractional(gate_average(&run.locked, 1000), optical), &taus).unwrap();
    let free = allan_deviation(&fractional(gate_average(&run.free, 1000), optical), &taus).unwrap();
    for (l, f) in locked.sigmas.iter().zip(&free.sigmas) {
        assert!(l < f, "locked {l} free {f}");
    }
}
