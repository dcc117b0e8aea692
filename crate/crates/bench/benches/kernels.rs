use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

use iodine_core::analysis::{allan_deviation_with, dispersion_model, fit_dispersion, octave_taus, DispersionGuess};
use iodine_core::canceller::{cancel, LmsNotchConfig};
use iodine_core::noise;
use iodine_core::sigchain::{fm_demod_signal, ModulationConfig, DISPERSION_PHASE};
use iodine_core::*;

fn allan(c: &mut Criterion) {
    let mut g = c.benchmark_group("allan");
    for n in [1_000usize, 100_000] {
        let y = TimeSeries::new(
            noise::white(n, 1e-13, &mut noise::rng(1)),
            1.0,
            SeriesKind::FractionalFrequency,
        )
        .unwrap();
        let taus = octave_taus(1.0, n);
        for overlapping in [false, true] {
            let id = BenchmarkId::new(if overlapping { "overlapping" } else { "plain" }, n);
            g.bench_with_input(id, &y, |b, y| {
                b.iter(|| allan_deviation_with(black_box(y), &taus, overlapping).unwrap())
            });
        }
    }
    g.finish();
}

fn lms(c: &mut Criterion) {
    let fs = 1e6;
    let x: Vec<f64> = (0..1 << 16)
        .map(|i| (std::f64::consts::TAU * 125e3 * i as f64 / fs).cos())
        .collect();
    let input = TimeSeries::new(x, 1.0 / fs, SeriesKind::Detector).unwrap();
    let cfg = LmsNotchConfig::default();
    c.bench_function("lms_notch_65536", |b| {
        b.iter(|| cancel(black_box(&input), &cfg).unwrap())
    });
}

fn fm_demod(c: &mut Criterion) {
    let ctx = LineContext::new(
        &HyperfineLine::default(),
        &BroadeningModel::default(),
        &ShiftModel::default(),
        &SaturationConfig::default(),
        &CellConditions::default(),
    )
    .unwrap();
    let m = ModulationConfig::default();
    c.bench_function("fm_demod_signal", |b| {
        b.iter(|| fm_demod_signal(black_box(ctx.center_shift + 10e3), &ctx, &m, DISPERSION_PHASE).unwrap())
    });
}

fn fit(c: &mut Criterion) {
    let x: Vec<f64> = (0..121).map(|i| (i as f64 - 60.0) * 5e3).collect();
    let mut rng = noise::rng(2);
    let y: Vec<f64> = x
        .iter()
        .map(|f| dispersion_model(*f, 500.0, 32e3, 1.0, 0.0) + 0.02 * noise::gaussian(&mut rng))
        .collect();
    let guess = DispersionGuess {
        center: 0.0,
        hwhm: 25e3,
        amplitude: 0.8,
        baseline: 0.0,
    };
    c.bench_function("fit_dispersion_121", |b| {
        b.iter(|| fit_dispersion(black_box(&x), &y, &guess).unwrap())
    });
}

criterion_group!(benches, allan, lms, fm_demod, fit);
criterion_main!(benches);
