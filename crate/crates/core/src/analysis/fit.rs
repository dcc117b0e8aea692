use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const STEP_TOLERANCE: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionGuess {
    pub center: f64,
    pub hwhm: f64,
    pub amplitude: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DispersionFit {
    pub center: f64,
    pub hwhm: f64,
    pub amplitude: f64,
    pub baseline: f64,
    pub residual_rms: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// `baseline + amplitude * (-x / (1 + x^2))`, `x = (f - center) / hwhm`.
pub fn dispersion_model(f: f64, center: f64, hwhm: f64, amplitude: f64, baseline: f64) -> f64 {
    let x = (f - center) / hwhm;
    baseline - amplitude * x / (1.0 + x * x)
}

fn eval(p: &[f64; 4], f: f64) -> f64 {
    dispersion_model(f, p[0], p[1], p[2], p[3])
}

fn cost(p: &[f64; 4], x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(f, v)| (v - eval(p, *f)).powi(2)).sum()
}

fn solve4(mut a: [[f64; 4]; 4], mut b: [f64; 4]) -> Option<[f64; 4]> {
    for col in 0..4 {
        let pivot = (col..4).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..4 {
            let f = a[row][col] / a[col][col];
            let pivot_row = a[col];
            for (v, p) in a[row].iter_mut().zip(pivot_row).skip(col) {
                *v -= f * p;
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = [0.0; 4];
    for row in (0..4).rev() {
        let s: f64 = (row + 1..4).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    Some(x)
}

/// Levenberg-Marquardt fit of the dispersion lineshape with a numeric Jacobian.
pub fn fit_dispersion(detunings: &[f64], values: &[f64], guess: &DispersionGuess) -> Result<DispersionFit> {
    if detunings.len() != values.len() {
        return Err(Error::LengthMismatch(detunings.len(), values.len()));
    }
    if detunings.len() < 8 {
        return Err(Error::InsufficientData(format!(
            "{} scan points, need 8",
            detunings.len()
        )));
    }
    let lo = detunings.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = detunings.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if hi <= lo {
        return Err(Error::DegenerateScan);
    }
    if guess.hwhm.is_nan() || guess.hwhm <= 0.0 {
        return Err(Error::InvalidParameter {
            name: "hwhm",
            value: guess.hwhm,
            requirement: "> 0",
        });
    }
    if hi - lo < 3.0 * guess.hwhm {
        return Err(Error::InsufficientData(format!(
            "scan spans {} Hz, too narrow for a {} Hz guess",
            hi - lo,
            guess.hwhm
        )));
    }
    let mut p = [guess.center, guess.hwhm, guess.amplitude, guess.baseline];
    let mut c = cost(&p, detunings, values);
    let mut lambda = 1e-3;
    let n = detunings.len();
    for iteration in 1..=MAX_ITERATIONS {
        let scale = [p[1].abs(), p[1].abs(), p[2].abs().max(1e-300), p[2].abs().max(1e-300)];
        let mut jac = vec![[0.0; 4]; n];
        for j in 0..4 {
            let h = 1e-7 * scale[j].max(p[j].abs());
            let mut up = p;
            let mut down = p;
            up[j] += h;
            down[j] -= h;
            for (i, f) in detunings.iter().enumerate() {
                jac[i][j] = (eval(&up, *f) - eval(&down, *f)) / (2.0 * h);
            }
        }
        let mut jtj = [[0.0; 4]; 4];
        let mut jtr = [0.0; 4];
        for (i, row) in jac.iter().enumerate() {
            let r = values[i] - eval(&p, detunings[i]);
            for a in 0..4 {
                jtr[a] += row[a] * r;
                for b in 0..4 {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        loop {
            let mut damped = jtj;
            for (k, row) in damped.iter_mut().enumerate() {
                row[k] += lambda * jtj[k][k].max(1e-300);
            }
            let step = solve4(damped, jtr).ok_or(Error::NonConvergence(iteration))?;
            let mut trial = p;
            for k in 0..4 {
                trial[k] += step[k];
            }
            trial[1] = trial[1].abs();
            let tc = cost(&trial, detunings, values);
            if tc <= c {
                let rel = (0..4)
                    .map(|k| step[k].abs() / scale[k].max(trial[k].abs()))
                    .fold(0.0, f64::max);
                p = trial;
                c = tc;
                lambda = (lambda / 3.0).max(1e-12);
                if rel < STEP_TOLERANCE || c == 0.0 {
                    return Ok(DispersionFit {
                        center: p[0],
                        hwhm: p[1],
                        amplitude: p[2],
                        baseline: p[3],
                        residual_rms: (c / n as f64).sqrt(),
                        iterations: iteration,
                        converged: true,
                    });
                }
                break;
            }
            lambda *= 4.0;
            if lambda > 1e16 {
                // no downhill step left: at the minimum to rounding
                return Ok(DispersionFit {
                    center: p[0],
                    hwhm: p[1],
                    amplitude: p[2],
                    baseline: p[3],
                    residual_rms: (c / n as f64).sqrt(),
                    iterations: iteration,
                    converged: true,
                });
            }
        }
    }
    Err(Error::NonConvergence(MAX_ITERATIONS))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise;
    use proptest::prelude::*;

    fn scan(center: f64, hwhm: f64, amp: f64, base: f64, noise_rms: f64, seed: u64) -> (Vec<f64>, Vec<f64>) {
        let mut rng = noise::rng(seed);
        let x: Vec<f64> = (0..121).map(|i| (i as f64 - 60.0) * 5e3).collect();
        let y = x
            .iter()
            .map(|f| dispersion_model(*f, center, hwhm, amp, base) + noise_rms * noise::gaussian(&mut rng))
            .collect();
        (x, y)
    }

    #[test]
    fn noiseless_recovery() {
        let (x, y) = scan(0.0, 32e3, 1.0, 0.0, 0.0, 0);
        let g = DispersionGuess {
            center: 10e3,
            hwhm: 60e3,
            amplitude: 0.5,
            baseline: 0.1,
        };
        let fit = fit_dispersion(&x, &y, &g).unwrap();
        assert!(fit.center.abs() < 1e-6 * 32e3);
        assert!((fit.hwhm / 32e3 - 1.0).abs() < 1e-6);
        assert!((fit.amplitude - 1.0).abs() < 1e-6);
        assert!(fit.baseline.abs() < 1e-6);
    }

    #[test]
    fn noisy_recovery() {
        let (x, y) = scan(2e3, 45e3, 1.0, 0.05, 0.02, 5);
        let g = DispersionGuess {
            center: 0.0,
            hwhm: 30e3,
            amplitude: 2.0,
            baseline: 0.0,
        };
        let fit = fit_dispersion(&x, &y, &g).unwrap();
        assert!((fit.hwhm / 45e3 - 1.0).abs() < 0.05);
        assert!((fit.residual_rms / 0.02 - 1.0).abs() < 0.2);
    }

    #[test]
    fn degenerate_inputs() {
        let g = DispersionGuess {
            center: 0.0,
            hwhm: 30e3,
            amplitude: 1.0,
            baseline: 0.0,
        };
        assert!(matches!(
            fit_dispersion(&[1.0; 10], &[0.0; 10], &g),
            Err(Error::DegenerateScan)
        ));
        assert!(matches!(
            fit_dispersion(&[1.0, 2.0], &[0.0, 0.0], &g),
            Err(Error::InsufficientData(_))
        ));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn shift_equivariant(delta in -50e3f64..50e3, seed in 0u64..1000) {
            let (x, y) = scan(0.0, 32e3, 1.0, 0.0, 0.01, seed);
            let g = DispersionGuess { center: 0.0, hwhm: 40e3, amplitude: 1.0, baseline: 0.0 };
            let a = fit_dispersion(&x, &y, &g).unwrap();
            let xs: Vec<f64> = x.iter().map(|f| f + delta).collect();
            let gs = DispersionGuess { center: delta, ..g };
            let b = fit_dispersion(&xs, &y, &gs).unwrap();
            prop_assert!(((b.center - a.center) - delta).abs() <= 1e-9 * a.hwhm + 1e-9 * delta.abs(),
                "{} {} {}", a.center, b.center, delta);
        }
    }
}
