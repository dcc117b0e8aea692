//! Seeded noise sources. Every generator takes an explicit seed; sub-streams
//! are derived from a master seed with [`derive_seed`].

use num_complex::Complex;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::FftPlanner;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic, well-mixed seed for sub-stream `stream` of `master` (splitmix64).
pub fn derive_seed(master: u64, stream: u64) -> u64 {
    let mut z = master
        ^ stream
            .wrapping_mul(0x9E37_79B9_7F4A_7C15)
            .wrapping_add(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn gaussian(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// `n` samples of zero-mean Gaussian noise with standard deviation `sigma`.
pub fn white(n: usize, sigma: f64, rng: &mut Rng) -> Vec<f64> {
    (0..n).map(|_| sigma * gaussian(rng)).collect()
}

/// White noise with one-sided PSD `psd` (units²/Hz) at `sample_rate`.
pub fn white_with_psd(n: usize, psd: f64, sample_rate: f64, rng: &mut Rng) -> Vec<f64> {
    white(n, (psd * sample_rate / 2.0).sqrt(), rng)
}

/// Noise with one-sided PSD `coeff / f`, shaped in the frequency domain over a
/// record twice as long as requested to reduce wrap-around correlation.
pub fn flicker(n: usize, coeff: f64, sample_rate: f64, rng: &mut Rng) -> Vec<f64> {
    if n == 0 || coeff == 0.0 {
        return vec![0.0; n];
    }
    let len = 2 * n;
    let mut buf: Vec<Complex<f64>> = (0..len).map(|_| Complex::new(gaussian(rng), 0.0)).collect();
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(len).process(&mut buf);
    let df = sample_rate / len as f64;
    buf[0] = Complex::new(0.0, 0.0);
    for (k, b) in buf.iter_mut().enumerate().skip(1) {
        let bin = if k <= len / 2 { k } else { len - k };
        *b *= 1.0 / (bin as f64 * df).sqrt();
    }
    planner.plan_fft_inverse(len).process(&mut buf);
    // unit-variance white input has one-sided PSD 2/fs; the 1/sqrt(f) filter
    // then gives (2/fs)/f, and the inverse FFT carries a factor len
    let scale = (coeff * sample_rate / 2.0).sqrt() / len as f64;
    buf[..n].iter().map(|c| c.re * scale).collect()
}
