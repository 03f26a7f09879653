//! Seeded synthetic test signals.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use crate::dsp::fft;

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent child seed for stream `tag` of a run seeded with `seed` (SplitMix64 finaliser).
pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Unit-variance white Gaussian noise.
pub fn white_noise(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    (0..len).map(|_| StandardNormal.sample(&mut rng)).collect()
}

/// White noise with every component above `cutoff` (fraction of Nyquist) removed,
/// rescaled to unit variance.
pub fn bandlimited_noise(len: usize, cutoff: f64, seed: u64) -> Vec<f64> {
    shape_spectrum(white_noise(len, seed), |f| if f <= cutoff { 1.0 } else { 0.0 })
}

/// Noise with a 1/f power spectrum above `low_hz`, unit variance.
pub fn pink_noise(len: usize, sample_rate: f64, low_hz: f64, seed: u64) -> Vec<f64> {
    let nyquist = sample_rate / 2.0;
    shape_spectrum(white_noise(len, seed), |f| {
        let hz = (f * nyquist).max(low_hz);
        (low_hz / hz).sqrt()
    })
}

/// Multiply the spectrum by `gain(f)` with `f` the frequency as a fraction of Nyquist.
fn shape_spectrum(x: Vec<f64>, gain: impl Fn(f64) -> f64) -> Vec<f64> {
    let len = x.len();
    if len < 2 {
        return x;
    }
    let n = len.next_power_of_two();
    let mut buf = x;
    buf.resize(n, 0.0);
    let mut spec = fft::rfft(&mut buf);
    let last = spec.len() - 1;
    for (k, c) in spec.iter_mut().enumerate() {
        *c *= Complex64::new(gain(k as f64 / last as f64), 0.0);
    }
    let mut y = fft::irfft(&mut spec, n);
    y.truncate(len);
    let rms = (y.iter().map(|v| v * v).sum::<f64>() / len as f64).sqrt();
    if rms > 0.0 {
        y.iter_mut().for_each(|v| *v /= rms);
    }
    y
}

pub(crate) fn power(x: &[f64]) -> f64 {
    if x.is_empty() {
        0.0
    } else {
        x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
    }
}

/// RMS of `a - b` relative to the RMS of `b`.
pub fn relative_rms_error(a: &[f64], b: &[f64]) -> f64 {
    let num: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum();
    let den: f64 = b.iter().map(|y| y * y).sum();
    (num / den).sqrt()
}
