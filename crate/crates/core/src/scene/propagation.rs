//! Source-to-microphone propagation: a fractionally delayed, 1/d-attenuated
//! direct path plus an optional exponentially decaying noise tail.

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::dsp::{fft, SincInterpolator};
use crate::error::{invalid, Result};
use crate::signals::rng;
use crate::SPEED_OF_SOUND;

pub type Point = [f64; 3];

pub fn distance(a: &Point, b: &Point) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Propagation delay in samples over `d` metres.
pub fn flight_samples(d: f64, sample_rate: f64) -> f64 {
    d / SPEED_OF_SOUND * sample_rate
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReverbSpec {
    /// Time for the tail energy to decay by 60 dB.
    pub t60_s: f64,
    /// Distance at which the direct path and the tail carry equal energy.
    pub critical_distance_m: f64,
    /// Time constant of the tail build-up after the direct path. Reflections
    /// are sparse right after the direct sound, so the tail envelope rises as
    /// `1 - exp(-t/onset)` before it decays.
    #[serde(default = "default_onset")]
    pub onset_s: f64,
}

fn default_onset() -> f64 {
    0.01
}

impl Default for ReverbSpec {
    fn default() -> Self {
        Self {
            t60_s: 0.3,
            critical_distance_m: 1.5,
            onset_s: default_onset(),
        }
    }
}

/// Tail length as a multiple of T60.
const TAIL_T60S: f64 = 2.0;

/// Diffuse tail `g·n[k]·(1 - exp(-k/(onset·f_s)))·exp(-3·ln10·k/(T60·f_s))`
/// with total energy `1/r_c²`.
pub fn reverb_tail(spec: &ReverbSpec, sample_rate: f64, seed: u64) -> Result<Vec<f64>> {
    if !(spec.t60_s > 0.0 && spec.critical_distance_m > 0.0 && spec.onset_s >= 0.0) {
        return invalid("reverb needs positive T60 and critical distance and a nonnegative onset");
    }
    let onset = spec.onset_s * sample_rate;
    let len = (TAIL_T60S * spec.t60_s * sample_rate).ceil() as usize;
    let decay = 3.0 * std::f64::consts::LN_10 / (spec.t60_s * sample_rate);
    let mut rng = rng(seed);
    let mut tail: Vec<f64> = (0..len)
        .map(|k| {
            let z: f64 = StandardNormal.sample(&mut rng);
            let rise = if onset > 0.0 { 1.0 - (-(k as f64 + 1.0) / onset).exp() } else { 1.0 };
            z * rise * (-decay * k as f64).exp()
        })
        .collect();
    let energy: f64 = tail.iter().map(|v| v * v).sum();
    let gain = 1.0 / (spec.critical_distance_m * energy.sqrt());
    tail.iter_mut().for_each(|v| *v *= gain);
    Ok(tail)
}

/// Room impulse response from `src` to `mic`.
pub fn room_impulse_response(
    src: &Point,
    mic: &Point,
    reverb: Option<&ReverbSpec>,
    sample_rate: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let d = distance(src, mic);
    if !(d > 0.0) {
        return invalid("source and microphone coincide");
    }
    let delay = flight_samples(d, sample_rate);
    let interp = SincInterpolator::default();
    let onset = delay.floor() as usize + 1;
    let tail = match reverb {
        Some(spec) => reverb_tail(spec, sample_rate, seed)?,
        None => Vec::new(),
    };
    let len = (onset + interp.half_taps()).max(onset + tail.len());
    let mut impulse = vec![0.0; len];
    impulse[0] = 1.0;
    let mut h: Vec<f64> = (0..len)
        .map(|n| interp.sample_at(&impulse, n as f64 - delay) / d)
        .collect();
    for (k, t) in tail.iter().enumerate() {
        h[onset + k] += t;
    }
    Ok(h)
}

/// Linear convolution through the FFT.
pub fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    let out_len = x.len() + h.len() - 1;
    let n = out_len.next_power_of_two();
    let mut a = x.to_vec();
    a.resize(n, 0.0);
    let mut b = h.to_vec();
    b.resize(n, 0.0);
    let fa = fft::rfft(&mut a);
    let fb = fft::rfft(&mut b);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(p, q)| p * q).collect();
    let mut y = fft::irfft(&mut prod, n);
    y.truncate(out_len);
    y.iter_mut().for_each(|v| *v /= n as f64);
    y
}

/// Microphone signal for `source` emitted at `src`; the output is longer than
/// the input by the length of the impulse response minus one.
pub fn render_propagation(
    source: &[f64],
    src: &Point,
    mic: &Point,
    reverb: Option<&ReverbSpec>,
    sample_rate: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let h = room_impulse_response(src, mic, reverb, sample_rate, seed)?;
    Ok(convolve(source, &h))
}
