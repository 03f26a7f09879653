//! Speech-shaped synthetic source: pink noise cut into words with a 4 Hz
//! syllabic envelope, short gaps between words and silence at both ends.

use std::f64::consts::PI;

use rand::Rng;

use crate::signals::{pink_noise, rng};

/// RMS of the active (word) part of an utterance.
pub const SPEECH_RMS: f64 = 0.05;
const SYLLABLE_HZ: f64 = 4.0;
const WORD_S: (f64, f64) = (0.15, 0.5);
const GAP_S: (f64, f64) = (0.03, 0.15);
const EDGE_SILENCE_S: (f64, f64) = (0.1, 0.25);
const RAMP_S: f64 = 0.01;

/// Utterance of exactly `len` samples.
pub fn synthetic_utterance(len: usize, sample_rate: f64, seed: u64) -> Vec<f64> {
    let mut rng = rng(seed);
    let carrier = pink_noise(len, sample_rate, 100.0, seed ^ 0x5eed_5eed);
    let mut out = vec![0.0; len];
    let samples = |s: f64| (s * sample_rate).round() as usize;
    let lead = samples(rng.random_range(EDGE_SILENCE_S.0..EDGE_SILENCE_S.1));
    let trail = samples(rng.random_range(EDGE_SILENCE_S.0..EDGE_SILENCE_S.1));
    let end = len.saturating_sub(trail);
    let ramp = samples(RAMP_S).max(1);
    let mut pos = lead;
    while pos < end {
        let word = samples(rng.random_range(WORD_S.0..WORD_S.1)).min(end - pos);
        let phase = rng.random_range(0.0..2.0 * PI);
        for i in 0..word {
            let t = i as f64 / sample_rate;
            let envelope = 0.6 + 0.4 * (2.0 * PI * SYLLABLE_HZ * t + phase).sin();
            let edge = i.min(word - 1 - i);
            let fade = if edge < ramp {
                0.5 - 0.5 * (PI * edge as f64 / ramp as f64).cos()
            } else {
                1.0
            };
            out[pos + i] = carrier[pos + i] * envelope * fade * SPEECH_RMS;
        }
        pos += word + samples(rng.random_range(GAP_S.0..GAP_S.1));
    }
    out
}
