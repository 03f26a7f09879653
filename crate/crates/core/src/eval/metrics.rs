//! Error metrics of an SRO trace against ground truth.

use crate::dwacd::SroTrace;
use crate::sro_model::SroTrajectory;
use crate::PPM;

/// True SRO at the centre of every trace segment.
pub fn truth_at_segments(trace: &SroTrace, truth: &SroTrajectory) -> Vec<f64> {
    let step = truth.step_duration * trace.sample_rate;
    trace
        .points
        .iter()
        .map(|p| {
            let centre = (p.segment_index * trace.segment_shift + trace.segment_len / 2) as f64;
            let i = ((centre / step) as usize).min(truth.len() - 1);
            truth.values[i]
        })
        .collect()
}

/// SRO-induced delay per segment accumulated from per-segment SROs (ppm):
/// `τ[0] = N_W/2·ε[0]`, `τ[ℓ] = τ[ℓ-1] + B_s·ε[ℓ]`.
pub fn accumulate_delay(sro_ppm: &[f64], segment_len: usize, segment_shift: usize) -> Vec<f64> {
    let mut acc = 0.0;
    sro_ppm
        .iter()
        .enumerate()
        .map(|(l, e)| {
            acc += if l == 0 {
                segment_len as f64 / 2.0 * e * PPM
            } else {
                segment_shift as f64 * e * PPM
            };
            acc
        })
        .collect()
}

fn rms(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    (n > 0).then(|| (sum / n as f64).sqrt())
}

/// RMSE of the SRO estimate over the valid segments, ppm.
pub fn sro_rmse(trace: &SroTrace, truth: &SroTrajectory) -> Option<f64> {
    let t = truth_at_segments(trace, truth);
    rms(trace
        .points
        .iter()
        .zip(&t)
        .filter(|(p, _)| p.valid)
        .map(|(p, t)| p.sro_ppm - t))
}

/// RMSE of the SRO-induced delay reconstructed from the estimates, over all
/// segments from `settling` on, samples.
pub fn delay_rmse(trace: &SroTrace, truth: &SroTrajectory, settling: usize) -> Option<f64> {
    let est = accumulate_delay(&trace.estimates(), trace.segment_len, trace.segment_shift);
    let tru = accumulate_delay(
        &truth_at_segments(trace, truth),
        trace.segment_len,
        trace.segment_shift,
    );
    rms(est.iter().zip(&tru).skip(settling).map(|(a, b)| a - b))
}
