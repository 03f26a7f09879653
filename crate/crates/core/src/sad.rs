//! Energy-based source activity detection.
//!
//! A frame is active when its energy exceeds the estimated noise floor (10th
//! percentile of all frame energies) by `threshold_db`, or when it is louder
//! than [`ALWAYS_ACTIVE_DBFS`]. The absolute bound keeps stationary sources
//! that never leave a noise-only frame (a tone, continuous speech) active.

use std::io::Write;

use crate::error::{invalid, Result};

pub const DEFAULT_THRESHOLD_DB: f64 = 10.0;
pub const DEFAULT_MIN_RATIO: f64 = 0.75;
/// Frames above this level are always active, independent of the noise floor.
pub const ALWAYS_ACTIVE_DBFS: f64 = -20.0;
const NOISE_FLOOR_PERCENTILE: f64 = 0.10;

#[derive(Debug, Clone, PartialEq)]
pub struct ActivityMask {
    pub frame_flags: Vec<bool>,
    pub frame_size: usize,
    pub frame_shift: usize,
    pub threshold_db: f64,
    pub signal_len: usize,
}

fn energy_db(frame: &[f64]) -> f64 {
    let e = frame.iter().map(|v| v * v).sum::<f64>() / frame.len() as f64;
    10.0 * (e + 1e-30).log10()
}

fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.total_cmp(b));
    let idx = ((sorted.len() - 1) as f64 * q).round() as usize;
    sorted[idx]
}

pub fn detect_activity(
    signal: &[f64],
    frame_size: usize,
    frame_shift: usize,
    threshold_db: f64,
) -> Result<ActivityMask> {
    if signal.is_empty() {
        return invalid("activity detection on an empty signal");
    }
    if frame_size == 0 || frame_shift == 0 {
        return invalid("frame size and shift must be positive");
    }
    let energies: Vec<f64> = if signal.len() < frame_size {
        vec![energy_db(signal)]
    } else {
        (0..=(signal.len() - frame_size) / frame_shift)
            .map(|f| energy_db(&signal[f * frame_shift..f * frame_shift + frame_size]))
            .collect()
    };
    let floor = percentile(&energies, NOISE_FLOOR_PERCENTILE);
    let level = (floor + threshold_db).min(ALWAYS_ACTIVE_DBFS);
    Ok(ActivityMask {
        frame_flags: energies.iter().map(|&e| e > level).collect(),
        frame_size,
        frame_shift,
        threshold_db,
        signal_len: signal.len(),
    })
}

impl ActivityMask {
    pub fn num_frames(&self) -> usize {
        self.frame_flags.len()
    }

    pub fn active_count(&self) -> usize {
        self.frame_flags.iter().filter(|&&f| f).count()
    }

    /// Fraction of frames overlapping `[start, start + length)` that are active.
    pub fn active_ratio(&self, start: usize, length: usize) -> Result<f64> {
        if length == 0 || start + length > self.signal_len {
            return invalid(format!(
                "segment [{start}, {}) outside the analysed {} samples",
                start + length,
                self.signal_len
            ));
        }
        let end = start + length;
        let first = (start + 1).saturating_sub(self.frame_size).div_ceil(self.frame_shift);
        let last = ((end - 1) / self.frame_shift).min(self.num_frames() - 1);
        if first > last {
            // segment lies in the uncovered tail; judge it by the last frame
            return Ok(if self.frame_flags[last] { 1.0 } else { 0.0 });
        }
        let flags = &self.frame_flags[first..=last];
        Ok(flags.iter().filter(|&&f| f).count() as f64 / flags.len() as f64)
    }

    /// Index of the first active frame, if any.
    pub fn first_active_frame(&self) -> Option<usize> {
        self.frame_flags.iter().position(|&f| f)
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "frame_index,start_sample,active")?;
        for (i, f) in self.frame_flags.iter().enumerate() {
            writeln!(out, "{i},{},{}", i * self.frame_shift, u8::from(*f))?;
        }
        Ok(())
    }
}

pub fn segment_is_active(
    mask: &ActivityMask,
    start: usize,
    length: usize,
    min_ratio: f64,
) -> Result<bool> {
    Ok(mask.active_ratio(start, length)? >= min_ratio)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signals::white_noise;

    fn burst_in_noise() -> (Vec<f64>, Vec<bool>) {
        // 1 s noise, 1 s burst 30 dB above, 1 s noise at 16 kHz
        let fs = 16_000;
        let noise = white_noise(3 * fs, 1);
        let burst = white_noise(fs, 2);
        let mut x: Vec<f64> = noise.iter().map(|v| v * 0.01).collect();
        for i in 0..fs {
            x[fs + i] += burst[i] * (0.6 + 0.4 * (i as f64 * 0.0016).sin()).abs() * 0.3;
        }
        let truth = (0..(x.len() - 512) / 256 + 1)
            .map(|f| {
                let c = f * 256 + 256;
                (fs..2 * fs).contains(&c)
            })
            .collect();
        (x, truth)
    }

    #[test]
    fn burst_frames_detected() {
        let (x, truth) = burst_in_noise();
        let mask = detect_activity(&x, 512, 256, DEFAULT_THRESHOLD_DB).unwrap();
        let agree = mask
            .frame_flags
            .iter()
            .zip(&truth)
            .filter(|(a, b)| a == b)
            .count();
        assert!(agree as f64 / truth.len() as f64 >= 0.9);
    }

    #[test]
    fn silence_and_tone() {
        let zero = detect_activity(&vec![0.0; 8000], 512, 256, 10.0).unwrap();
        assert_eq!(zero.active_count(), 0);
        let tone: Vec<f64> = (0..8000).map(|i| (i as f64 * 0.1).sin()).collect();
        let mask = detect_activity(&tone, 512, 256, 10.0).unwrap();
        assert_eq!(mask.active_count(), mask.num_frames());
        assert!(detect_activity(&[], 512, 256, 10.0).is_err());
    }

    #[test]
    fn segment_ratio_thresholds() {
        let mask = ActivityMask {
            frame_flags: vec![true, true, false, false],
            frame_size: 100,
            frame_shift: 100,
            threshold_db: 10.0,
            signal_len: 400,
        };
        assert!(segment_is_active(&mask, 0, 200, 0.75).unwrap());
        assert!(!segment_is_active(&mask, 200, 200, 0.75).unwrap());
        assert!(!segment_is_active(&mask, 0, 400, 0.75).unwrap());
        assert!(segment_is_active(&mask, 0, 400, 0.5).unwrap());
        assert!(segment_is_active(&mask, 300, 200, 0.5).is_err());
    }

    #[test]
    fn overlapping_frames_counted() {
        let mask = ActivityMask {
            frame_flags: vec![true, false, true],
            frame_size: 200,
            frame_shift: 100,
            threshold_db: 10.0,
            signal_len: 400,
        };
        // frames 0 and 1 overlap [150, 160)
        assert_eq!(mask.active_ratio(150, 10).unwrap(), 0.5);
        // all three overlap [190, 210)
        assert!((mask.active_ratio(190, 20).unwrap() - 2.0 / 3.0).abs() < 1e-12);
    }
}
