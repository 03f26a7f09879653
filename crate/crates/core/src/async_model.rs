//! Asynchronous sampling: applying and removing STO and time-varying SRO.
//!
//! A node with start time `T` and per-sample SRO `ε[n]` records
//! `y[n] = y_sync(n - δ[n])` where `δ[n] = -T·f_s + Σ_{ñ<n} ε[ñ]`. In the
//! STFT domain the delay is averaged per frame,
//!
//! ```text
//! δ̄[0] = -T·f_s + N/2·ε̄[0],    δ̄[l] = δ̄[l-1] + B·ε̄[l]
//! ```
//!
//! and `δ̄[l]` is the delay at the frame centre `l·B + N/2`. Trajectories are
//! stored in ppm; the conversion to a ratio happens once, in
//! [`accumulated_delay`].

use std::f64::consts::PI;
use std::io::Write;

use rustfft::num_complex::Complex64;

use crate::dsp::{check_frame_params, fft, SincInterpolator, WindowKind};
use crate::error::{invalid, Error, Result};
use crate::signals::{power, rng};
use crate::sro_model::SroTrajectory;
use crate::PPM;
use rand_distr::{Distribution, StandardNormal};

/// Default analysis frame of the STFT resampler. The delay is held constant
/// within a frame, so the error against an exact resampler grows with
/// `(N·ε)²`; 512 samples keep it near 1e-3 at 200 ppm for wideband input.
pub const RESAMPLER_FRAME_SIZE: usize = 512;
/// Default frame shift of the STFT resampler (75 % overlap).
pub const RESAMPLER_FRAME_SHIFT: usize = 128;

/// Largest admissible absolute sampling time offset in seconds.
pub const MAX_STO_SECONDS: f64 = 1.0;

#[derive(Debug, Clone)]
pub struct AsyncSpec {
    pub sto_seconds: f64,
    /// Per-step SRO of the node in ppm.
    pub trajectory: SroTrajectory,
    pub sample_rate: f64,
}

impl AsyncSpec {
    pub fn new(sto_seconds: f64, trajectory: SroTrajectory, sample_rate: f64) -> Result<Self> {
        if !(sto_seconds.abs() <= MAX_STO_SECONDS) {
            return invalid(format!(
                "STO {sto_seconds} s exceeds ±{MAX_STO_SECONDS} s"
            ));
        }
        if !(sample_rate > 0.0) {
            return invalid("sample rate must be positive");
        }
        if trajectory.is_empty() || !(trajectory.step_duration > 0.0) {
            return invalid("trajectory must be non-empty with a positive step duration");
        }
        Ok(Self {
            sto_seconds,
            trajectory,
            sample_rate,
        })
    }

    /// Synchronous node: no STO, zero SRO.
    pub fn identity(num_steps: usize, step_duration: f64, sample_rate: f64) -> Self {
        Self {
            sto_seconds: 0.0,
            trajectory: SroTrajectory::constant(0.0, num_steps.max(1), step_duration),
            sample_rate,
        }
    }
}

/// Frame-averaged delay `δ̄[l]` in samples, located at the frame centres `l·B + N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayCurve {
    pub per_frame_delay: Vec<f64>,
    pub frame_size: usize,
    pub frame_shift: usize,
}

impl DelayCurve {
    fn centre(&self, l: usize) -> f64 {
        (l * self.frame_shift) as f64 + self.frame_size as f64 / 2.0
    }

    /// Delay at an arbitrary sample position, linear between frame centres and
    /// extrapolated with the end slopes outside.
    pub fn delay_at(&self, pos: f64) -> f64 {
        let d = &self.per_frame_delay;
        match d.len() {
            0 => 0.0,
            1 => d[0],
            len => {
                let u = (pos - self.frame_size as f64 / 2.0) / self.frame_shift as f64;
                let i = (u.floor().max(0.0) as usize).min(len - 2);
                let t = u - i as f64;
                d[i] + t * (d[i + 1] - d[i])
            }
        }
    }

    /// Curve that undoes this one: resampling with it after resampling with
    /// `self` restores the input. Obtained per frame centre `c` from the fixed
    /// point `m = c + δ(m)`, giving an inverse delay of `-δ(m)`.
    pub fn inverse(&self) -> DelayCurve {
        let per_frame_delay = (0..self.per_frame_delay.len())
            .map(|l| {
                let c = self.centre(l);
                let mut m = c + self.delay_at(c);
                for _ in 0..8 {
                    m = c + self.delay_at(m);
                }
                -self.delay_at(m)
            })
            .collect();
        DelayCurve {
            per_frame_delay,
            ..*self
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "frame_index,centre_sample,delay_samples")?;
        for (l, d) in self.per_frame_delay.iter().enumerate() {
            writeln!(out, "{l},{},{d}", self.centre(l))?;
        }
        Ok(())
    }
}

fn trajectory_index(traj: &SroTrajectory, frame: usize, frame_shift: usize, fs: f64) -> usize {
    let step_samples = traj.step_duration * fs;
    ((frame * frame_shift) as f64 / step_samples + 1e-9).floor() as usize
}

/// Number of resampler frames whose centre lies inside a signal of `len` samples (at least one).
pub fn frames_for_length(len: usize, frame_size: usize, frame_shift: usize) -> usize {
    if len <= frame_size / 2 {
        1
    } else {
        (len - frame_size / 2 - 1) / frame_shift + 1
    }
}

pub fn accumulated_delay(
    spec: &AsyncSpec,
    num_frames: usize,
    frame_size: usize,
    frame_shift: usize,
) -> Result<DelayCurve> {
    check_frame_params(frame_size, frame_shift)?;
    let traj = &spec.trajectory;
    if num_frames > 0 {
        let needed = trajectory_index(traj, num_frames - 1, frame_shift, spec.sample_rate) + 1;
        if needed > traj.len() {
            return Err(Error::TrajectoryTooShort {
                needed,
                got: traj.len(),
            });
        }
    }
    let mut per_frame_delay = Vec::with_capacity(num_frames);
    let mut acc = 0.0;
    for l in 0..num_frames {
        let eps = traj.values[trajectory_index(traj, l, frame_shift, spec.sample_rate)] * PPM;
        if l == 0 {
            acc = -spec.sto_seconds * spec.sample_rate + frame_size as f64 / 2.0 * eps;
        } else {
            acc += frame_shift as f64 * eps;
        }
        per_frame_delay.push(acc);
    }
    Ok(DelayCurve {
        per_frame_delay,
        frame_size,
        frame_shift,
    })
}

/// Weighted overlap-add resampler: every Hann frame is read at the integer part
/// of its delay and phase-rotated by `exp(-j·2πk/N·frac)` for the remainder.
pub fn resample_stft(signal: &[f64], curve: &DelayCurve) -> Result<Vec<f64>> {
    let (n, b) = (curve.frame_size, curve.frame_shift);
    check_frame_params(n, b)?;
    if n % b != 0 || n / b < 2 {
        return invalid("resampler frame size must be a multiple (≥ 2) of the shift");
    }
    let d = &curve.per_frame_delay;
    if d.iter().any(|v| !v.is_finite()) {
        return invalid("delay curve contains non-finite values");
    }
    let limit = n as f64 / 4.0;
    for w in d.windows(2) {
        let drift = (w[1] - w[0]).abs() * (n / b) as f64;
        if drift > limit {
            return Err(Error::ShiftExceedsModel {
                shift: drift,
                limit,
            });
        }
    }
    let len = signal.len();
    let win = WindowKind::Hann.coefficients(n);
    let norm = win.iter().map(|w| w * w).sum::<f64>() / b as f64;
    let fwd = fft::real_forward_plan(n);
    let inv = fft::real_inverse_plan(n);
    let mut frame = vec![0.0; n];
    let mut spec = fwd.make_output_vec();
    let mut out_frame = inv.make_output_vec();
    let mut out = vec![0.0; len];

    let first = -((n / b - 1) as i64);
    let last = (len / b) as i64;
    for l in first..=last {
        let start = l * b as i64;
        let delay = curve.delay_at(start as f64 + n as f64 / 2.0);
        let whole = delay.round();
        let frac = delay - whole;
        let src = start - whole as i64;
        let mut any = false;
        for (i, (f, w)) in frame.iter_mut().zip(&win).enumerate() {
            let idx = src + i as i64;
            *f = if idx >= 0 && (idx as usize) < len {
                any = true;
                signal[idx as usize] * w
            } else {
                0.0
            };
        }
        if !any {
            continue;
        }
        fwd.process(&mut frame, &mut spec)
            .expect("buffer sizes match the plan");
        if frac != 0.0 {
            for (k, c) in spec.iter_mut().enumerate() {
                *c *= Complex64::from_polar(1.0, -2.0 * PI * k as f64 * frac / n as f64);
            }
        }
        spec[0].im = 0.0;
        spec[n / 2].im = 0.0;
        inv.process(&mut spec, &mut out_frame)
            .expect("buffer sizes match the plan");
        for (i, (v, w)) in out_frame.iter().zip(&win).enumerate() {
            let idx = start + i as i64;
            if idx >= 0 && (idx as usize) < len {
                out[idx as usize] += v * w / (n as f64 * norm);
            }
        }
    }
    Ok(out)
}

/// Apply STO and SRO to a synchronous signal with the STFT resampler.
pub fn apply_async_stft(
    signal: &[f64],
    spec: &AsyncSpec,
    frame_size: usize,
    frame_shift: usize,
) -> Result<Vec<f64>> {
    let frames = frames_for_length(signal.len(), frame_size, frame_shift);
    let curve = accumulated_delay(spec, frames, frame_size, frame_shift)?;
    resample_stft(signal, &curve)
}

/// Remove the STO and SRO described by `spec` from an asynchronous recording.
pub fn compensate_stft(
    signal: &[f64],
    spec: &AsyncSpec,
    frame_size: usize,
    frame_shift: usize,
) -> Result<Vec<f64>> {
    let frames = frames_for_length(signal.len(), frame_size, frame_shift);
    let curve = accumulated_delay(spec, frames, frame_size, frame_shift)?;
    resample_stft(signal, &curve.inverse())
}

/// Per-sample reference resampler: `y[n] = x(n - δ(n))` with δ linearly
/// interpolated from the same frame-wise delay curve the STFT resampler uses,
/// evaluated by 64-tap Kaiser-windowed sinc interpolation.
pub fn apply_async_sinc(
    signal: &[f64],
    spec: &AsyncSpec,
    frame_size: usize,
    frame_shift: usize,
) -> Result<Vec<f64>> {
    let frames = frames_for_length(signal.len(), frame_size, frame_shift);
    let curve = accumulated_delay(spec, frames, frame_size, frame_shift)?;
    Ok(resample_sinc(signal, &curve))
}

pub fn resample_sinc(signal: &[f64], curve: &DelayCurve) -> Vec<f64> {
    let interp = SincInterpolator::default();
    (0..signal.len())
        .map(|i| {
            let pos = i as f64;
            interp.sample_at(signal, pos - curve.delay_at(pos))
        })
        .collect()
}

/// Add white Gaussian noise so that the power of the non-zero samples of
/// `reference` over the noise power equals `target_snr_db`. An infinite target adds nothing.
pub fn add_sensor_noise(
    signal: &[f64],
    target_snr_db: f64,
    reference: &[f64],
    seed: u64,
) -> Result<Vec<f64>> {
    if target_snr_db == f64::INFINITY {
        return Ok(signal.to_vec());
    }
    if !target_snr_db.is_finite() {
        return invalid(format!("SNR target {target_snr_db} dB is not usable"));
    }
    let active: Vec<f64> = reference.iter().copied().filter(|&v| v != 0.0).collect();
    let p_ref = power(&active);
    if p_ref == 0.0 {
        return invalid("noise reference has zero energy");
    }
    let std = (p_ref / 10f64.powf(target_snr_db / 10.0)).sqrt();
    let mut rng = rng(seed);
    Ok(signal
        .iter()
        .map(|&v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + std * z
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{cross_correlate_offset, gcc_phat};
    use crate::signals::{bandlimited_noise, relative_rms_error, white_noise};

    const FS: f64 = 16_000.0;
    const STEP: f64 = 512.0 / FS;

    fn spec(sto: f64, ppm: f64, steps: usize) -> AsyncSpec {
        AsyncSpec::new(sto, SroTrajectory::constant(ppm, steps, STEP), FS).unwrap()
    }

    #[test]
    fn delay_curve_closed_form() {
        let c = accumulated_delay(&spec(0.0, 50.0, 200), 101, 4096, 512).unwrap();
        assert!((c.per_frame_delay[0] - 0.1024).abs() < 1e-12);
        assert!((c.per_frame_delay[100] - 2.6624).abs() < 1e-12);
        let zero = accumulated_delay(&spec(0.0, 0.0, 50), 50, 4096, 512).unwrap();
        assert!(zero.per_frame_delay.iter().all(|&d| d == 0.0));
        let sto = accumulated_delay(&spec(0.5, 0.0, 50), 50, 4096, 512).unwrap();
        assert!(sto.per_frame_delay.iter().all(|&d| d == -8000.0));
    }

    #[test]
    fn delay_curve_needs_enough_trajectory() {
        assert!(matches!(
            accumulated_delay(&spec(0.0, 1.0, 10), 11, 4096, 512),
            Err(Error::TrajectoryTooShort { .. })
        ));
    }

    #[test]
    fn sto_limit_enforced() {
        assert!(AsyncSpec::new(1.5, SroTrajectory::constant(0.0, 1, STEP), FS).is_err());
    }

    #[test]
    fn delay_interpolation_and_inverse() {
        let c = accumulated_delay(&spec(0.1, 100.0, 100), 100, 2048, 512).unwrap();
        // the linear extrapolation back to sample 0 recovers the pure STO term
        assert!((c.delay_at(0.0) + 1600.0).abs() < 1e-9);
        let inv = c.inverse();
        for l in [0usize, 10, 50, 99] {
            let centre = (l * 512 + 1024) as f64;
            // forward then inverse maps the centre back to itself
            let m = centre - inv.delay_at(centre);
            let back = m - c.delay_at(m);
            assert!((back - centre).abs() < 1e-6, "{l}: {back} vs {centre}");
        }
    }

    #[test]
    fn identity_round_trip() {
        let x = white_noise(20_000, 1);
        let y = apply_async_stft(&x, &AsyncSpec::identity(100, STEP, FS), 2048, 512).unwrap();
        assert!(relative_rms_error(&y, &x) < 1e-6);
    }

    #[test]
    fn integer_sto_is_a_shift() {
        let x = white_noise(20_000, 2);
        let y = apply_async_stft(&x, &spec(-32.0 / FS, 0.0, 100), 2048, 512).unwrap();
        assert_eq!(cross_correlate_offset(&x, &y, 100).unwrap().lag, 32);
        assert!(relative_rms_error(&y[32..], &x[..x.len() - 32]) < 1e-6);
    }

    #[test]
    fn sinc_identity_and_integer_delay() {
        let x = bandlimited_noise(8_000, 0.8, 3);
        let y = apply_async_sinc(&x, &AsyncSpec::identity(100, STEP, FS), 2048, 512).unwrap();
        assert!(relative_rms_error(&y, &x) < 1e-4);
        let y = apply_async_sinc(&x, &spec(-10.0 / FS, 0.0, 100), 2048, 512).unwrap();
        assert!(relative_rms_error(&y[10..], &x[..x.len() - 10]) < 1e-4);
    }

    #[test]
    fn constant_sro_drift_visible_to_gcc() {
        let len = 10 * FS as usize;
        let x = white_noise(len, 4);
        let sp = spec(0.0, 100.0, 400);
        let y = apply_async_stft(&x, &sp, 2048, 512).unwrap();
        let seg = 16384;
        let start = len - seg - 2048;
        let r = gcc_phat(&x[start..start + seg], &y[start..start + seg], 64).unwrap();
        let centre = (start + seg / 2) as f64;
        let expected = centre * 100e-6;
        assert!((r.refined_lag - expected).abs() < 0.2, "{} vs {expected}", r.refined_lag);
        let frames = frames_for_length(len, 2048, 512);
        let curve = accumulated_delay(&sp, frames, 2048, 512).unwrap();
        assert!((curve.delay_at(len as f64) - 16.0).abs() < 1e-6);
    }

    #[test]
    fn excessive_drift_rejected() {
        let curve = DelayCurve {
            per_frame_delay: vec![0.0, 200.0, 400.0],
            frame_size: 2048,
            frame_shift: 512,
        };
        assert!(matches!(
            resample_stft(&vec![1.0; 4096], &curve),
            Err(Error::ShiftExceedsModel { .. })
        ));
    }

    #[test]
    fn sensor_noise_levels() {
        let reference = white_noise(200_000, 5);
        let signal = vec![0.0; 200_000];
        let noisy = add_sensor_noise(&signal, 30.0, &reference, 6).unwrap();
        let snr = 10.0 * (power(&reference) / power(&noisy)).log10();
        assert!((snr - 30.0).abs() < 0.1, "{snr}");
        let unit: Vec<f64> = vec![1.0; 100_000];
        let noisy = add_sensor_noise(&signal[..100_000], 0.0, &unit, 7).unwrap();
        assert!((power(&noisy) - 1.0).abs() < 0.01);
        assert_eq!(
            add_sensor_noise(&reference, f64::INFINITY, &reference, 0).unwrap(),
            reference
        );
        assert!(add_sensor_noise(&signal, 30.0, &signal, 0).is_err());
        assert_eq!(
            add_sensor_noise(&signal, 30.0, &reference, 9).unwrap(),
            add_sensor_noise(&signal, 30.0, &reference, 9).unwrap()
        );
    }
}
