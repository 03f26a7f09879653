use rustfft::num_complex::Complex64;

use super::fft;
use super::window::WindowKind;
use crate::error::{invalid, Error, Result};

/// Short-time spectra with the full FFT length retained per frame.
///
/// Frame `l` is the FFT of the windowed input slice `[l * frame_shift, l * frame_shift + frame_size)`.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    pub frames: Vec<Vec<Complex64>>,
    pub frame_size: usize,
    pub frame_shift: usize,
    pub window: WindowKind,
}

impl Spectrogram {
    pub fn num_frames(&self) -> usize {
        self.frames.len()
    }

    pub fn num_bins(&self) -> usize {
        self.frame_size
    }
}

pub(crate) fn check_frame_params(frame_size: usize, frame_shift: usize) -> Result<()> {
    if !frame_size.is_power_of_two() {
        return invalid(format!("frame size {frame_size} is not a power of two"));
    }
    if frame_shift == 0 || frame_shift > frame_size {
        return invalid(format!(
            "frame shift {frame_shift} must lie in 1..={frame_size}"
        ));
    }
    Ok(())
}

/// Number of complete frames that fit into `len` samples.
pub fn frame_count(len: usize, frame_size: usize, frame_shift: usize) -> usize {
    if len < frame_size {
        0
    } else {
        (len - frame_size) / frame_shift + 1
    }
}

pub fn stft(
    signal: &[f64],
    frame_size: usize,
    frame_shift: usize,
    window: WindowKind,
) -> Result<Spectrogram> {
    check_frame_params(frame_size, frame_shift)?;
    if signal.len() < frame_size {
        return Err(Error::InsufficientSamples {
            needed: frame_size,
            got: signal.len(),
        });
    }
    let win = window.coefficients(frame_size);
    let plan = fft::real_forward_plan(frame_size);
    let mut buf = vec![0.0; frame_size];
    let mut half = plan.make_output_vec();
    let frames = (0..frame_count(signal.len(), frame_size, frame_shift))
        .map(|l| {
            let start = l * frame_shift;
            for ((b, &x), &w) in buf
                .iter_mut()
                .zip(&signal[start..start + frame_size])
                .zip(&win)
            {
                *b = x * w;
            }
            plan.process(&mut buf, &mut half)
                .expect("buffer sizes match the plan");
            fft::hermitian_full(&half, frame_size)
        })
        .collect();
    Ok(Spectrogram {
        frames,
        frame_size,
        frame_shift,
        window,
    })
}
