//! Thread-local FFT plan caches.
//!
//! Plans are cached per thread so every public DSP routine stays reentrant
//! without sharing mutable state between workers.

use std::cell::RefCell;
use std::sync::Arc;

use realfft::{ComplexToReal, RealFftPlanner, RealToComplex};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

thread_local! {
    static COMPLEX: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
    static REAL: RefCell<RealFftPlanner<f64>> = RefCell::new(RealFftPlanner::new());
}

pub(crate) fn inverse_plan(n: usize) -> Arc<dyn Fft<f64>> {
    COMPLEX.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

pub(crate) fn real_forward_plan(n: usize) -> Arc<dyn RealToComplex<f64>> {
    REAL.with(|p| p.borrow_mut().plan_fft_forward(n))
}

pub(crate) fn real_inverse_plan(n: usize) -> Arc<dyn ComplexToReal<f64>> {
    REAL.with(|p| p.borrow_mut().plan_fft_inverse(n))
}

/// One-sided spectrum (`n/2 + 1` bins) of a real buffer. The buffer is used as scratch.
pub(crate) fn rfft(input: &mut [f64]) -> Vec<Complex64> {
    let plan = real_forward_plan(input.len());
    let mut out = plan.make_output_vec();
    plan.process(input, &mut out)
        .expect("buffer sizes match the plan");
    out
}

/// Unnormalized inverse of [`rfft`]. DC and Nyquist imaginary parts are discarded.
pub(crate) fn irfft(spec: &mut [Complex64], n: usize) -> Vec<f64> {
    let plan = real_inverse_plan(n);
    spec[0].im = 0.0;
    if let Some(last) = spec.last_mut() {
        last.im = 0.0;
    }
    let mut out = plan.make_output_vec();
    plan.process(spec, &mut out)
        .expect("buffer sizes match the plan");
    out
}

/// Expand a one-sided spectrum of a real length-`n` signal to all `n` bins.
pub(crate) fn hermitian_full(half: &[Complex64], n: usize) -> Vec<Complex64> {
    let mut full = Vec::with_capacity(n);
    full.extend_from_slice(&half[..n / 2 + 1]);
    for k in (n / 2 + 1)..n {
        full.push(half[n - k].conj());
    }
    full
}
