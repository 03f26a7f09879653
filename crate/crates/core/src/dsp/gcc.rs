//! Generalized cross-correlation and sub-sample lag search.
//!
//! A spectrum `G(k)` is read as a generalized cross power spectral density; its
//! GCC function at a real-valued lag `λ` is
//!
//! ```text
//! g(λ) = 1/N · Σ_k G(k) · exp(j·2π·k_s·λ/N)
//! ```
//!
//! with `k_s` the signed frequency of bin `k` (`k` below `N/2`, `k - N` from
//! `N/2` upwards). At integer lags this is the ordinary `N`-point IFFT; the
//! signed frequencies make it the band-limited interpolation between them.
//! A linear-phase spectrum `exp(j·2π·k_s·λ0/N)` therefore peaks at `λ = -λ0`.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;

use super::fft;
use super::golden::golden_section_max;
use super::xcorr::pick_peak;
use crate::error::{invalid, Error, Result};

/// Tolerance of the golden-section refinement, in lag units.
pub const LAG_TOLERANCE: f64 = 1e-4;

/// Floor applied to cross-spectrum magnitudes before phase-transform weighting.
pub const PHAT_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GccResult {
    pub integer_lag: i64,
    pub refined_lag: f64,
    /// `|g(refined_lag)|`.
    pub peak_magnitude: f64,
    /// The integer peak sits on the edge of the search range.
    pub at_boundary: bool,
}

fn check_halfwidth(n: usize, halfwidth: usize) -> Result<()> {
    if !n.is_power_of_two() || n < 2 {
        return invalid(format!("spectrum length {n} is not a power of two"));
    }
    if halfwidth >= n / 2 {
        return invalid(format!(
            "search halfwidth {halfwidth} must be below N/2 = {}",
            n / 2
        ));
    }
    Ok(())
}

/// `|g(λ)|` for an arbitrary full-length spectrum.
pub fn gcc_magnitude(gcpsd: &[Complex64], lag: f64) -> f64 {
    let n = gcpsd.len();
    let step = Complex64::from_polar(1.0, 2.0 * PI * lag / n as f64);
    let mut acc = Complex64::new(0.0, 0.0);
    let mut rot = Complex64::new(1.0, 0.0);
    for g in &gcpsd[..n / 2] {
        acc += g * rot;
        rot *= step;
    }
    let mut rot = Complex64::from_polar(1.0, -PI * lag);
    for g in &gcpsd[n / 2..] {
        acc += g * rot;
        rot *= step;
    }
    acc.norm() / n as f64
}

/// `|g(λ)|` for a Hermitian spectrum given by its one-sided half (`N/2 + 1` bins).
pub(crate) fn gcc_magnitude_onesided(half: &[Complex64], n: usize, lag: f64) -> f64 {
    let step = Complex64::from_polar(1.0, 2.0 * PI * lag / n as f64);
    let mut rot = step;
    let mut acc = Complex64::new(0.0, 0.0);
    for g in &half[1..n / 2] {
        acc += g * rot;
        rot *= step;
    }
    let total = half[0] + 2.0 * acc.re + half[n / 2] * Complex64::from_polar(1.0, -PI * lag);
    total.norm() / n as f64
}

fn refine<F>(integer_lag: i64, halfwidth: usize, magnitude: F) -> Result<GccResult>
where
    F: Fn(f64) -> f64,
{
    let centre = integer_lag as f64;
    let refined_lag = golden_section_max(&magnitude, centre - 0.5, centre + 0.5, LAG_TOLERANCE)?;
    Ok(GccResult {
        integer_lag,
        refined_lag,
        peak_magnitude: magnitude(refined_lag).max(magnitude(centre)),
        at_boundary: integer_lag.unsigned_abs() as usize == halfwidth,
    })
}

/// Integer IFFT peak within `±search_halfwidth`, refined to sub-sample precision.
pub fn lag_search(gcpsd: &[Complex64], search_halfwidth: usize) -> Result<GccResult> {
    let n = gcpsd.len();
    check_halfwidth(n, search_halfwidth)?;
    if gcpsd.iter().all(|g| g.norm_sqr() == 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    let mut buf = gcpsd.to_vec();
    fft::inverse_plan(n).process(&mut buf);
    let mags: Vec<f64> = (-(search_halfwidth as i64)..=search_halfwidth as i64)
        .map(|lag| buf[lag.rem_euclid(n as i64) as usize].norm() / n as f64)
        .collect();
    let (integer_lag, _) = pick_peak(&mags, search_halfwidth).ok_or(Error::DegenerateSpectrum)?;
    refine(integer_lag, search_halfwidth, |lag| gcc_magnitude(gcpsd, lag))
}

/// [`lag_search`] for a Hermitian spectrum supplied as its one-sided half.
pub(crate) fn lag_search_onesided(
    half: &[Complex64],
    n: usize,
    search_halfwidth: usize,
) -> Result<GccResult> {
    check_halfwidth(n, search_halfwidth)?;
    if half.len() != n / 2 + 1 {
        return invalid(format!(
            "one-sided spectrum has {} bins, expected {}",
            half.len(),
            n / 2 + 1
        ));
    }
    if half.iter().all(|g| g.norm_sqr() == 0.0) {
        return Err(Error::DegenerateSpectrum);
    }
    let mut buf = half.to_vec();
    let g = fft::irfft(&mut buf, n);
    let mags: Vec<f64> = (-(search_halfwidth as i64)..=search_halfwidth as i64)
        .map(|lag| g[lag.rem_euclid(n as i64) as usize].abs() / n as f64)
        .collect();
    let (integer_lag, _) = pick_peak(&mags, search_halfwidth).ok_or(Error::DegenerateSpectrum)?;
    refine(integer_lag, search_halfwidth, |lag| {
        gcc_magnitude_onesided(half, n, lag)
    })
}

/// Phase-transform weighted one-sided cross spectrum `conj(A)·B / |conj(A)·B|`.
pub(crate) fn phat_cross_spectrum(seg_a: &[f64], seg_b: &[f64]) -> Vec<Complex64> {
    let a = fft::rfft(&mut seg_a.to_vec());
    let b = fft::rfft(&mut seg_b.to_vec());
    a.iter()
        .zip(&b)
        .map(|(a, b)| {
            let c = a.conj() * b;
            c / c.norm().max(PHAT_FLOOR)
        })
        .collect()
}

/// GCC-PhaT delay of `seg_b` relative to `seg_a` (positive when `seg_b` lags).
pub fn gcc_phat(seg_a: &[f64], seg_b: &[f64], max_lag: usize) -> Result<GccResult> {
    let n = seg_a.len();
    if seg_b.len() != n {
        return invalid(format!(
            "segment lengths differ: {} vs {}",
            n,
            seg_b.len()
        ));
    }
    check_halfwidth(n, max_lag)?;
    if seg_a.iter().all(|&v| v == 0.0) || seg_b.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateSegment);
    }
    let cross = phat_cross_spectrum(seg_a, seg_b);
    lag_search_onesided(&cross, n, max_lag)
}
