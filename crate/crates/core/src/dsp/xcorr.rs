use rustfft::num_complex::Complex64;

use super::fft;
use crate::error::{invalid, Error, Result};

/// Integer-lag correlation peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrelationPeak {
    /// Positive when the second stream is delayed relative to the first.
    pub lag: i64,
    pub value: f64,
    /// The peak sits on `±max_lag`; the true offset may lie outside the search range.
    pub at_boundary: bool,
}

/// Linear cross-correlation `r[λ] = Σ x[n]·y[n+λ]` for `λ ∈ [-max_lag, max_lag]`,
/// evaluated through a zero-padded FFT. Index `i` of the result holds lag `i - max_lag`.
pub fn cross_correlation(x: &[f64], y: &[f64], max_lag: usize) -> Vec<f64> {
    let len = (x.len() + y.len()).next_power_of_two();
    let mut xb = vec![0.0; len];
    let mut yb = vec![0.0; len];
    xb[..x.len()].copy_from_slice(x);
    yb[..y.len()].copy_from_slice(y);
    let xs = fft::rfft(&mut xb);
    let ys = fft::rfft(&mut yb);
    let mut prod: Vec<Complex64> = xs.iter().zip(&ys).map(|(a, b)| a.conj() * b).collect();
    let r = fft::irfft(&mut prod, len);
    let scale = 1.0 / len as f64;
    (-(max_lag as i64)..=max_lag as i64)
        .map(|lag| r[lag.rem_euclid(len as i64) as usize] * scale)
        .collect()
}

/// Pick the maximizing lag. Ties (within round-off) go to the smallest `|λ|`, then to the negative side.
pub(crate) fn pick_peak(values: &[f64], max_lag: usize) -> Option<(i64, f64)> {
    let peak = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return None;
    }
    let slack = 1e-12 * values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v >= peak - slack)
        .map(|(i, &v)| (i as i64 - max_lag as i64, v))
        .min_by_key(|&(lag, _)| (lag.abs(), lag > 0))
}

pub fn cross_correlate_offset(x: &[f64], y: &[f64], max_lag: usize) -> Result<CorrelationPeak> {
    if x.is_empty() || y.is_empty() {
        return invalid("cross-correlation of an empty stream");
    }
    if max_lag >= x.len().min(y.len()) {
        return invalid(format!(
            "max lag {max_lag} must be below the shorter stream length {}",
            x.len().min(y.len())
        ));
    }
    if x.iter().all(|&v| v == 0.0) || y.iter().all(|&v| v == 0.0) {
        return Err(Error::DegenerateCorrelation);
    }
    let r = cross_correlation(x, y, max_lag);
    let (lag, value) = pick_peak(&r, max_lag).ok_or(Error::DegenerateCorrelation)?;
    Ok(CorrelationPeak {
        lag,
        value,
        at_boundary: lag.unsigned_abs() as usize == max_lag,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::white_noise;

    fn brute_force(x: &[f64], y: &[f64], max_lag: usize) -> Vec<f64> {
        (-(max_lag as i64)..=max_lag as i64)
            .map(|lag| {
                (0..x.len())
                    .filter_map(|n| {
                        let m = n as i64 + lag;
                        (m >= 0 && (m as usize) < y.len()).then(|| x[n] * y[m as usize])
                    })
                    .sum()
            })
            .collect()
    }

    fn delayed(x: &[f64], d: usize) -> Vec<f64> {
        let mut y = vec![0.0; x.len()];
        y[d..].copy_from_slice(&x[..x.len() - d]);
        y
    }

    #[test]
    fn fft_correlation_matches_brute_force() {
        let x = white_noise(700, 1);
        let y = white_noise(500, 2);
        let fast = cross_correlation(&x, &y, 120);
        let slow = brute_force(&x, &y, 120);
        for (a, b) in fast.iter().zip(&slow) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn delayed_copy_gives_positive_lag() {
        let x = white_noise(4000, 7);
        let y = delayed(&x, 100);
        let slow = brute_force(&x, &y, 200);
        let (oracle, _) = pick_peak(&slow, 200).unwrap();
        assert_eq!(oracle, 100);
        let peak = cross_correlate_offset(&x, &y, 200).unwrap();
        assert_eq!(peak.lag, 100);
        assert!(!peak.at_boundary);
        let back = cross_correlate_offset(&y, &x, 200).unwrap();
        assert_eq!(back.lag, -100);
    }

    #[test]
    fn identical_streams_give_zero() {
        let x = white_noise(2000, 9);
        assert_eq!(cross_correlate_offset(&x, &x, 300).unwrap().lag, 0);
    }

    #[test]
    fn delay_beyond_range_is_flagged_at_boundary() {
        // low-pass noise so the correlation decays smoothly towards the true lag
        let w = white_noise(4040, 11);
        let x: Vec<f64> = w.windows(40).map(|s| s.iter().sum()).collect();
        let y = delayed(&x, 60);
        let peak = cross_correlate_offset(&x, &y, 50).unwrap();
        let (oracle, _) = pick_peak(&brute_force(&x, &y, 50), 50).unwrap();
        assert_eq!(oracle, 50);
        assert_eq!(peak.lag, 50);
        assert!(peak.at_boundary);
    }

    #[test]
    fn ties_prefer_small_then_negative_lags() {
        assert_eq!(pick_peak(&[1.0, 0.0, 1.0], 1), Some((-1, 1.0)));
        assert_eq!(pick_peak(&[1.0, 1.0, 1.0], 1), Some((0, 1.0)));
    }

    #[test]
    fn zero_inputs_are_degenerate() {
        assert!(matches!(
            cross_correlate_offset(&[0.0; 10], &[0.0; 10], 3),
            Err(Error::DegenerateCorrelation)
        ));
        assert!(cross_correlate_offset(&[1.0; 10], &[1.0; 10], 10).is_err());
        assert!(cross_correlate_offset(&[], &[1.0], 0).is_err());
    }
}
