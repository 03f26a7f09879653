use std::f64::consts::PI;

/// Kaiser-windowed sinc interpolator for band-limited evaluation of a sample
/// stream between its samples. Integer positions reproduce samples exactly.
#[derive(Debug, Clone)]
pub struct SincInterpolator {
    half_taps: usize,
    beta: f64,
    i0_beta: f64,
}

impl Default for SincInterpolator {
    /// 64 taps, Kaiser β = 8.6.
    fn default() -> Self {
        Self::new(64, 8.6)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
pub(crate) fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        let px = PI * x;
        px.sin() / px
    }
}

impl SincInterpolator {
    pub fn new(taps: usize, beta: f64) -> Self {
        assert!(taps >= 2 && taps.is_multiple_of(2), "tap count must be even");
        Self {
            half_taps: taps / 2,
            beta,
            i0_beta: bessel_i0(beta),
        }
    }

    pub fn half_taps(&self) -> usize {
        self.half_taps
    }

    fn kernel(&self, x: f64) -> f64 {
        let r = x / self.half_taps as f64;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        sinc(x) * bessel_i0(self.beta * (1.0 - r * r).sqrt()) / self.i0_beta
    }

    /// Value of the band-limited continuation of `x` at (fractional) index `t`.
    /// Samples outside the stream count as zero.
    pub fn sample_at(&self, x: &[f64], t: f64) -> f64 {
        let base = t.floor();
        let frac = t - base;
        let base = base as i64;
        if frac == 0.0 {
            return if base >= 0 && (base as usize) < x.len() {
                x[base as usize]
            } else {
                0.0
            };
        }
        let h = self.half_taps as i64;
        let lo = (base - h + 1).max(0);
        let hi = (base + h).min(x.len() as i64 - 1);
        (lo..=hi)
            .map(|i| x[i as usize] * self.kernel(t - i as f64))
            .sum()
    }
}

/// `y[n] = x(n - delay)` by windowed-sinc interpolation, same length as `x`.
pub fn fractional_delay(x: &[f64], delay: f64) -> Vec<f64> {
    let interp = SincInterpolator::default();
    (0..x.len())
        .map(|n| interp.sample_at(x, n as f64 - delay))
        .collect()
}
