use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

/// Analysis window shapes. All are generated in their periodic (DFT-even) form.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WindowKind {
    Blackman,
    Hann,
    Rectangular,
}

impl WindowKind {
    pub fn coefficients(self, n: usize) -> Vec<f64> {
        let len = n as f64;
        (0..n)
            .map(|i| {
                let x = 2.0 * PI * i as f64 / len;
                match self {
                    WindowKind::Blackman => 0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos(),
                    WindowKind::Hann => 0.5 - 0.5 * x.cos(),
                    WindowKind::Rectangular => 1.0,
                }
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn periodic_hann_squared_overlap_is_constant_at_quarter_shift() {
        let n = 64;
        let w = WindowKind::Hann.coefficients(n);
        for m in 0..n / 4 {
            let s: f64 = (0..4).map(|l| w[m + l * n / 4].powi(2)).sum();
            assert!((s - 1.5).abs() < 1e-12);
        }
    }

    #[test]
    fn blackman_endpoints() {
        let w = WindowKind::Blackman.coefficients(16);
        assert!(w[0].abs() < 1e-12);
        assert!((w[8] - 1.0).abs() < 1e-12);
    }
}
