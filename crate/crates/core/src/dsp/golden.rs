use crate::error::{invalid, Result};

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximize a unimodal objective on `[a, b]` by golden-section search.
///
/// The bracket is shrunk until it is no wider than `tol`; the midpoint of the
/// final bracket is returned. Uses at most
/// `ceil(ln((b - a) / tol) / ln(1 / 0.618)) + 2` objective evaluations.
pub fn golden_section_max<F>(mut objective: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: FnMut(f64) -> f64,
{
    if !(a < b) {
        return invalid(format!("golden-section interval [{a}, {b}] is empty"));
    }
    if !(tol > 0.0) {
        return invalid(format!("golden-section tolerance {tol} must be positive"));
    }
    let (mut lo, mut hi) = (a, b);
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = objective(x1);
    let mut f2 = objective(x2);
    while hi - lo > tol {
        if f1 >= f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = objective(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = objective(x2);
        }
    }
    Ok(0.5 * (lo + hi))
}
