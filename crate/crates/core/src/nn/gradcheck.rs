//! Central finite-difference gradient checking.
//!
//! Every backward pass in this crate is validated against
//! `(f(x + h) - f(x - h)) / 2h` in double precision. The helpers live in
//! the library (not test code) so the acceptance suite can drive the same
//! checks at scale.

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOL: f64 = 1e-4;

/// Numerical gradient of a scalar function w.r.t. the buffer `x`, which is
/// restored to its original values afterwards.
pub fn central_diff(x: &mut [f64], step: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let orig = x[i];
        x[i] = orig + step;
        let plus = f(x);
        x[i] = orig - step;
        let minus = f(x);
        x[i] = orig;
        grad[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Relative error between an analytic and a numeric gradient:
/// `|a - n| / max(1, |a|, |n|)`, reduced by max over entries.
pub fn max_rel_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| (a - n).abs() / 1.0f64.max(a.abs()).max(n.abs()))
        .fold(0.0, f64::max)
}

/// Panic with context when the gradients disagree beyond `FD_REL_TOL`.
pub fn assert_close(analytic: &[f64], numeric: &[f64], what: &str) {
    let err = max_rel_error(analytic, numeric);
    assert!(
        err < FD_REL_TOL,
        "{what}: gradient mismatch, max relative error {err:.3e} (tol {FD_REL_TOL:.0e})"
    );
}
