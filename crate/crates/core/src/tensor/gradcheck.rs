//! Central finite differences for checking analytic gradients.
//!
//! These routines only evaluate the forward function; they never consult a
//! recorded backward pass.

use super::DenseMatrix;

/// Central-difference gradient of `f` at `x`.
pub fn numerical_gradient(f: impl Fn(&DenseMatrix) -> f64, x: &DenseMatrix, step: f64) -> DenseMatrix {
    let mut probe = x.clone();
    let mut grad = DenseMatrix::zeros(x.rows(), x.cols());
    for i in 0..x.values().len() {
        let orig = probe.values()[i];
        probe.values_mut()[i] = orig + step;
        let plus = f(&probe);
        probe.values_mut()[i] = orig - step;
        let minus = f(&probe);
        probe.values_mut()[i] = orig;
        grad.values_mut()[i] = (plus - minus) / (2.0 * step);
    }
    grad
}

/// Largest mismatch between two gradients, measured relative to the larger
/// magnitude. Entries whose absolute difference is at most `abs_floor` count
/// as agreeing.
pub fn max_relative_error(analytic: &DenseMatrix, numeric: &DenseMatrix, abs_floor: f64) -> f64 {
    assert_eq!(analytic.shape(), numeric.shape(), "gradient shapes differ");
    analytic
        .values()
        .iter()
        .zip(numeric.values())
        .map(|(a, n)| {
            let diff = (a - n).abs();
            if diff <= abs_floor {
                0.0
            } else {
                diff / a.abs().max(n.abs())
            }
        })
        .fold(0.0, f64::max)
}
