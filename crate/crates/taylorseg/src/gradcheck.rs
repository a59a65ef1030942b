//! Central finite-difference oracles for gradient verification.
//!
//! These helpers evaluate a closure forward-only, so they stay independent of
//! the tape implementation they are used to check.

use crate::tensor::Tensor;

pub const DEFAULT_H: f64 = 1e-5;

/// Central finite-difference gradient of a scalar function of one tensor.
pub fn finite_diff<F>(f: F, x: &Tensor<f64>, h: f64) -> Tensor<f64>
where
    F: Fn(&Tensor<f64>) -> f64,
{
    let mut grad = Tensor::zeros(x.shape());
    let mut xp = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        xp.data_mut()[i] = orig + h;
        let fp = f(&xp);
        xp.data_mut()[i] = orig - h;
        let fm = f(&xp);
        xp.data_mut()[i] = orig;
        grad.data_mut()[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

/// Relative error between an analytic gradient and its finite-difference
/// estimate: `||a - fd|| / (||a|| + ||fd|| + tiny)`.
pub fn grad_rel_err(analytic: &Tensor<f64>, fd: &Tensor<f64>) -> f64 {
    crate::tensor::relative_error(analytic, fd)
}
