//! Central finite-difference gradient checker.
//!
//! This is the verification oracle for every backward implementation in
//! [`crate::ops`] and for the assembled model: perturb one coordinate at a
//! time, difference the scalar loss, compare against the analytic gradient.

use crate::tensor::Tensor;

/// Default perturbation size.
pub const DEFAULT_EPS: f64 = 1e-5;

/// Max relative error between `analytic` gradients and central differences
/// of `f` over every coordinate of `inputs`.
///
/// `f` is re-evaluated with perturbed copies of `inputs`; `analytic[i]` must
/// hold d`f`/d`inputs[i]`. Relative error uses `max(|a|, |n|, 1e-8)` as the
/// denominator so near-zero gradients do not blow up the ratio.
pub fn grad_check<F>(mut f: F, inputs: &[Tensor], analytic: &[Tensor], eps: f64) -> f64
where
    F: FnMut(&[Tensor]) -> f64,
{
    assert_eq!(inputs.len(), analytic.len());
    let mut work: Vec<Tensor> = inputs.to_vec();
    let mut max_rel = 0.0f64;
    for ti in 0..work.len() {
        assert_eq!(
            inputs[ti].shape(),
            analytic[ti].shape(),
            "analytic gradient shape mismatch for input {ti}"
        );
        for c in 0..work[ti].len() {
            let orig = work[ti].data()[c];
            work[ti].data_mut()[c] = orig + eps;
            let fp = f(&work);
            work[ti].data_mut()[c] = orig - eps;
            let fm = f(&work);
            work[ti].data_mut()[c] = orig;
            let numeric = (fp - fm) / (2.0 * eps);
            let a = analytic[ti].data()[c];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
        }
    }
    max_rel
}
