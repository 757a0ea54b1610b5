//! Central finite-difference gradient checking.

use crate::scalar::Real;

/// Compares `analytic` against central differences of `f` at the probed
/// coordinates of `x` and returns the worst relative error
/// `|analytic - numeric| / (|analytic| + 1e-8)`.
///
/// Precision follows `T`; instantiate with `f64` for tight checks. Probes must
/// avoid non-smooth points of `f` (kinks of `abs`, `max`, saturated clamps).
pub fn check_gradients<T, F>(f: F, x: &[T], analytic: &[T], probes: &[usize], step: T) -> T
where
    T: Real,
    F: Fn(&[T]) -> T,
{
    let mut worst = T::zero();
    let mut work = x.to_vec();
    let two = T::lit(2.0);
    for &i in probes {
        let orig = work[i];
        work[i] = orig + step;
        let plus = f(&work);
        work[i] = orig - step;
        let minus = f(&work);
        work[i] = orig;
        let numeric = (plus - minus) / (two * step);
        let err = (analytic[i] - numeric).abs() / (analytic[i].abs() + T::lit(1e-8));
        if err > worst || err.is_nan() {
            worst = err;
        }
    }
    worst
}
