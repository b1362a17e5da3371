use crate::num::Scalar;
use crate::{Error, Result};

/// Central finite-difference gradient, `(f(p + h e_i) - f(p - h e_i)) / 2h`
/// per parameter. Test oracle for the analytic backward passes.
pub fn finite_diff_grad<S, F>(mut loss_fn: F, params: &[S], h: S) -> Result<Vec<S>>
where
    S: Scalar,
    F: FnMut(&[S]) -> S,
{
    if !(h > S::zero()) {
        return Err(Error::Domain("finite-difference step must be positive".into()));
    }
    let two = S::from_f64_lossy(2.0);
    let mut work = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = work[i];
        work[i] = orig + h;
        let up = loss_fn(&work);
        work[i] = orig - h;
        let down = loss_fn(&work);
        work[i] = orig;
        grad.push((up - down) / (two * h));
    }
    Ok(grad)
}
