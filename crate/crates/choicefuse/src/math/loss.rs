use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::num::Scalar;
use crate::{Error, Result};

/// Probabilities are clamped at this floor before taking logs, so a
/// confidently wrong prediction yields a large but finite loss.
pub const PROB_CLAMP: f64 = 1e-12;

/// Temperature softmax: `exp(v_k/T) / sum_j exp(v_j/T)`, computed with
/// max-subtraction for overflow safety.
pub fn softmax_t<S: Scalar>(v: ArrayView1<'_, S>, t: S) -> Result<Array1<S>> {
    if !(t > S::zero()) || !t.is_finite() {
        return Err(Error::Domain(format!("temperature must be positive, got {t}")));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Input("non-finite logits".into()));
    }
    let scaled = v.mapv(|x| x / t);
    let max = scaled.iter().cloned().fold(S::neg_infinity(), S::max);
    let mut out = scaled.mapv(|x| (x - max).exp());
    let sum = out.sum();
    out.mapv_inplace(|x| x / sum);
    Ok(out)
}

/// Row-wise temperature softmax over a batch of logits (`n x K`).
pub fn softmax_rows_t<S: Scalar>(v: ArrayView2<'_, S>, t: S) -> Result<Array2<S>> {
    if !(t > S::zero()) || !t.is_finite() {
        return Err(Error::Domain(format!("temperature must be positive, got {t}")));
    }
    let mut out = v.mapv(|x| x / t);
    for mut row in out.rows_mut() {
        let max = row.iter().cloned().fold(S::neg_infinity(), S::max);
        row.mapv_inplace(|x| (x - max).exp());
        let sum = row.sum();
        row.mapv_inplace(|x| x / sum);
    }
    Ok(out)
}

/// Log of the temperature-softmax probability of one component, numerically
/// stable form used by the likelihood evaluators.
pub fn log_softmax_t<S: Scalar>(v: ArrayView1<'_, S>, t: S, k: usize) -> Result<S> {
    let scaled = v.mapv(|x| x / t);
    let max = scaled.iter().cloned().fold(S::neg_infinity(), S::max);
    let logsum = scaled.iter().map(|&x| (x - max).exp()).sum::<S>().ln() + max;
    Ok(scaled[k] - logsum)
}

/// Cross entropy `-sum_k y_k log p_k` of a probability vector against a
/// one-hot target, with clamping at [`PROB_CLAMP`].
pub fn cross_entropy<S: Scalar>(p: ArrayView1<'_, S>, y: ArrayView1<'_, S>) -> Result<S> {
    if p.len() != y.len() {
        return Err(Error::Shape(format!(
            "probability length {} vs target length {}",
            p.len(),
            y.len()
        )));
    }
    let one = S::one();
    let mut ones = 0usize;
    for &v in y.iter() {
        if v == one {
            ones += 1;
        } else if v != S::zero() {
            return Err(Error::Input("target is not one-hot".into()));
        }
    }
    if ones != 1 {
        return Err(Error::Input("target is not one-hot".into()));
    }
    let clamp = S::from_f64_lossy(PROB_CLAMP);
    let mut acc = S::zero();
    for (&pk, &yk) in p.iter().zip(y.iter()) {
        if yk == one {
            acc = acc - pk.max(clamp).ln();
        }
    }
    Ok(acc)
}
