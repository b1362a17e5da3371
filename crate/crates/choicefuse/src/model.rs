//! Trait shared by every fitted model, plus accuracy evaluation over a
//! dataset. Used by the search ranking, ensembling, and interpretation.

use ndarray::{Array1, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{argmax, Dataset, Task};
use crate::{Error, Real, Result};

/// A fitted choice model: probability vectors plus input gradients.
pub trait ProbModel: Send + Sync {
    /// Length of the probability vector this model emits for `task`.
    fn n_alternatives(&self, task: Task) -> usize;

    /// Choice probabilities for one (standardized) feature vector.
    fn predict(&self, x: ArrayView1<'_, Real>, task: Task) -> Result<Array1<Real>>;

    /// Gradient of `P(alt)` with respect to the input vector, in
    /// standardized feature units.
    fn prob_input_gradient(
        &self,
        x: ArrayView1<'_, Real>,
        task: Task,
        alt: usize,
    ) -> Result<Array1<Real>>;
}

/// Wrapper that renormalizes a pooled model's RP predictions over the first
/// `k_r` alternatives (the `--mask-rp` behavior). SP passes through.
pub struct MaskRp<'a> {
    pub inner: &'a dyn ProbModel,
    pub k_r: usize,
}

impl ProbModel for MaskRp<'_> {
    fn n_alternatives(&self, task: Task) -> usize {
        match task {
            Task::Rp => self.k_r,
            Task::Sp => self.inner.n_alternatives(Task::Sp),
        }
    }

    fn predict(&self, x: ArrayView1<'_, Real>, task: Task) -> Result<Array1<Real>> {
        let p = self.inner.predict(x, task)?;
        match task {
            Task::Sp => Ok(p),
            Task::Rp => {
                let head = p.slice(ndarray::s![..self.k_r]).to_owned();
                let sum = head.sum();
                if sum <= 0.0 {
                    return Err(Error::Domain("masked probabilities sum to zero".into()));
                }
                Ok(head / sum)
            }
        }
    }

    fn prob_input_gradient(
        &self,
        x: ArrayView1<'_, Real>,
        task: Task,
        alt: usize,
    ) -> Result<Array1<Real>> {
        match task {
            Task::Sp => self.inner.prob_input_gradient(x, task, alt),
            Task::Rp => {
                // q_a = p_a / s with s = sum_{k < k_r} p_k.
                let p = self.inner.predict(x, task)?;
                let s: Real = p.slice(ndarray::s![..self.k_r]).sum();
                let grad_a = self.inner.prob_input_gradient(x, task, alt)?;
                let mut grad_s: Array1<Real> = Array1::zeros(x.len());
                for k in 0..self.k_r {
                    grad_s = grad_s + self.inner.prob_input_gradient(x, task, k)?;
                }
                Ok(grad_a / s - &grad_s * (p[alt] / (s * s)))
            }
        }
    }
}

/// Pooled and per-task accuracy over one dataset. The joint figure weights
/// every observation equally.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AccuracySummary {
    pub joint: Real,
    pub rp: Real,
    pub sp: Real,
}

/// Evaluates a model on every row of `data`, predicting each row under its
/// own task.
pub fn evaluate(model: &dyn ProbModel, data: &Dataset) -> Result<AccuracySummary> {
    let mut hits = [0usize; 2];
    let mut counts = [0usize; 2];
    for obs in data.rows() {
        let p = model.predict(obs.x.view(), obs.task)?;
        let idx = if obs.task == Task::Rp { 0 } else { 1 };
        counts[idx] += 1;
        if argmax(&p) == obs.choice {
            hits[idx] += 1;
        }
    }
    let frac = |h: usize, c: usize| if c == 0 { 0.0 } else { h as Real / c as Real };
    Ok(AccuracySummary {
        joint: frac(hits[0] + hits[1], counts[0] + counts[1]),
        rp: frac(hits[0], counts[0]),
        sp: frac(hits[1], counts[1]),
    })
}
