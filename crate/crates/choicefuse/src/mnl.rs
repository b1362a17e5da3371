//! Multinomial logit estimators: separate per-task models (MNL-SPT) and a
//! pooled model over the union alternative set (MNL-JOINT), fitted by
//! full-batch gradient descent with backtracking line search.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::model::ProbModel;
use crate::{Error, Real, Result};

/// Which rows a model was fitted on. `Joint` pools RP and SP over the SP
/// alternative set; RP rows keep their labels in `0..K_r`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TaskScope {
    Rp,
    Sp,
    Joint,
}

/// Linear-in-parameters logit. `beta` is `K x (d+1)` with the intercept in
/// column 0; the last alternative's row is fixed to zero for identification.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MnlModel {
    pub beta: Array2<Real>,
    pub scope: TaskScope,
}

/// Optimizer settings for the likelihood fits.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct OptConfig {
    pub max_iter: usize,
    /// Convergence threshold on the gradient max-norm.
    pub tol: Real,
    pub init_step: Real,
}

impl Default for OptConfig {
    fn default() -> Self {
        Self {
            max_iter: 20_000,
            tol: 1e-6,
            init_step: 1.0,
        }
    }
}

/// Fit outcome with convergence diagnostics.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MnlFit {
    pub model: MnlModel,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: Real,
    /// Mean log-likelihood per observation at the fitted point.
    pub log_likelihood: Real,
    pub warnings: Vec<String>,
}

/// Design matrix with a leading intercept column.
pub(crate) fn design(x: &Array2<Real>) -> Array2<Real> {
    let n = x.nrows();
    let mut d = Array2::ones((n, x.ncols() + 1));
    d.slice_mut(ndarray::s![.., 1..]).assign(x);
    d
}

/// Mean negative log-likelihood of labels under `softmax(design . beta^T)`.
pub fn mnl_nll(beta: &Array2<Real>, design_x: &Array2<Real>, y: &[usize]) -> Real {
    let logits = design_x.dot(&beta.t());
    let mut acc = 0.0;
    for (row, &label) in logits.rows().into_iter().zip(y) {
        let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let logsum = row.iter().map(|&v| (v - max).exp()).sum::<Real>().ln() + max;
        acc -= row[label] - logsum;
    }
    acc / y.len() as Real
}

/// Gradient of [`mnl_nll`] with the identification row zeroed.
fn mnl_grad(beta: &Array2<Real>, design_x: &Array2<Real>, y: &[usize]) -> Array2<Real> {
    let logits = design_x.dot(&beta.t());
    let mut p = logits;
    for mut row in p.rows_mut() {
        let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
    }
    for (mut row, &label) in p.rows_mut().into_iter().zip(y) {
        row[label] -= 1.0;
    }
    let mut g = p.t().dot(design_x);
    g /= y.len() as Real;
    let last = g.nrows() - 1;
    g.row_mut(last).fill(0.0);
    g
}

fn max_abs(a: &Array2<Real>) -> Real {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Full-batch gradient descent with Armijo backtracking. The objective is
/// convex, so accepted steps never increase the negative log-likelihood.
pub(crate) fn descend(
    beta0: Array2<Real>,
    opt: &OptConfig,
    f: impl Fn(&Array2<Real>) -> Real,
    grad: impl Fn(&Array2<Real>) -> Array2<Real>,
) -> (Array2<Real>, bool, usize, Real, Vec<String>) {
    let mut beta = beta0;
    let mut warnings = Vec::new();
    let mut alpha = opt.init_step;
    let mut fval = f(&beta);
    let mut iterations = 0;
    let mut grad_norm = Real::INFINITY;
    let mut converged = false;
    const ARMIJO_C: Real = 1e-4;
    for it in 0..opt.max_iter {
        iterations = it;
        let g = grad(&beta);
        grad_norm = max_abs(&g);
        if grad_norm < opt.tol {
            converged = true;
            break;
        }
        if max_abs(&beta) > 1e4 {
            warnings.push("coefficients diverging (possible perfect separation); returning partial result".into());
            break;
        }
        let g_sq: Real = g.iter().map(|v| v * v).sum();
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &beta - &(&g * alpha);
            let f_new = f(&cand);
            if f_new <= fval - ARMIJO_C * alpha * g_sq {
                beta = cand;
                fval = f_new;
                alpha = (alpha * 1.5).min(1e3);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            // Step collapsed below progress; gradient is numerically flat.
            converged = grad_norm < opt.tol * 100.0;
            break;
        }
    }
    (beta, converged, iterations, grad_norm, warnings)
}

/// Extracts the rows and labels for one scope. Joint pools both tasks over
/// `K_s` alternatives.
fn scoped_rows(data: &Dataset, scope: TaskScope) -> (Array2<Real>, Vec<usize>, usize) {
    match scope {
        TaskScope::Rp => {
            let (x, y) = data.task_matrix(Task::Rp);
            (x, y, data.k_r())
        }
        TaskScope::Sp => {
            let (x, y) = data.task_matrix(Task::Sp);
            (x, y, data.k_s())
        }
        TaskScope::Joint => {
            let (xr, yr) = data.task_matrix(Task::Rp);
            let (xs, ys) = data.task_matrix(Task::Sp);
            let x = ndarray::concatenate(Axis(0), &[xr.view(), xs.view()]).expect("same width");
            let mut y = yr;
            y.extend(ys);
            (x, y, data.k_s())
        }
    }
}

/// Maximum-likelihood fit of a multinomial logit on the scoped rows.
pub fn fit_mnl(data: &Dataset, scope: TaskScope, opt: &OptConfig) -> Result<MnlFit> {
    let (x, y, k) = scoped_rows(data, scope);
    if y.is_empty() {
        return Err(Error::Config(format!("no rows for scope {scope:?}")));
    }
    let dx = design(&x);
    let beta0 = Array2::zeros((k, dx.ncols()));
    let (beta, converged, iterations, grad_norm, warnings) = descend(
        beta0,
        opt,
        |b| mnl_nll(b, &dx, &y),
        |b| mnl_grad(b, &dx, &y),
    );
    let log_likelihood = -mnl_nll(&beta, &dx, &y);
    Ok(MnlFit {
        model: MnlModel { beta, scope },
        converged,
        iterations,
        grad_norm,
        log_likelihood,
        warnings,
    })
}

/// Softmax of `beta . [1; x]`.
pub fn predict_mnl(model: &MnlModel, x: ArrayView1<'_, Real>) -> Result<Array1<Real>> {
    if x.len() + 1 != model.beta.ncols() {
        return Err(Error::Shape(format!(
            "input dim {} does not match model dim {}",
            x.len(),
            model.beta.ncols() - 1
        )));
    }
    let mut xt = Array1::ones(x.len() + 1);
    xt.slice_mut(ndarray::s![1..]).assign(&x);
    let v = model.beta.dot(&xt);
    crate::math::softmax_t(v.view(), 1.0)
}

impl MnlModel {
    fn supports(&self, task: Task) -> bool {
        matches!(
            (self.scope, task),
            (TaskScope::Joint, _) | (TaskScope::Rp, Task::Rp) | (TaskScope::Sp, Task::Sp)
        )
    }
}

impl ProbModel for MnlModel {
    fn n_alternatives(&self, _task: Task) -> usize {
        self.beta.nrows()
    }

    fn predict(&self, x: ArrayView1<'_, Real>, task: Task) -> Result<Array1<Real>> {
        if !self.supports(task) {
            return Err(Error::Config(format!(
                "model with scope {:?} cannot predict {task} rows",
                self.scope
            )));
        }
        predict_mnl(self, x)
    }

    fn prob_input_gradient(
        &self,
        x: ArrayView1<'_, Real>,
        task: Task,
        alt: usize,
    ) -> Result<Array1<Real>> {
        let p = self.predict(x, task)?;
        // dP_a/dx = P_a (beta_a - sum_k P_k beta_k), feature columns only.
        let feats = self.beta.slice(ndarray::s![.., 1..]);
        let mean = p.dot(&feats);
        Ok((&feats.row(alt) - &mean) * p[alt])
    }
}

/// MNL-SPT: a per-task pair of independent multinomial logits.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MnlPair {
    pub rp: MnlModel,
    pub sp: MnlModel,
}

impl ProbModel for MnlPair {
    fn n_alternatives(&self, task: Task) -> usize {
        match task {
            Task::Rp => self.rp.beta.nrows(),
            Task::Sp => self.sp.beta.nrows(),
        }
    }

    fn predict(&self, x: ArrayView1<'_, Real>, task: Task) -> Result<Array1<Real>> {
        match task {
            Task::Rp => predict_mnl(&self.rp, x),
            Task::Sp => predict_mnl(&self.sp, x),
        }
    }

    fn prob_input_gradient(
        &self,
        x: ArrayView1<'_, Real>,
        task: Task,
        alt: usize,
    ) -> Result<Array1<Real>> {
        match task {
            Task::Rp => self.rp.prob_input_gradient(x, task, alt),
            Task::Sp => self.sp.prob_input_gradient(x, task, alt),
        }
    }
}
