//! Joint RP/SP estimator: two linear softmax models tied by an estimated SP
//! scale theta, with optional hard equality constraints on named
//! coefficients (NL-C) or none (NL-NC).
//!
//! RP probabilities are `softmax(beta_r . x)`, SP probabilities
//! `softmax(beta_s . x / theta)`. Both tasks normalize the same shared
//! alternative (index `K_r - 1`) to zero so tied coefficients are measured
//! against the same base. With no ties, `(beta_s, theta)` are identified
//! only up to the product `beta_s / theta`, so fitting reports theta = 1
//! fixed and flags it as non-identified.

use ndarray::{Array1, Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::mnl::OptConfig;
use crate::model::ProbModel;
use crate::{Error, Real, Result};

/// Equality constraint tying one (feature, alternative) coefficient across
/// RP and SP.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TieSpec {
    pub feature: String,
    pub alternative: usize,
}

/// Fitted joint model. `beta_*` are `K x (d+1)` with intercepts in column 0.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NlModel {
    pub beta_r: Array2<Real>,
    pub beta_s: Array2<Real>,
    pub log_theta: Real,
    pub ties: Vec<TieSpec>,
    /// False when `ties` is empty: theta is then fixed at 1 and meaningless.
    pub theta_identified: bool,
}

impl NlModel {
    pub fn theta(&self) -> Real {
        self.log_theta.exp()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct NlFit {
    pub model: NlModel,
    pub converged: bool,
    pub iterations: usize,
    pub grad_norm: Real,
    /// Pooled mean log-likelihood at the fitted point.
    pub log_likelihood: Real,
    pub warnings: Vec<String>,
}

/// Resolved tie: coefficient column (1-based features behind the intercept)
/// and alternative row, equal across tasks.
#[derive(Clone, Copy, Debug)]
struct ResolvedTie {
    row: usize,
    col: usize,
}

fn resolve_ties(data: &Dataset, ties: &[TieSpec]) -> Result<Vec<ResolvedTie>> {
    let schema = data.schema();
    let norm_row = data.k_r() - 1;
    let mut out = Vec::with_capacity(ties.len());
    for tie in ties {
        let j = schema
            .index_of(&tie.feature)
            .ok_or_else(|| Error::Config(format!("tie names unknown feature `{}`", tie.feature)))?;
        if schema.is_av_specific(&tie.feature) {
            return Err(Error::Config(format!(
                "av-specific feature `{}` is untieable",
                tie.feature
            )));
        }
        if tie.alternative >= data.k_r() {
            return Err(Error::Config(format!(
                "tie alternative {} is not shared between tasks (K_r = {})",
                tie.alternative,
                data.k_r()
            )));
        }
        if tie.alternative == norm_row {
            return Err(Error::Config(format!(
                "tie alternative {} is the normalized base and carries no coefficient",
                tie.alternative
            )));
        }
        let resolved = ResolvedTie {
            row: tie.alternative,
            col: 1 + j,
        };
        if out.iter().any(|r: &ResolvedTie| r.row == resolved.row && r.col == resolved.col) {
            return Err(Error::Config(format!(
                "duplicate tie ({}, {})",
                tie.feature, tie.alternative
            )));
        }
        out.push(resolved);
    }
    Ok(out)
}

/// Free-parameter layout for the joint fit.
struct Packing {
    k_r: usize,
    k_s: usize,
    cols: usize,
    fit_theta: bool,
    /// Free slot index of each beta_r entry.
    r_slots: Vec<Vec<Option<usize>>>,
    /// Free slot of each beta_s entry; tied entries point at the rp slot.
    s_slots: Vec<Vec<Option<usize>>>,
    n_free: usize,
}

impl Packing {
    fn new(data: &Dataset, ties: Vec<ResolvedTie>) -> Self {
        let k_r = data.k_r();
        let k_s = data.k_s();
        let cols = data.schema().d() + 1;
        let norm_row = k_r - 1;
        let fit_theta = !ties.is_empty();
        let mut n_free = 0usize;
        let mut r_slots = vec![vec![None; cols]; k_r];
        for (row, slot_row) in r_slots.iter_mut().enumerate() {
            if row == norm_row {
                continue;
            }
            for slot in slot_row.iter_mut() {
                *slot = Some(n_free);
                n_free += 1;
            }
        }
        let mut s_slots = vec![vec![None; cols]; k_s];
        for (row, slot_row) in s_slots.iter_mut().enumerate() {
            if row == norm_row {
                continue;
            }
            for (col, slot) in slot_row.iter_mut().enumerate() {
                if ties.iter().any(|t| t.row == row && t.col == col) {
                    *slot = r_slots[row][col];
                } else {
                    *slot = Some(n_free);
                    n_free += 1;
                }
            }
        }
        if fit_theta {
            n_free += 1; // log theta occupies the last slot
        }
        Self {
            k_r,
            k_s,
            cols,
            fit_theta,
            r_slots,
            s_slots,
            n_free,
        }
    }

    fn unpack(&self, free: &Array1<Real>) -> (Array2<Real>, Array2<Real>, Real) {
        let mut beta_r = Array2::zeros((self.k_r, self.cols));
        let mut beta_s = Array2::zeros((self.k_s, self.cols));
        for row in 0..self.k_r {
            for col in 0..self.cols {
                if let Some(slot) = self.r_slots[row][col] {
                    beta_r[[row, col]] = free[slot];
                }
            }
        }
        for row in 0..self.k_s {
            for col in 0..self.cols {
                if let Some(slot) = self.s_slots[row][col] {
                    beta_s[[row, col]] = free[slot];
                }
            }
        }
        let log_theta = if self.fit_theta { free[self.n_free - 1] } else { 0.0 };
        (beta_r, beta_s, log_theta)
    }
}

/// Pooled mean negative log-likelihood over both strata (the joint
/// objective; division by the total row count).
pub fn nl_pooled_nll(
    beta_r: &Array2<Real>,
    beta_s: &Array2<Real>,
    theta: Real,
    data: &Dataset,
) -> Real {
    let (xr, yr) = data.task_matrix(Task::Rp);
    let (xs, ys) = data.task_matrix(Task::Sp);
    let dr = crate::mnl::design(&xr);
    let ds = crate::mnl::design(&xs);
    let n = (yr.len() + ys.len()) as Real;
    let mut acc = 0.0;
    acc += log_lik_sum(&dr.dot(&beta_r.t()), &yr);
    acc += log_lik_sum(&(ds.dot(&beta_s.t()) / theta), &ys);
    -acc / n
}

fn log_lik_sum(logits: &Array2<Real>, y: &[usize]) -> Real {
    let mut acc = 0.0;
    for (row, &label) in logits.rows().into_iter().zip(y) {
        let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        let logsum = row.iter().map(|&v| (v - max).exp()).sum::<Real>().ln() + max;
        acc += row[label] - logsum;
    }
    acc
}

/// Row-softmax with residuals `p - y` left in place.
fn residuals(logits: Array2<Real>, y: &[usize]) -> Array2<Real> {
    let mut p = logits;
    for (mut row, &label) in p.rows_mut().into_iter().zip(y) {
        let max = row.iter().cloned().fold(Real::NEG_INFINITY, Real::max);
        row.mapv_inplace(|v| (v - max).exp());
        let s = row.sum();
        row.mapv_inplace(|v| v / s);
        row[label] -= 1.0;
    }
    p
}

/// Joint maximum-likelihood fit over `(beta_r, beta_s, log theta)` with tied
/// parameters represented once.
pub fn fit_nl(data: &Dataset, ties: &[TieSpec], opt: &OptConfig) -> Result<NlFit> {
    if data.n_task(Task::Rp) == 0 || data.n_task(Task::Sp) == 0 {
        return Err(Error::Config("joint fit needs both RP and SP rows".into()));
    }
    let resolved = resolve_ties(data, ties)?;
    let packing = Packing::new(data, resolved);
    let (xr, yr) = data.task_matrix(Task::Rp);
    let (xs, ys) = data.task_matrix(Task::Sp);
    let dr = crate::mnl::design(&xr);
    let dsx = crate::mnl::design(&xs);
    let n = (yr.len() + ys.len()) as Real;

    let f = |free: &Array1<Real>| {
        let (beta_r, beta_s, log_theta) = packing.unpack(free);
        let theta = log_theta.exp();
        let mut acc = 0.0;
        acc += log_lik_sum(&dr.dot(&beta_r.t()), &yr);
        acc += log_lik_sum(&(dsx.dot(&beta_s.t()) / theta), &ys);
        -acc / n
    };
    let grad = |free: &Array1<Real>| {
        let (beta_r, beta_s, log_theta) = packing.unpack(free);
        let theta = log_theta.exp();
        let res_r = residuals(dr.dot(&beta_r.t()), &yr);
        let logits_s = dsx.dot(&beta_s.t()) / theta;
        // d(logit)/d(log theta) = -logit, so accumulate before the residual
        // overwrite.
        let res_s = residuals(logits_s.clone(), &ys);
        let g_r = res_r.t().dot(&dr) / n;
        let g_s = res_s.t().dot(&dsx) / (n * theta);
        let g_log_theta = -(&res_s * &logits_s).sum() / n;
        let mut g = Array1::zeros(packing.n_free);
        for row in 0..packing.k_r {
            for col in 0..packing.cols {
                if let Some(slot) = packing.r_slots[row][col] {
                    g[slot] += g_r[[row, col]];
                }
            }
        }
        for row in 0..packing.k_s {
            for col in 0..packing.cols {
                if let Some(slot) = packing.s_slots[row][col] {
                    g[slot] += g_s[[row, col]];
                }
            }
        }
        if packing.fit_theta {
            g[packing.n_free - 1] = g_log_theta;
        }
        g
    };

    let mut free = Array1::zeros(packing.n_free);
    let mut warnings = Vec::new();
    let mut alpha = opt.init_step;
    let mut fval = f(&free);
    let mut iterations = 0;
    let mut grad_norm = Real::INFINITY;
    let mut converged = false;
    for it in 0..opt.max_iter {
        iterations = it;
        let g = grad(&free);
        grad_norm = g.iter().fold(0.0, |m: Real, v| m.max(v.abs()));
        if grad_norm < opt.tol {
            converged = true;
            break;
        }
        let g_sq: Real = g.iter().map(|v| v * v).sum();
        let mut accepted = false;
        for _ in 0..60 {
            let cand = &free - &(&g * alpha);
            let f_new = f(&cand);
            if f_new <= fval - 1e-4 * alpha * g_sq {
                free = cand;
                fval = f_new;
                alpha = (alpha * 1.5).min(1e3);
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            converged = grad_norm < opt.tol * 100.0;
            break;
        }
    }

    let (beta_r, beta_s, log_theta) = packing.unpack(&free);
    if packing.fit_theta && log_theta.abs() > 10.0 {
        warnings.push(format!("theta diverged (log theta = {log_theta}); fit flagged"));
    }
    // Enforce the tie equalities exactly on the emitted matrices.
    let model = NlModel {
        beta_r,
        beta_s,
        log_theta,
        ties: ties.to_vec(),
        theta_identified: packing.fit_theta,
    };
    let log_likelihood = -nl_pooled_nll(&model.beta_r, &model.beta_s, model.theta(), data);
    Ok(NlFit {
        model,
        converged,
        iterations,
        grad_norm,
        log_likelihood,
        warnings,
    })
}

/// RP: `softmax(beta_r . x)`; SP: `softmax(beta_s . x / theta)`.
pub fn predict_nl(model: &NlModel, x: ArrayView1<'_, Real>, task: Task) -> Result<Array1<Real>> {
    let beta = match task {
        Task::Rp => &model.beta_r,
        Task::Sp => &model.beta_s,
    };
    if x.len() + 1 != beta.ncols() {
        return Err(Error::Shape(format!(
            "input dim {} does not match model dim {}",
            x.len(),
            beta.ncols() - 1
        )));
    }
    let mut xt = Array1::ones(x.len() + 1);
    xt.slice_mut(ndarray::s![1..]).assign(&x);
    let v = beta.dot(&xt);
    let t = match task {
        Task::Rp => 1.0,
        Task::Sp => model.theta(),
    };
    crate::math::softmax_t(v.view(), t)
}

impl ProbModel for NlModel {
    fn n_alternatives(&self, task: Task) -> usize {
        match task {
            Task::Rp => self.beta_r.nrows(),
            Task::Sp => self.beta_s.nrows(),
        }
    }

    fn predict(&self, x: ArrayView1<'_, Real>, task: Task) -> Result<Array1<Real>> {
        predict_nl(self, x, task)
    }

    fn prob_input_gradient(
        &self,
        x: ArrayView1<'_, Real>,
        task: Task,
        alt: usize,
    ) -> Result<Array1<Real>> {
        let p = self.predict(x, task)?;
        let (beta, t) = match task {
            Task::Rp => (&self.beta_r, 1.0),
            Task::Sp => (&self.beta_s, self.theta()),
        };
        let feats = beta.slice(ndarray::s![.., 1..]);
        let mean = p.dot(&feats);
        Ok((&feats.row(alt) - &mean) * (p[alt] / t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mnl::{fit_mnl, predict_mnl, MnlModel, TaskScope};
    use crate::synth::{generate, scaled_nl_spec, SharedCoeff};
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;

    fn ties_from_shared(shared: &[SharedCoeff]) -> Vec<TieSpec> {
        shared
            .iter()
            .map(|s| TieSpec {
                feature: s.feature.clone(),
                alternative: s.alternative,
            })
            .collect()
    }

    #[test]
    fn theta_one_reduces_sp_to_plain_mnl() {
        let beta_s = ndarray::arr2(&[
            [0.1, 0.5, -0.5, 0.2],
            [0.0, -0.3, 0.4, 0.0],
            [0.0, 0.0, 0.0, 0.0],
            [0.3, 0.1, 0.2, -1.0],
        ]);
        let model = NlModel {
            beta_r: Array2::zeros((3, 4)),
            beta_s: beta_s.clone(),
            log_theta: 0.0,
            ties: vec![],
            theta_identified: false,
        };
        let mnl = MnlModel { beta: beta_s, scope: TaskScope::Sp };
        let x = arr1(&[0.4, -1.0, 2.0]);
        let a = predict_nl(&model, x.view(), Task::Sp).unwrap();
        let b = predict_mnl(&mnl, x.view()).unwrap();
        for (u, v) in a.iter().zip(b.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-14);
        }
    }

    #[test]
    fn large_theta_flattens_sp_and_preserves_argmax() {
        let beta_s = ndarray::arr2(&[[0.0, 1.0], [0.0, -1.0], [0.5, 0.3]]);
        let mut model = NlModel {
            beta_r: Array2::zeros((2, 2)),
            beta_s,
            log_theta: 0.0,
            ties: vec![],
            theta_identified: true,
        };
        let x = arr1(&[0.8]);
        let base = predict_nl(&model, x.view(), Task::Sp).unwrap();
        let base_argmax = crate::data::argmax(&base);
        for log_theta in [1.0, 3.0, 6.0] {
            model.log_theta = log_theta;
            let p = predict_nl(&model, x.view(), Task::Sp).unwrap();
            assert_eq!(crate::data::argmax(&p), base_argmax);
        }
        model.log_theta = 8.0;
        let p = predict_nl(&model, x.view(), Task::Sp).unwrap();
        for v in &p {
            assert!((v - 1.0 / 3.0).abs() < 1e-3);
        }
    }

    #[test]
    fn empty_ties_decomposes_into_standalone_mnl() {
        let spec = scaled_nl_spec(1.0);
        let data = generate(&spec, 500, 500, 21).unwrap();
        let opt = OptConfig { tol: 1e-10, max_iter: 100_000, ..Default::default() };
        let nl = fit_nl(&data, &[], &opt).unwrap();
        assert!(!nl.model.theta_identified);
        assert_eq!(nl.model.theta(), 1.0);
        let mnl = fit_mnl(&data, TaskScope::Rp, &opt).unwrap();
        // Standalone MNL normalizes the last row; re-base to row K_r - 1 to
        // match the joint fit's normalization before comparing.
        let k_r = data.k_r();
        let base = mnl.model.beta.row(k_r - 1).to_owned();
        for k in 0..k_r {
            for j in 0..mnl.model.beta.ncols() {
                let rebased = mnl.model.beta[[k, j]] - base[j];
                assert!(
                    (nl.model.beta_r[[k, j]] - rebased).abs() < 1e-6,
                    "beta_r[{k},{j}]: {} vs {}",
                    nl.model.beta_r[[k, j]],
                    rebased
                );
            }
        }
    }

    #[test]
    fn likelihood_invariant_under_beta_s_theta_rescaling_without_ties() {
        let spec = scaled_nl_spec(1.0);
        let data = generate(&spec, 200, 200, 3).unwrap();
        let fit = fit_nl(&data, &[], &OptConfig::default()).unwrap();
        let base = nl_pooled_nll(&fit.model.beta_r, &fit.model.beta_s, 1.0, &data);
        for c in [0.5, 2.0, 10.0] {
            let scaled = &fit.model.beta_s * c;
            let nll = nl_pooled_nll(&fit.model.beta_r, &scaled, c, &data);
            assert!((nll - base).abs() < 1e-10, "c = {c}: {nll} vs {base}");
        }
    }

    #[test]
    fn symmetric_tasks_with_all_shared_ties_recover_theta_one() {
        let spec = scaled_nl_spec(1.0);
        let data = generate(&spec, 4000, 4000, 33).unwrap();
        let ties = ties_from_shared(&spec.shared_map);
        let fit = fit_nl(&data, &ties, &OptConfig::default()).unwrap();
        let theta = fit.model.theta();
        assert!((0.9..=1.1).contains(&theta), "theta = {theta}");
        // Tied coefficients are exactly equal after fitting.
        for tie in &ties {
            let j = 1 + data.schema().index_of(&tie.feature).unwrap();
            assert_eq!(
                fit.model.beta_r[[tie.alternative, j]],
                fit.model.beta_s[[tie.alternative, j]]
            );
        }
    }

    #[test]
    fn constrained_fit_has_no_better_train_likelihood_than_unconstrained() {
        let spec = scaled_nl_spec(2.0);
        let data = generate(&spec, 800, 800, 9).unwrap();
        let ties = ties_from_shared(&spec.shared_map);
        let opt = OptConfig { tol: 1e-8, ..Default::default() };
        let constrained = fit_nl(&data, &ties, &opt).unwrap();
        let unconstrained = fit_nl(&data, &[], &opt).unwrap();
        assert!(
            constrained.log_likelihood <= unconstrained.log_likelihood + 1e-8,
            "NL-C {} vs NL-NC {}",
            constrained.log_likelihood,
            unconstrained.log_likelihood
        );
    }

    #[test]
    fn tied_fit_is_locally_optimal_over_a_theta_grid() {
        let spec = scaled_nl_spec(2.0);
        let data = generate(&spec, 2000, 2000, 13).unwrap();
        let ties = ties_from_shared(&spec.shared_map);
        let fit = fit_nl(&data, &ties, &OptConfig::default()).unwrap();
        let best = nl_pooled_nll(&fit.model.beta_r, &fit.model.beta_s, fit.model.theta(), &data);
        for frac in [-0.2, -0.1, 0.1, 0.2] {
            let theta = fit.model.theta() * (1.0 + frac);
            let nll = nl_pooled_nll(&fit.model.beta_r, &fit.model.beta_s, theta, &data);
            assert!(nll >= best - 1e-10, "theta {theta} beats the fit");
        }
    }

    #[test]
    fn invalid_ties_rejected() {
        let spec = scaled_nl_spec(2.0);
        let data = generate(&spec, 50, 50, 1).unwrap();
        let opt = OptConfig::default();
        // Unknown feature.
        assert!(fit_nl(&data, &[TieSpec { feature: "nope".into(), alternative: 0 }], &opt).is_err());
        // av-specific feature untieable.
        assert!(
            fit_nl(&data, &[TieSpec { feature: "av_cost".into(), alternative: 0 }], &opt).is_err()
        );
        // AV alternative untieable.
        assert!(fit_nl(&data, &[TieSpec { feature: "cost".into(), alternative: 3 }], &opt).is_err());
    }
}
