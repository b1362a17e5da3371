//! Multitask feedforward choice model: `m1` shared ReLU layers feeding `m2`
//! task-specific layers per task, SP softmax with a learned temperature, and
//! mini-batch Adam training of the three-part regularized risk
//! (RP cross entropy + weighted SP cross entropy + weight penalties).
//!
//! Boundary configurations: `m2 = 0` is the pooled single-head network over
//! the SP alternative set (DNN-JOINT); `m1 = 0` with `lambda3 = 0` decouples
//! into two independently trained single-task networks (DNN-SPT).

mod train;

pub use train::{train, HistoryPoint, TrainOutput};

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::Task;
use crate::math::{
    backward_stack, forward_batch, softmax_rows_t, softmax_t, Activation, DenseLayer, LayerGrad,
    StackCache, PROB_CLAMP,
};
use crate::model::ProbModel;
use crate::{derive_seed, Error, Real, Result};

/// One point of the hyperparameter space, plus the training schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HyperConfig {
    /// Shared depth.
    pub m1: usize,
    /// Task-specific depth. 0 collapses to the pooled single-head network.
    pub m2: usize,
    /// Hidden width.
    pub width: usize,
    /// RP/SP risk ratio; fixed at 1 by convention.
    #[serde(default = "default_lambda0")]
    pub lambda0: Real,
    /// Penalty on shared weights.
    pub lambda1: Real,
    /// Penalty on SP-head weights.
    pub lambda2: Real,
    /// Penalty on the aligned SP-head/RP-head weight distance.
    pub lambda3: Real,
    pub n_iter: usize,
    /// Mini-batch rows drawn per task per step.
    pub batch: usize,
    #[serde(default = "default_lr")]
    pub lr: Real,
    pub seed: u64,
}

fn default_lambda0() -> Real {
    1.0
}

fn default_lr() -> Real {
    1e-3
}

impl HyperConfig {
    pub fn validate(&self) -> Result<()> {
        if self.m1 + self.m2 == 0 {
            return Err(Error::Config("m1 + m2 must be at least 1".into()));
        }
        if self.width == 0 && (self.m1 > 0 && self.m2 > 0 || self.m1 > 1 || self.m2 > 1) {
            return Err(Error::Config("width must be positive for hidden layers".into()));
        }
        for (name, v) in [
            ("lambda0", self.lambda0),
            ("lambda1", self.lambda1),
            ("lambda2", self.lambda2),
            ("lambda3", self.lambda3),
        ] {
            if !(v >= 0.0) {
                return Err(Error::Config(format!("{name} must be nonnegative, got {v}")));
            }
        }
        if self.batch == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        Ok(())
    }
}

/// The multitask network. With `m2 = 0` the shared stack ends in a linear
/// `K_s`-dim output layer and both heads are empty.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MtldnnModel {
    pub shared: Vec<DenseLayer<Real>>,
    pub rp_head: Vec<DenseLayer<Real>>,
    pub sp_head: Vec<DenseLayer<Real>>,
    /// SP temperature is `exp(log_t)`; RP softmax is always at temperature 1.
    pub log_t: Real,
    pub d: usize,
    pub k_r: usize,
    pub k_s: usize,
    /// Raw-input columns excluded from the head-alignment penalty (the
    /// av-specific features, zero on every RP row).
    pub av_indices: Vec<usize>,
}

fn he_layer(rng: &mut ChaCha8Rng, in_dim: usize, out_dim: usize, act: Activation) -> DenseLayer<Real> {
    let normal = Normal::new(0.0, (2.0 / in_dim as Real).sqrt()).expect("valid std");
    let weights = Array2::from_shape_fn((out_dim, in_dim), |_| normal.sample(rng));
    DenseLayer {
        weights,
        bias: Array1::zeros(out_dim),
        activation: act,
    }
}

/// Builds an initialized model: He-scaled weights (Normal with variance
/// `2/in_dim`), zero biases, temperature 1. Deterministic per seed, with
/// separate draw streams for the shared stack and each head so single-task
/// trainings reproduce the same initial weights.
pub fn build(
    hyper: &HyperConfig,
    d: usize,
    k_r: usize,
    k_s: usize,
    av_indices: Vec<usize>,
) -> Result<MtldnnModel> {
    hyper.validate()?;
    if d == 0 || k_r == 0 || k_s == 0 {
        return Err(Error::Config("dimensions must be positive".into()));
    }
    let w = hyper.width;
    let mut shared_rng = ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, 10));
    let mut rp_rng = ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, 11));
    let mut sp_rng = ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, 12));

    let mut shared = Vec::with_capacity(hyper.m1);
    let mut dim = d;
    for i in 0..hyper.m1 {
        let last_shared_is_output = hyper.m2 == 0 && i == hyper.m1 - 1;
        let (out, act) = if last_shared_is_output {
            (k_s, Activation::Linear)
        } else {
            (w, Activation::Relu)
        };
        shared.push(he_layer(&mut shared_rng, dim, out, act));
        dim = out;
    }

    let head = |rng: &mut ChaCha8Rng, k: usize| -> Vec<DenseLayer<Real>> {
        let mut layers = Vec::with_capacity(hyper.m2);
        let mut hd = dim;
        for i in 0..hyper.m2 {
            let (out, act) = if i == hyper.m2 - 1 {
                (k, Activation::Linear)
            } else {
                (w, Activation::Relu)
            };
            layers.push(he_layer(rng, hd, out, act));
            hd = out;
        }
        layers
    };
    let rp_head = head(&mut rp_rng, k_r);
    let sp_head = head(&mut sp_rng, k_s);

    Ok(MtldnnModel {
        shared,
        rp_head,
        sp_head,
        log_t: 0.0,
        d,
        k_r,
        k_s,
        av_indices,
    })
}

impl MtldnnModel {
    pub fn temperature(&self) -> Real {
        self.log_t.exp()
    }

    pub fn is_pooled(&self) -> bool {
        self.rp_head.is_empty() && self.sp_head.is_empty()
    }

    /// Total parameter count including the log-temperature.
    pub fn param_count(&self) -> usize {
        self.shared
            .iter()
            .chain(&self.rp_head)
            .chain(&self.sp_head)
            .map(|l| l.weights.len() + l.bias.len())
            .sum::<usize>()
            + 1
    }

    /// Flattens every parameter (layer weights row-major, then bias, over
    /// shared, RP head, SP head) with the log-temperature last.
    pub fn params_flat(&self) -> Vec<Real> {
        let mut out = Vec::with_capacity(self.param_count());
        for layer in self.shared.iter().chain(&self.rp_head).chain(&self.sp_head) {
            out.extend(layer.weights.iter());
            out.extend(layer.bias.iter());
        }
        out.push(self.log_t);
        out
    }

    /// Inverse of [`MtldnnModel::params_flat`].
    pub fn set_params(&mut self, params: &[Real]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                self.param_count(),
                params.len()
            )));
        }
        let mut pos = 0;
        for layer in self
            .shared
            .iter_mut()
            .chain(&mut self.rp_head)
            .chain(&mut self.sp_head)
        {
            for v in layer.weights.iter_mut() {
                *v = params[pos];
                pos += 1;
            }
            for v in layer.bias.iter_mut() {
                *v = params[pos];
                pos += 1;
            }
        }
        self.log_t = params[pos];
        Ok(())
    }

    fn stack_for(&self, task: Task) -> Vec<&DenseLayer<Real>> {
        let head = match task {
            Task::Rp => &self.rp_head,
            Task::Sp => &self.sp_head,
        };
        self.shared.iter().chain(head).collect()
    }

    /// Raw utilities for a batch of one task.
    pub fn utilities(&self, x: ArrayView2<'_, Real>, task: Task) -> Result<Array2<Real>> {
        let layers: Vec<DenseLayer<Real>> =
            self.stack_for(task).into_iter().cloned().collect();
        Ok(forward_batch(x, &layers)?.output)
    }

    /// Choice probabilities: RP at temperature 1, SP at the learned
    /// temperature (1 for the pooled configuration).
    pub fn predict_probs(&self, x: ArrayView1<'_, Real>, task: Task) -> Result<Array1<Real>> {
        let v = self.utilities(x.insert_axis(ndarray::Axis(0)), task)?;
        let t = match task {
            Task::Sp if !self.is_pooled() => self.temperature(),
            _ => 1.0,
        };
        softmax_t(v.row(0), t)
    }
}

/// Eq.-style loss components; penalties are reported with their lambda
/// weights applied, so every component is nonnegative.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    /// Mean RP cross entropy.
    pub rp_risk: Real,
    /// Mean SP cross entropy (temperature softmax).
    pub sp_risk: Real,
    pub l1_penalty: Real,
    pub l2_penalty: Real,
    pub l3_penalty: Real,
    pub total: Real,
}

impl LossParts {
    pub fn is_finite(&self) -> bool {
        [
            self.rp_risk,
            self.sp_risk,
            self.l1_penalty,
            self.l2_penalty,
            self.l3_penalty,
            self.total,
        ]
        .iter()
        .all(|v| v.is_finite())
    }

    pub fn first_non_finite(&self) -> Option<&'static str> {
        [
            (self.rp_risk, "rp_risk"),
            (self.sp_risk, "sp_risk"),
            (self.l1_penalty, "l1_penalty"),
            (self.l2_penalty, "l2_penalty"),
            (self.l3_penalty, "l3_penalty"),
            (self.total, "total"),
        ]
        .into_iter()
        .find(|(v, _)| !v.is_finite())
        .map(|(_, name)| name)
    }
}

/// One task's mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub x: Array2<Real>,
    pub y: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }
}

/// Aligned SP-head/RP-head weight positions entering the lambda3 penalty.
/// Hidden task layers match elementwise; the final layer matches the first
/// `K_r` SP output rows to the RP output rows. Input columns holding
/// av-specific features are excluded when a head consumes the raw input.
/// Biases never enter.
fn alignment_rows_cols(model: &MtldnnModel, layer_idx: usize) -> (usize, Vec<usize>) {
    let m2 = model.rp_head.len();
    let rp_layer = &model.rp_head[layer_idx];
    let rows = if layer_idx == m2 - 1 {
        model.k_r
    } else {
        rp_layer.out_dim()
    };
    let consumes_raw_input = model.shared.is_empty() && layer_idx == 0;
    let cols: Vec<usize> = (0..rp_layer.in_dim())
        .filter(|c| !consumes_raw_input || !model.av_indices.contains(c))
        .collect();
    (rows, cols)
}

/// Euclidean distance between the aligned SP-head and RP-head weights.
pub fn head_alignment_distance(model: &MtldnnModel) -> Real {
    let mut acc = 0.0;
    for i in 0..model.rp_head.len() {
        let (rows, cols) = alignment_rows_cols(model, i);
        let wr = &model.rp_head[i].weights;
        let ws = &model.sp_head[i].weights;
        for r in 0..rows {
            for &c in &cols {
                let d = ws[[r, c]] - wr[[r, c]];
                acc += d * d;
            }
        }
    }
    acc.sqrt()
}

fn mean_ce_from_probs(probs: &Array2<Real>, y: &[usize]) -> Real {
    let mut acc = 0.0;
    for (row, &label) in probs.rows().into_iter().zip(y) {
        acc -= row[label].max(PROB_CLAMP).ln();
    }
    acc / y.len() as Real
}

/// Forward through shared + head with caches kept for the reverse pass.
struct TaskForward {
    shared_cache: Option<StackCache<Real>>,
    head_cache: StackCache<Real>,
    probs: Array2<Real>,
}

fn task_forward(
    model: &MtldnnModel,
    x: ArrayView2<'_, Real>,
    head: &[DenseLayer<Real>],
    t: Real,
) -> Result<TaskForward> {
    let (shared_cache, head_in) = if model.shared.is_empty() {
        (None, x.to_owned())
    } else {
        let c = forward_batch(x, &model.shared)?;
        let out = c.output.clone();
        (Some(c), out)
    };
    let head_cache = forward_batch(head_in.view(), head)?;
    let probs = softmax_rows_t(head_cache.output.view(), t)?;
    Ok(TaskForward {
        shared_cache,
        head_cache,
        probs,
    })
}

/// Evaluates the full multitask loss on the given batches.
pub fn loss(
    model: &MtldnnModel,
    rp_batch: Option<&Batch>,
    sp_batch: Option<&Batch>,
    hyper: &HyperConfig,
) -> Result<LossParts> {
    Ok(loss_and_grad_impl(model, rp_batch, sp_batch, hyper, false)?.0)
}

/// Evaluates the loss and its analytic gradient with respect to every
/// parameter in [`MtldnnModel::params_flat`] order.
pub fn loss_and_grad(
    model: &MtldnnModel,
    rp_batch: Option<&Batch>,
    sp_batch: Option<&Batch>,
    hyper: &HyperConfig,
) -> Result<(LossParts, Vec<Real>)> {
    let (parts, grad) = loss_and_grad_impl(model, rp_batch, sp_batch, hyper, true)?;
    Ok((parts, grad.expect("gradient requested")))
}

struct GradAcc {
    shared: Vec<LayerGrad<Real>>,
    rp: Vec<LayerGrad<Real>>,
    sp: Vec<LayerGrad<Real>>,
    log_t: Real,
}

impl GradAcc {
    fn zeros(model: &MtldnnModel) -> Self {
        let zero = |layers: &[DenseLayer<Real>]| {
            layers
                .iter()
                .map(|l| LayerGrad {
                    weights: Array2::zeros(l.weights.raw_dim()),
                    bias: Array1::zeros(l.bias.raw_dim()),
                })
                .collect()
        };
        Self {
            shared: zero(&model.shared),
            rp: zero(&model.rp_head),
            sp: zero(&model.sp_head),
            log_t: 0.0,
        }
    }

    fn add(dst: &mut [LayerGrad<Real>], src: Vec<LayerGrad<Real>>) {
        for (d, s) in dst.iter_mut().zip(src) {
            d.weights += &s.weights;
            d.bias += &s.bias;
        }
    }

    fn flatten(self) -> Vec<Real> {
        let mut out = Vec::new();
        for g in self.shared.iter().chain(&self.rp).chain(&self.sp) {
            out.extend(g.weights.iter());
            out.extend(g.bias.iter());
        }
        out.push(self.log_t);
        out
    }
}

fn loss_and_grad_impl(
    model: &MtldnnModel,
    rp_batch: Option<&Batch>,
    sp_batch: Option<&Batch>,
    hyper: &HyperConfig,
    want_grad: bool,
) -> Result<(LossParts, Option<Vec<Real>>)> {
    let pooled = model.is_pooled();
    let mut acc = GradAcc::zeros(model);
    let mut parts = LossParts::default();
    let n_rp = rp_batch.map_or(0, Batch::len);
    let n_sp = sp_batch.map_or(0, Batch::len);
    if n_rp + n_sp == 0 {
        return Err(Error::Input("both batches are empty".into()));
    }

    // Risk weights per row: separate task means for the multitask model,
    // one pooled mean for the single-head configuration.
    let (w_rp, w_sp) = if pooled {
        let n = (n_rp + n_sp) as Real;
        (1.0 / n, 1.0 / n)
    } else {
        (
            if n_rp > 0 { 1.0 / n_rp as Real } else { 0.0 },
            if n_sp > 0 { hyper.lambda0 / n_sp as Real } else { 0.0 },
        )
    };

    let t_sp = if pooled { 1.0 } else { model.temperature() };

    // RP term.
    if let Some(batch) = rp_batch.filter(|b| !b.is_empty()) {
        let head: &[DenseLayer<Real>] = if pooled { &[] } else { &model.rp_head };
        let fwd = task_forward(model, batch.x.view(), head, 1.0)?;
        parts.rp_risk = mean_ce_from_probs(&fwd.probs, &batch.y);
        if want_grad {
            let mut g = fwd.probs.clone();
            for (mut row, &label) in g.rows_mut().into_iter().zip(&batch.y) {
                row[label] -= 1.0;
            }
            g *= w_rp;
            let (head_grads, g_in) = backward_stack(head, &fwd.head_cache, g);
            if pooled {
                // No head; g_in flows straight into the shared stack.
                if let Some(cache) = &fwd.shared_cache {
                    let (shared_grads, _) = backward_stack(&model.shared, cache, g_in);
                    GradAcc::add(&mut acc.shared, shared_grads);
                }
            } else {
                GradAcc::add(&mut acc.rp, head_grads);
                if let Some(cache) = &fwd.shared_cache {
                    let (shared_grads, _) = backward_stack(&model.shared, cache, g_in);
                    GradAcc::add(&mut acc.shared, shared_grads);
                }
            }
        }
    }

    // SP term.
    if let Some(batch) = sp_batch.filter(|b| !b.is_empty()) {
        let head: &[DenseLayer<Real>] = if pooled { &[] } else { &model.sp_head };
        let fwd = task_forward(model, batch.x.view(), head, t_sp)?;
        parts.sp_risk = mean_ce_from_probs(&fwd.probs, &batch.y);
        if want_grad {
            let mut res = fwd.probs.clone();
            for (mut row, &label) in res.rows_mut().into_iter().zip(&batch.y) {
                row[label] -= 1.0;
            }
            // d(risk)/d(logits) = (p - y) / T per row; d/d(log T) follows
            // from logits/T depending on T through exp(log_t).
            if !pooled {
                acc.log_t = -w_sp * (&res * &fwd.head_cache.output).sum() / t_sp;
            }
            let g = res * (w_sp / t_sp);
            let (head_grads, g_in) = backward_stack(head, &fwd.head_cache, g);
            if pooled {
                if let Some(cache) = &fwd.shared_cache {
                    let (shared_grads, _) = backward_stack(&model.shared, cache, g_in);
                    GradAcc::add(&mut acc.shared, shared_grads);
                }
            } else {
                GradAcc::add(&mut acc.sp, head_grads);
                if let Some(cache) = &fwd.shared_cache {
                    let (shared_grads, _) = backward_stack(&model.shared, cache, g_in);
                    GradAcc::add(&mut acc.shared, shared_grads);
                }
            }
        }
    }

    // Penalties. Biases are excluded from every norm.
    if hyper.lambda1 > 0.0 {
        let mut sq = 0.0;
        for (layer, grad) in model.shared.iter().zip(&mut acc.shared) {
            sq += layer.weights.iter().map(|v| v * v).sum::<Real>();
            if want_grad {
                grad.weights.scaled_add(2.0 * hyper.lambda1, &layer.weights);
            }
        }
        parts.l1_penalty = hyper.lambda1 * sq;
    }
    if hyper.lambda2 > 0.0 {
        let mut sq = 0.0;
        for (layer, grad) in model.sp_head.iter().zip(&mut acc.sp) {
            sq += layer.weights.iter().map(|v| v * v).sum::<Real>();
            if want_grad {
                grad.weights.scaled_add(2.0 * hyper.lambda2, &layer.weights);
            }
        }
        parts.l2_penalty = hyper.lambda2 * sq;
    }
    if hyper.lambda3 > 0.0 && !pooled {
        let mut sq = 0.0;
        for i in 0..model.rp_head.len() {
            let (rows, cols) = alignment_rows_cols(model, i);
            let wr = &model.rp_head[i].weights;
            let ws = &model.sp_head[i].weights;
            for r in 0..rows {
                for &c in &cols {
                    let d = ws[[r, c]] - wr[[r, c]];
                    sq += d * d;
                    if want_grad {
                        acc.sp[i].weights[[r, c]] += 2.0 * hyper.lambda3 * d;
                        acc.rp[i].weights[[r, c]] -= 2.0 * hyper.lambda3 * d;
                    }
                }
            }
        }
        parts.l3_penalty = hyper.lambda3 * sq;
    }

    parts.total = if pooled {
        let n = (n_rp + n_sp) as Real;
        (n_rp as Real * parts.rp_risk + n_sp as Real * parts.sp_risk) / n + parts.l1_penalty
    } else {
        let rp = if n_rp > 0 { parts.rp_risk } else { 0.0 };
        let sp = if n_sp > 0 { hyper.lambda0 * parts.sp_risk } else { 0.0 };
        rp + sp + parts.l1_penalty + parts.l2_penalty + parts.l3_penalty
    };

    let grad = want_grad.then(|| acc.flatten());
    Ok((parts, grad))
}

impl ProbModel for MtldnnModel {
    fn n_alternatives(&self, task: Task) -> usize {
        if self.is_pooled() {
            self.k_s
        } else {
            match task {
                Task::Rp => self.k_r,
                Task::Sp => self.k_s,
            }
        }
    }

    fn predict(&self, x: ArrayView1<'_, Real>, task: Task) -> Result<Array1<Real>> {
        self.predict_probs(x, task)
    }

    fn prob_input_gradient(
        &self,
        x: ArrayView1<'_, Real>,
        task: Task,
        alt: usize,
    ) -> Result<Array1<Real>> {
        let layers: Vec<DenseLayer<Real>> = self.stack_for(task).into_iter().cloned().collect();
        let batch = x.insert_axis(ndarray::Axis(0));
        let cache = forward_batch(batch.view(), &layers)?;
        let t = match task {
            Task::Sp if !self.is_pooled() => self.temperature(),
            _ => 1.0,
        };
        let p = softmax_t(cache.output.row(0), t)?;
        // dP_alt/dv_k = p_alt (delta_{alt,k} - p_k) / T.
        let k = p.len();
        let mut g = Array2::zeros((1, k));
        for j in 0..k {
            let delta = if j == alt { 1.0 } else { 0.0 };
            g[[0, j]] = p[alt] * (delta - p[j]) / t;
        }
        let (_, g_in) = backward_stack(&layers, &cache, g);
        Ok(g_in.row(0).to_owned())
    }
}
