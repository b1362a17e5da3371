//! Mini-batch Adam training loop for the multitask network.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{loss_and_grad, Batch, HyperConfig, LossParts, MtldnnModel};
use crate::data::{Dataset, Task};
use crate::{derive_seed, Error, Real, Result};

const BETA1: Real = 0.9;
const BETA2: Real = 0.999;
const ADAM_EPS: Real = 1e-8;

/// Loss components sampled along the run (every 100 steps plus the final
/// step, on that step's mini-batches).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub iteration: usize,
    pub parts: LossParts,
}

#[derive(Clone, Debug)]
pub struct TrainOutput {
    pub model: MtldnnModel,
    pub history: Vec<HistoryPoint>,
}

struct TaskPool {
    x: Array2<Real>,
    y: Vec<usize>,
    rng: ChaCha8Rng,
}

impl TaskPool {
    fn sample(&mut self, batch: usize) -> Option<Batch> {
        let n = self.y.len();
        if n == 0 {
            return None;
        }
        let idx: Vec<usize> = (0..batch).map(|_| self.rng.gen_range(0..n)).collect();
        let d = self.x.ncols();
        let mut x = Array2::zeros((batch, d));
        let mut y = Vec::with_capacity(batch);
        for (r, &i) in idx.iter().enumerate() {
            x.row_mut(r).assign(&self.x.row(i));
            y.push(self.y[i]);
        }
        Some(Batch { x, y })
    }
}

/// Trains `model` in place on `data` with Adam. Each step draws one
/// mini-batch per task with replacement, from task-separate deterministic
/// streams keyed off `hyper.seed`, so a run touching only one task replays
/// identically when the other task's data is absent. A parameter whose
/// gradient stays exactly zero never moves.
pub fn train(model: &mut MtldnnModel, data: &Dataset, hyper: &HyperConfig) -> Result<TrainOutput> {
    hyper.validate()?;
    let mut pools: Vec<Option<TaskPool>> = Vec::with_capacity(2);
    for (task, stream) in [(Task::Rp, 20u64), (Task::Sp, 21u64)] {
        if data.n_task(task) == 0 {
            pools.push(None);
            continue;
        }
        let (x, y) = data.task_matrix(task);
        pools.push(Some(TaskPool {
            x,
            y,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(hyper.seed, stream)),
        }));
    }
    if pools.iter().all(Option::is_none) {
        return Err(Error::Input("training data is empty".into()));
    }

    let mut params = model.params_flat();
    let mut m = vec![0.0; params.len()];
    let mut v = vec![0.0; params.len()];
    let mut history = Vec::new();

    for step in 0..hyper.n_iter {
        let rp = pools[0].as_mut().and_then(|p| p.sample(hyper.batch));
        let sp = pools[1].as_mut().and_then(|p| p.sample(hyper.batch));
        let (parts, grad) = loss_and_grad(model, rp.as_ref(), sp.as_ref(), hyper)?;
        if let Some(component) = parts.first_non_finite() {
            return Err(Error::Training {
                iteration: step,
                component: component.into(),
            });
        }
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::Training {
                iteration: step,
                component: "gradient".into(),
            });
        }

        let t = (step + 1) as Real;
        let bc1 = 1.0 - BETA1.powf(t);
        let bc2 = 1.0 - BETA2.powf(t);
        for i in 0..params.len() {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * grad[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * grad[i] * grad[i];
            let m_hat = m[i] / bc1;
            let v_hat = v[i] / bc2;
            params[i] -= hyper.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
        }
        model.set_params(&params)?;

        if step % 100 == 0 || step + 1 == hyper.n_iter {
            history.push(HistoryPoint {
                iteration: step,
                parts,
            });
        }
    }

    Ok(TrainOutput {
        model: model.clone(),
        history,
    })
}
