//! Random hyperparameter search over the multitask architecture grid, plus
//! probability-averaging ensembles of the top runs.

use ndarray::{Array1, ArrayView1};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Task};
use crate::model::{evaluate, AccuracySummary, ProbModel};
use crate::mtldnn::{self, loss, Batch, HyperConfig, MtldnnModel};
use crate::{derive_seed, Error, Real, Result};

/// The sampling grid. Every draw picks uniformly and independently from each
/// list; the training schedule fields are fixed across the search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SearchSpace {
    pub m1: Vec<usize>,
    pub m2: Vec<usize>,
    pub width: Vec<usize>,
    pub lambda1: Vec<Real>,
    pub lambda2: Vec<Real>,
    pub lambda3: Vec<Real>,
    pub n_iter: usize,
    pub batch: usize,
    #[serde(default = "super_default_lr")]
    pub lr: Real,
}

fn super_default_lr() -> Real {
    1e-3
}

impl Default for SearchSpace {
    /// The full-scale grid used for the reference experiments.
    fn default() -> Self {
        let lambdas = vec![1e-20, 1e-4, 1e-2, 5e-1];
        SearchSpace {
            m1: (1..=5).collect(),
            m2: (1..=5).collect(),
            width: vec![25, 50, 100, 200],
            lambda1: lambdas.clone(),
            lambda2: lambdas.clone(),
            lambda3: lambdas,
            n_iter: 20_000,
            batch: 200,
            lr: 1e-3,
        }
    }
}

impl SearchSpace {
    pub fn validate(&self) -> Result<()> {
        for (name, list) in [("m1", &self.m1), ("m2", &self.m2), ("width", &self.width)] {
            if list.is_empty() {
                return Err(Error::Config(format!("search list {name} is empty")));
            }
        }
        for (name, list) in [
            ("lambda1", &self.lambda1),
            ("lambda2", &self.lambda2),
            ("lambda3", &self.lambda3),
        ] {
            if list.is_empty() {
                return Err(Error::Config(format!("search list {name} is empty")));
            }
            if list.iter().any(|v| !(*v >= 0.0)) {
                return Err(Error::Config(format!("search list {name} has a negative entry")));
            }
        }
        if self.m1.iter().max() == Some(&0) && self.m2.iter().max() == Some(&0) {
            return Err(Error::Config("m1 and m2 cannot both be fixed at 0".into()));
        }
        Ok(())
    }

    fn pick<T: Copy>(list: &[T], rng: &mut ChaCha8Rng) -> T {
        list[rng.gen_range(0..list.len())]
    }

    /// One uniform draw from the grid. Depths are redrawn if both come up 0.
    pub fn sample(&self, rng: &mut ChaCha8Rng, seed: u64) -> HyperConfig {
        loop {
            let m1 = Self::pick(&self.m1, rng);
            let m2 = Self::pick(&self.m2, rng);
            if m1 + m2 == 0 {
                continue;
            }
            return HyperConfig {
                m1,
                m2,
                width: Self::pick(&self.width, rng),
                lambda0: 1.0,
                lambda1: Self::pick(&self.lambda1, rng),
                lambda2: Self::pick(&self.lambda2, rng),
                lambda3: Self::pick(&self.lambda3, rng),
                n_iter: self.n_iter,
                batch: self.batch,
                lr: self.lr,
                seed,
            };
        }
    }
}

/// How runs are ranked: lower held-out risk, or higher held-out pooled
/// accuracy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Selection {
    TestRisk,
    TestJointAccuracy,
}

/// One completed training run inside a search.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchRun {
    /// Position of this draw in the search sequence.
    pub draw: usize,
    pub hyper: HyperConfig,
    pub model: MtldnnModel,
    /// Full regularized loss on the held-out set.
    pub test_risk: Real,
    pub test_accuracy: AccuracySummary,
}

impl SearchRun {
    fn score(&self, selection: Selection) -> Real {
        match selection {
            Selection::TestRisk => -self.test_risk,
            Selection::TestJointAccuracy => self.test_accuracy.joint,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SearchOutcome {
    /// Successful runs, best first. Ties break toward the earlier draw.
    pub runs: Vec<SearchRun>,
    /// Draw indices whose training failed (non-finite loss) and were skipped.
    pub failed: Vec<usize>,
    pub selection: Selection,
}

impl SearchOutcome {
    pub fn best(&self) -> Option<&SearchRun> {
        self.runs.first()
    }
}

fn full_batches(data: &Dataset) -> (Option<Batch>, Option<Batch>) {
    let mut out = [None, None];
    for (slot, task) in [(0usize, Task::Rp), (1, Task::Sp)] {
        if data.n_task(task) > 0 {
            let (x, y) = data.task_matrix(task);
            out[slot] = Some(Batch { x, y });
        }
    }
    let [rp, sp] = out;
    (rp, sp)
}

/// Held-out risk: the training objective evaluated once on the whole test
/// set (penalties included).
pub fn test_risk(model: &MtldnnModel, test: &Dataset, hyper: &HyperConfig) -> Result<Real> {
    let (rp, sp) = full_batches(test);
    Ok(loss(model, rp.as_ref(), sp.as_ref(), hyper)?.total)
}

/// Draws `n_draws` configurations sequentially from one seeded stream, then
/// trains them in parallel; per-run seeds derive from `seed` and the draw
/// index, so the ranking is independent of scheduling order. Runs whose
/// training diverges are recorded in `failed` and excluded.
pub fn random_search(
    space: &SearchSpace,
    train: &Dataset,
    test: &Dataset,
    n_draws: usize,
    seed: u64,
    selection: Selection,
) -> Result<SearchOutcome> {
    space.validate()?;
    if n_draws == 0 {
        return Err(Error::Config("n_draws must be positive".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 1));
    let hypers: Vec<HyperConfig> = (0..n_draws)
        .map(|i| space.sample(&mut rng, derive_seed(seed, 1000 + i as u64)))
        .collect();

    let results: Vec<(usize, Result<SearchRun>)> = hypers
        .into_par_iter()
        .enumerate()
        .map(|(draw, hyper)| {
            let run = (|| {
                let mut model = mtldnn::build(
                    &hyper,
                    train.schema().d(),
                    train.k_r(),
                    train.k_s(),
                    train.schema().av_indices(),
                )?;
                mtldnn::train(&mut model, train, &hyper)?;
                let risk = test_risk(&model, test, &hyper)?;
                let acc = evaluate(&model, test)?;
                Ok(SearchRun {
                    draw,
                    hyper,
                    model,
                    test_risk: risk,
                    test_accuracy: acc,
                })
            })();
            (draw, run)
        })
        .collect();

    let mut runs = Vec::new();
    let mut failed = Vec::new();
    for (draw, res) in results {
        match res {
            Ok(run) => runs.push(run),
            Err(Error::Training { .. }) => failed.push(draw),
            Err(e) => return Err(e),
        }
    }
    if runs.is_empty() {
        return Err(Error::Training {
            iteration: 0,
            component: "every search run diverged".into(),
        });
    }
    runs.sort_by(|a, b| {
        b.score(selection)
            .partial_cmp(&a.score(selection))
            .expect("finite scores")
            .then(a.draw.cmp(&b.draw))
    });
    Ok(SearchOutcome {
        runs,
        failed,
        selection,
    })
}

/// Averages member probabilities (uniform weights), task by task.
pub struct Ensemble {
    pub members: Vec<MtldnnModel>,
}

impl Ensemble {
    pub fn new(members: Vec<MtldnnModel>) -> Result<Self> {
        if members.is_empty() {
            return Err(Error::Config("ensemble needs at least one member".into()));
        }
        let (k_r, k_s) = (members[0].k_r, members[0].k_s);
        let pooled = members[0].is_pooled();
        for m in &members[1..] {
            if m.k_r != k_r || m.k_s != k_s || m.is_pooled() != pooled {
                return Err(Error::Config(
                    "ensemble members must share alternative sets".into(),
                ));
            }
        }
        Ok(Self { members })
    }
}

/// Takes the top `k` runs of an outcome (fewer if the search produced fewer).
pub fn ensemble_topk(outcome: &SearchOutcome, k: usize) -> Result<Ensemble> {
    if k == 0 {
        return Err(Error::Config("ensemble size must be positive".into()));
    }
    let take = k.min(outcome.runs.len());
    Ensemble::new(
        outcome.runs[..take]
            .iter()
            .map(|r| r.model.clone())
            .collect(),
    )
}

impl ProbModel for Ensemble {
    fn n_alternatives(&self, task: Task) -> usize {
        self.members[0].n_alternatives(task)
    }

    fn predict(&self, x: ArrayView1<'_, Real>, task: Task) -> Result<Array1<Real>> {
        let mut acc = Array1::zeros(self.n_alternatives(task));
        for m in &self.members {
            acc += &m.predict(x, task)?;
        }
        Ok(acc / self.members.len() as Real)
    }

    fn prob_input_gradient(
        &self,
        x: ArrayView1<'_, Real>,
        task: Task,
        alt: usize,
    ) -> Result<Array1<Real>> {
        let mut acc = Array1::zeros(x.len());
        for m in &self.members {
            acc += &m.prob_input_gradient(x, task, alt)?;
        }
        Ok(acc / self.members.len() as Real)
    }
}
