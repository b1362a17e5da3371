//! Dataset representation: CSV ingestion, the unified RP/SP feature schema,
//! stratified train/test splitting, standardization, and accuracy.

use std::path::Path;

use ndarray::{Array1, Array2};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{Error, Real, Result};

/// Which task an observation belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Rp,
    Sp,
}

impl std::fmt::Display for Task {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Task::Rp => write!(f, "rp"),
            Task::Sp => write!(f, "sp"),
        }
    }
}

/// Feature names shared by RP and SP rows. Features listed in `av_specific`
/// are defined only for SP (e.g. AV cost); RP rows carry zeros there.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureSchema {
    names: Vec<String>,
    av_specific: Vec<String>,
}

impl FeatureSchema {
    pub fn new(names: Vec<String>, av_specific: Vec<String>) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(Error::Config(format!("duplicate feature name `{n}`")));
            }
        }
        for a in &av_specific {
            if !names.contains(a) {
                return Err(Error::Config(format!(
                    "av-specific feature `{a}` is not in the schema"
                )));
            }
        }
        Ok(Self { names, av_specific })
    }

    /// Input dimension `d`.
    pub fn d(&self) -> usize {
        self.names.len()
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn av_specific(&self) -> &[String] {
        &self.av_specific
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// Column indices of the av-specific features.
    pub fn av_indices(&self) -> Vec<usize> {
        self.av_specific
            .iter()
            .filter_map(|a| self.index_of(a))
            .collect()
    }

    pub fn is_av_specific(&self, name: &str) -> bool {
        self.av_specific.iter().any(|a| a == name)
    }

    /// Stable digest of the schema, embedded in model files.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for n in &self.names {
            h.update(n.as_bytes());
            h.update([0u8]);
        }
        h.update([1u8]);
        for a in &self.av_specific {
            h.update(a.as_bytes());
            h.update([0u8]);
        }
        hex_prefix(&h.finalize())
    }
}

pub(crate) fn hex_prefix(bytes: &[u8]) -> String {
    bytes[..8].iter().map(|b| format!("{b:02x}")).collect()
}

/// One choice observation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Obs {
    pub task: Task,
    pub x: Array1<Real>,
    pub choice: usize,
}

/// Task-tagged table of choice observations. Invariants (choice in range,
/// av-specific zeros on RP rows) are enforced at construction, so violating
/// datasets are unconstructible through the public API.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dataset {
    schema: FeatureSchema,
    k_r: usize,
    k_s: usize,
    rows: Vec<Obs>,
}

impl Dataset {
    pub fn new(schema: FeatureSchema, k_r: usize, k_s: usize, rows: Vec<Obs>) -> Result<Self> {
        if k_r == 0 || k_s == 0 {
            return Err(Error::Config("alternative counts must be positive".into()));
        }
        let av = schema.av_indices();
        for (i, obs) in rows.iter().enumerate() {
            if obs.x.len() != schema.d() {
                return Err(Error::Ingest {
                    row: i + 1,
                    message: format!("feature vector has {} entries, expected {}", obs.x.len(), schema.d()),
                });
            }
            if obs.x.iter().any(|v| !v.is_finite()) {
                return Err(Error::Ingest {
                    row: i + 1,
                    message: "non-finite feature value".into(),
                });
            }
            let k = match obs.task {
                Task::Rp => k_r,
                Task::Sp => k_s,
            };
            if obs.choice >= k {
                return Err(Error::Ingest {
                    row: i + 1,
                    message: format!("choice index {} out of range for {} alternatives", obs.choice, k),
                });
            }
            if obs.task == Task::Rp {
                for &j in &av {
                    if obs.x[j] != 0.0 {
                        return Err(Error::Ingest {
                            row: i + 1,
                            message: format!(
                                "rp row has nonzero av-specific feature `{}`",
                                schema.names[j]
                            ),
                        });
                    }
                }
            }
        }
        Ok(Self { schema, k_r, k_s, rows })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn k_r(&self) -> usize {
        self.k_r
    }

    pub fn k_s(&self) -> usize {
        self.k_s
    }

    pub fn alternatives(&self, task: Task) -> usize {
        match task {
            Task::Rp => self.k_r,
            Task::Sp => self.k_s,
        }
    }

    pub fn rows(&self) -> &[Obs] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_task(&self, task: Task) -> usize {
        self.rows.iter().filter(|o| o.task == task).count()
    }

    /// Feature matrix and labels of one task stratum.
    pub fn task_matrix(&self, task: Task) -> (Array2<Real>, Vec<usize>) {
        let rows: Vec<&Obs> = self.rows.iter().filter(|o| o.task == task).collect();
        let mut x = Array2::zeros((rows.len(), self.schema.d()));
        let mut y = Vec::with_capacity(rows.len());
        for (i, obs) in rows.iter().enumerate() {
            x.row_mut(i).assign(&obs.x);
            y.push(obs.choice);
        }
        (x, y)
    }

    /// Stratified-by-task split: RP and SP are each split at `ratio` (train
    /// share), deterministically for a fixed seed.
    pub fn split(&self, ratio: Real, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(ratio > 0.0 && ratio < 1.0) {
            return Err(Error::Config(format!("split ratio must be in (0,1), got {ratio}")));
        }
        let mut train_rows = Vec::new();
        let mut test_rows = Vec::new();
        for (stratum, task) in [(0u64, Task::Rp), (1u64, Task::Sp)] {
            let mut idx: Vec<usize> = self
                .rows
                .iter()
                .enumerate()
                .filter(|(_, o)| o.task == task)
                .map(|(i, _)| i)
                .collect();
            if idx.is_empty() {
                return Err(Error::Config(format!("cannot split: no {task} rows")));
            }
            let mut rng = ChaCha8Rng::seed_from_u64(crate::derive_seed(seed, stratum));
            idx.shuffle(&mut rng);
            let n_train = ((idx.len() as Real) * ratio).round() as usize;
            let n_train = n_train.clamp(1, idx.len().saturating_sub(1).max(1));
            for (pos, &i) in idx.iter().enumerate() {
                if pos < n_train {
                    train_rows.push(self.rows[i].clone());
                } else {
                    test_rows.push(self.rows[i].clone());
                }
            }
        }
        let train = Dataset::new(self.schema.clone(), self.k_r, self.k_s, train_rows)?;
        let test = Dataset::new(self.schema.clone(), self.k_r, self.k_s, test_rows)?;
        Ok((train, test))
    }
}

/// Loads the CSV format `task,choice,<feature names...>`. `task` is `rp` or
/// `sp`, `choice` a 0-based integer.
pub fn load_csv(path: &Path, schema: &FeatureSchema, k_r: usize, k_s: usize) -> Result<Dataset> {
    let mut reader = csv::Reader::from_path(path)?;
    let headers = reader.headers()?.clone();
    let mut expected = vec!["task".to_string(), "choice".to_string()];
    expected.extend(schema.names().iter().cloned());
    let got: Vec<String> = headers.iter().map(|s| s.to_string()).collect();
    if got != expected {
        return Err(Error::Ingest {
            row: 0,
            message: format!("header mismatch: expected {expected:?}, got {got:?}"),
        });
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let task = match record.get(0) {
            Some("rp") => Task::Rp,
            Some("sp") => Task::Sp,
            other => {
                return Err(Error::Ingest {
                    row,
                    message: format!("invalid task `{}`", other.unwrap_or("")),
                })
            }
        };
        let choice: usize = record
            .get(1)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Ingest {
                row,
                message: "unparseable choice index".into(),
            })?;
        let mut x = Array1::zeros(schema.d());
        for j in 0..schema.d() {
            let field = record.get(2 + j).ok_or_else(|| Error::Ingest {
                row,
                message: format!("missing feature column {}", schema.names()[j]),
            })?;
            x[j] = field.parse().map_err(|_| Error::Ingest {
                row,
                message: format!("unparseable number `{field}` in column {}", schema.names()[j]),
            })?;
        }
        rows.push(Obs { task, x, choice });
    }
    Dataset::new(schema.clone(), k_r, k_s, rows)
}

/// Writes the module CSV format.
pub fn write_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)?;
    let mut header = vec!["task".to_string(), "choice".to_string()];
    header.extend(dataset.schema().names().iter().cloned());
    writer.write_record(&header)?;
    for obs in dataset.rows() {
        let mut record = vec![obs.task.to_string(), obs.choice.to_string()];
        record.extend(obs.x.iter().map(|v| format!("{v}")));
        writer.write_record(&record)?;
    }
    writer.flush()?;
    Ok(())
}

/// Per-feature standardization fitted on training data. av-specific features
/// use SP-row statistics only; RP rows stay at zero there. Zero-variance
/// features are left unscaled with a recorded warning.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Scaler {
    means: Vec<Real>,
    sds: Vec<Real>,
    scaled: Vec<bool>,
    av_indices: Vec<usize>,
    pub warnings: Vec<String>,
}

impl Scaler {
    /// Fits on the training set.
    pub fn fit(train: &Dataset) -> Result<Self> {
        if train.is_empty() {
            return Err(Error::Config("cannot fit scaler on an empty dataset".into()));
        }
        let d = train.schema().d();
        let av: Vec<usize> = train.schema().av_indices();
        let mut means = vec![0.0; d];
        let mut sds = vec![1.0; d];
        let mut scaled = vec![true; d];
        let mut warnings = Vec::new();
        for j in 0..d {
            let vals: Vec<Real> = train
                .rows()
                .iter()
                .filter(|o| !av.contains(&j) || o.task == Task::Sp)
                .map(|o| o.x[j])
                .collect();
            if vals.is_empty() {
                scaled[j] = false;
                warnings.push(format!(
                    "feature `{}` has no defining rows; left unscaled",
                    train.schema().names()[j]
                ));
                continue;
            }
            let n = vals.len() as Real;
            let mean = vals.iter().sum::<Real>() / n;
            let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n;
            let sd = var.sqrt();
            if sd < 1e-12 {
                scaled[j] = false;
                warnings.push(format!(
                    "feature `{}` has zero variance; left unscaled",
                    train.schema().names()[j]
                ));
            } else {
                means[j] = mean;
                sds[j] = sd;
            }
        }
        Ok(Self {
            means,
            sds,
            scaled,
            av_indices: av,
            warnings,
        })
    }

    /// A no-op scaler: raw and standardized units coincide.
    pub fn identity(d: usize) -> Self {
        Self {
            means: vec![0.0; d],
            sds: vec![1.0; d],
            scaled: vec![false; d],
            av_indices: vec![],
            warnings: vec![],
        }
    }

    /// Standardizes one raw value of feature `j`.
    pub fn transform_value(&self, j: usize, raw: Real) -> Real {
        if self.scaled[j] {
            (raw - self.means[j]) / self.sds[j]
        } else {
            raw
        }
    }

    /// Inverse of [`Scaler::transform_value`].
    pub fn inverse_value(&self, j: usize, standardized: Real) -> Real {
        if self.scaled[j] {
            standardized * self.sds[j] + self.means[j]
        } else {
            standardized
        }
    }

    /// Derivative scale: `d(standardized)/d(raw)` of feature `j`.
    pub fn slope(&self, j: usize) -> Real {
        if self.scaled[j] {
            1.0 / self.sds[j]
        } else {
            1.0
        }
    }

    /// Applies the scaler to every row; av-specific entries of RP rows stay 0.
    pub fn transform_dataset(&self, data: &Dataset) -> Result<Dataset> {
        let rows = data
            .rows()
            .iter()
            .map(|obs| {
                let mut x = obs.x.clone();
                for j in 0..x.len() {
                    if obs.task == Task::Rp && self.av_indices.contains(&j) {
                        continue;
                    }
                    x[j] = self.transform_value(j, x[j]);
                }
                Obs {
                    task: obs.task,
                    x,
                    choice: obs.choice,
                }
            })
            .collect();
        Dataset::new(data.schema().clone(), data.k_r(), data.k_s(), rows)
    }
}

/// Standardizes train and test with training-set statistics only.
pub fn standardize(train: &Dataset, test: &Dataset) -> Result<(Dataset, Dataset, Scaler)> {
    let scaler = Scaler::fit(train)?;
    let train2 = scaler.transform_dataset(train)?;
    let test2 = scaler.transform_dataset(test)?;
    Ok((train2, test2, scaler))
}

/// Index of the largest component, ties broken by the lowest index.
pub fn argmax(v: &Array1<Real>) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Fraction of rows where `argmax(probs) == label`.
pub fn accuracy(probs: &[Array1<Real>], labels: &[usize]) -> Result<Real> {
    if probs.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probability rows vs {} labels",
            probs.len(),
            labels.len()
        )));
    }
    if probs.is_empty() {
        return Ok(0.0);
    }
    let hits = probs
        .iter()
        .zip(labels)
        .filter(|(p, &y)| argmax(p) == y)
        .count();
    Ok(hits as Real / probs.len() as Real)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::arr1;
    use proptest::prelude::*;

    fn schema2() -> FeatureSchema {
        FeatureSchema::new(
            vec!["cost".into(), "time".into(), "av_cost".into()],
            vec!["av_cost".into()],
        )
        .unwrap()
    }

    fn obs(task: Task, x: &[Real], choice: usize) -> Obs {
        Obs {
            task,
            x: arr1(x),
            choice,
        }
    }

    #[test]
    fn csv_roundtrip_and_counts() {
        let schema = schema2();
        let rows = vec![
            obs(Task::Rp, &[1.0, 2.0, 0.0], 0),
            obs(Task::Rp, &[0.5, 1.0, 0.0], 2),
            obs(Task::Sp, &[1.5, 0.2, 3.0], 3),
        ];
        let ds = Dataset::new(schema.clone(), 3, 4, rows).unwrap();
        assert_eq!(ds.n_task(Task::Rp), 2);
        assert_eq!(ds.n_task(Task::Sp), 1);

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        write_csv(&ds, &path).unwrap();
        let loaded = load_csv(&path, &schema, 3, 4).unwrap();
        assert_eq!(loaded.len(), 3);
        assert_eq!(loaded.rows()[2].x, ds.rows()[2].x);
    }

    #[test]
    fn out_of_range_choice_names_the_row() {
        let schema = schema2();
        let rows = vec![
            obs(Task::Rp, &[1.0, 2.0, 0.0], 0),
            obs(Task::Rp, &[1.0, 2.0, 0.0], 3), // K_r = 3, so 3 is out of range
        ];
        let err = Dataset::new(schema, 3, 4, rows).unwrap_err();
        assert!(err.to_string().contains("row 2"), "{err}");
    }

    #[test]
    fn rp_row_with_nonzero_av_feature_rejected() {
        let schema = schema2();
        let rows = vec![obs(Task::Rp, &[1.0, 2.0, 0.5], 0)];
        assert!(Dataset::new(schema, 3, 4, rows).is_err());
    }

    #[test]
    fn split_is_stratified_and_deterministic() {
        let schema = schema2();
        let mut rows = Vec::new();
        for i in 0..100 {
            rows.push(obs(Task::Rp, &[i as Real, 0.0, 0.0], i % 3));
        }
        for i in 0..100 {
            rows.push(obs(Task::Sp, &[i as Real, 1.0, 2.0], i % 4));
        }
        let ds = Dataset::new(schema, 3, 4, rows).unwrap();
        let (train, test) = ds.split(0.8, 42).unwrap();
        assert_eq!(train.n_task(Task::Rp), 80);
        assert_eq!(train.n_task(Task::Sp), 80);
        assert_eq!(test.n_task(Task::Rp), 20);
        assert_eq!(test.n_task(Task::Sp), 20);

        let (train2, _) = ds.split(0.8, 42).unwrap();
        for (a, b) in train.rows().iter().zip(train2.rows()) {
            assert_eq!(a.x, b.x);
            assert_eq!(a.choice, b.choice);
        }
        let (train3, _) = ds.split(0.8, 43).unwrap();
        let same = train
            .rows()
            .iter()
            .zip(train3.rows())
            .all(|(a, b)| a.x == b.x);
        assert!(!same);
    }

    #[test]
    fn standardize_hand_computed_z_scores() {
        let schema = FeatureSchema::new(vec!["f".into()], vec![]).unwrap();
        let rows = vec![
            obs(Task::Rp, &[1.0], 0),
            obs(Task::Rp, &[2.0], 0),
            obs(Task::Sp, &[3.0], 0),
        ];
        let ds = Dataset::new(schema, 1, 1, rows).unwrap();
        let scaler = Scaler::fit(&ds).unwrap();
        let t = scaler.transform_dataset(&ds).unwrap();
        let got: Vec<Real> = t.rows().iter().map(|o| o.x[0]).collect();
        for (g, w) in got.iter().zip([-1.2247448713915892, 0.0, 1.2247448713915892]) {
            assert_abs_diff_eq!(g, &w, epsilon = 1e-10);
        }
    }

    #[test]
    fn constant_column_left_unscaled_with_warning() {
        let schema = FeatureSchema::new(vec!["c".into()], vec![]).unwrap();
        let rows = vec![obs(Task::Rp, &[5.0], 0), obs(Task::Sp, &[5.0], 0)];
        let ds = Dataset::new(schema, 1, 1, rows).unwrap();
        let scaler = Scaler::fit(&ds).unwrap();
        assert_eq!(scaler.warnings.len(), 1);
        let t = scaler.transform_dataset(&ds).unwrap();
        assert_eq!(t.rows()[0].x[0], 5.0);
    }

    #[test]
    fn scaler_inverts_within_tolerance() {
        let schema = schema2();
        let rows = vec![
            obs(Task::Sp, &[1.0, -3.0, 4.0], 0),
            obs(Task::Sp, &[2.5, 7.0, 1.0], 1),
            obs(Task::Sp, &[-1.0, 0.5, 2.0], 2),
        ];
        let ds = Dataset::new(schema, 3, 4, rows).unwrap();
        let scaler = Scaler::fit(&ds).unwrap();
        let t = scaler.transform_dataset(&ds).unwrap();
        for (orig, tr) in ds.rows().iter().zip(t.rows()) {
            for j in 0..3 {
                let back = scaler.inverse_value(j, tr.x[j]);
                assert_abs_diff_eq!(back, orig.x[j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn train_columns_are_standard_after_scaling() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let schema = schema2();
        let rows: Vec<Obs> = (0..200)
            .map(|i| {
                if i % 2 == 0 {
                    obs(Task::Rp, &[rng.gen_range(-3.0..9.0), rng.gen_range(0.0..4.0), 0.0], 0)
                } else {
                    obs(
                        Task::Sp,
                        &[
                            rng.gen_range(-3.0..9.0),
                            rng.gen_range(0.0..4.0),
                            rng.gen_range(1.0..5.0),
                        ],
                        0,
                    )
                }
            })
            .collect();
        let ds = Dataset::new(schema, 3, 4, rows).unwrap();
        let scaler = Scaler::fit(&ds).unwrap();
        let t = scaler.transform_dataset(&ds).unwrap();
        // Non-av columns over all rows; av column over SP rows only.
        for (j, sp_only) in [(0usize, false), (1, false), (2, true)] {
            let vals: Vec<Real> = t
                .rows()
                .iter()
                .filter(|o| !sp_only || o.task == Task::Sp)
                .map(|o| o.x[j])
                .collect();
            let n = vals.len() as Real;
            let mean = vals.iter().sum::<Real>() / n;
            let sd = (vals.iter().map(|v| (v - mean) * (v - mean)).sum::<Real>() / n).sqrt();
            assert!(mean.abs() < 1e-10, "col {j} mean {mean}");
            assert!((sd - 1.0).abs() < 1e-10, "col {j} sd {sd}");
        }
        // RP rows keep zero av entries.
        for o in t.rows().iter().filter(|o| o.task == Task::Rp) {
            assert_eq!(o.x[2], 0.0);
        }
    }

    #[test]
    fn accuracy_basics_and_tie_rule() {
        let probs = vec![arr1(&[0.9, 0.1]), arr1(&[0.2, 0.8])];
        assert_eq!(accuracy(&probs, &[0, 1]).unwrap(), 1.0);
        // Uniform => argmax tie broken toward index 0.
        let probs = vec![arr1(&[0.2; 5]); 4];
        let labels = [0usize, 0, 1, 2];
        assert_abs_diff_eq!(accuracy(&probs, &labels).unwrap(), 0.5, epsilon = 1e-15);
    }

    #[test]
    fn accuracy_matches_per_row_loop_oracle() {
        use rand::prelude::*;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let probs: Vec<Array1<Real>> = (0..100)
            .map(|_| {
                let raw: Vec<Real> = (0..4).map(|_| rng.gen_range(0.01..1.0)).collect();
                let s: Real = raw.iter().sum();
                arr1(&raw.iter().map(|v| v / s).collect::<Vec<_>>())
            })
            .collect();
        let labels: Vec<usize> = (0..100).map(|_| rng.gen_range(0..4)).collect();
        let mut hits = 0usize;
        for (p, &y) in probs.iter().zip(&labels) {
            let mut best = 0;
            for k in 1..4 {
                if p[k] > p[best] {
                    best = k;
                }
            }
            if best == y {
                hits += 1;
            }
        }
        assert_abs_diff_eq!(
            accuracy(&probs, &labels).unwrap(),
            hits as Real / 100.0,
            epsilon = 1e-15
        );
    }

    proptest! {
        // Split is a disjoint, exhaustive partition of the input multiset.
        #[test]
        fn split_partitions_the_dataset(n_rp in 2usize..40, n_sp in 2usize..40, seed in 0u64..500) {
            let schema = FeatureSchema::new(vec!["f".into()], vec![]).unwrap();
            let mut rows = Vec::new();
            for i in 0..n_rp {
                rows.push(obs(Task::Rp, &[i as Real], 0));
            }
            for i in 0..n_sp {
                rows.push(obs(Task::Sp, &[1000.0 + i as Real], 0));
            }
            let ds = Dataset::new(schema, 1, 1, rows).unwrap();
            let (train, test) = ds.split(0.75, seed).unwrap();
            let mut all: Vec<Real> = train.rows().iter().chain(test.rows()).map(|o| o.x[0]).collect();
            all.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut want: Vec<Real> = ds.rows().iter().map(|o| o.x[0]).collect();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            prop_assert_eq!(all, want);
        }
    }
}
