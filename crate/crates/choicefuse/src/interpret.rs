//! Post-estimation interpretation: choice-probability curves along one raw
//! feature, and aggregate point elasticities. Both work in raw feature
//! units, undoing the training-time standardization through the scaler.

use std::io::Write as _;
use std::path::Path;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, FeatureSchema, Scaler, Task};
use crate::model::ProbModel;
use crate::{Error, Real, Result};

/// Probabilities below this are excluded from elasticity averages.
pub const ELASTICITY_PROB_FLOOR: Real = 1e-6;

/// A sweep of one raw feature over a grid, every other feature pinned at a
/// raw base value.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveSpec {
    pub feature: String,
    pub task: Task,
    pub raw_min: Real,
    pub raw_max: Real,
    pub n_points: usize,
    /// Raw values for all features; the swept entry is overwritten.
    pub base: Vec<Real>,
}

impl CurveSpec {
    pub fn validate(&self, schema: &FeatureSchema) -> Result<usize> {
        let j = schema
            .index_of(&self.feature)
            .ok_or_else(|| Error::Input(format!("unknown feature {:?}", self.feature)))?;
        if self.n_points < 2 {
            return Err(Error::Input("curve needs at least 2 grid points".into()));
        }
        if !(self.raw_min < self.raw_max) {
            return Err(Error::Input(format!(
                "empty curve range [{}, {}]",
                self.raw_min, self.raw_max
            )));
        }
        if self.base.len() != schema.d() {
            return Err(Error::Shape(format!(
                "base row has {} entries, schema has {} features",
                self.base.len(),
                schema.d()
            )));
        }
        if self.base.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite base row".into()));
        }
        Ok(j)
    }
}

/// Curves for every model plus their pointwise mean. `probs[m][g]` is model
/// `m`'s probability vector at grid point `g`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CurveResult {
    pub feature: String,
    pub task: Task,
    pub grid: Vec<Real>,
    pub probs: Vec<Vec<Array1<Real>>>,
    pub mean: Vec<Array1<Real>>,
}

/// Evaluates each model along the grid. Inputs are standardized through the
/// scaler before prediction; grid values stay raw in the output.
pub fn prob_curve(
    models: &[&dyn ProbModel],
    scaler: &Scaler,
    schema: &FeatureSchema,
    spec: &CurveSpec,
) -> Result<CurveResult> {
    if models.is_empty() {
        return Err(Error::Input("no models given".into()));
    }
    let j = spec.validate(schema)?;
    let k = models[0].n_alternatives(spec.task);
    if models.iter().any(|m| m.n_alternatives(spec.task) != k) {
        return Err(Error::Shape("models disagree on alternative count".into()));
    }

    let grid: Vec<Real> = (0..spec.n_points)
        .map(|i| {
            let t = i as Real / (spec.n_points - 1) as Real;
            spec.raw_min + t * (spec.raw_max - spec.raw_min)
        })
        .collect();

    let mut base_std = Array1::zeros(schema.d());
    for (c, &raw) in spec.base.iter().enumerate() {
        base_std[c] = scaler.transform_value(c, raw);
    }

    let mut probs = vec![Vec::with_capacity(grid.len()); models.len()];
    let mut mean = Vec::with_capacity(grid.len());
    for &raw in &grid {
        let mut x = base_std.clone();
        x[j] = scaler.transform_value(j, raw);
        let mut acc = Array1::zeros(k);
        for (m, model) in models.iter().enumerate() {
            let p = model.predict(x.view(), spec.task)?;
            acc += &p;
            probs[m].push(p);
        }
        mean.push(acc / models.len() as Real);
    }
    Ok(CurveResult {
        feature: spec.feature.clone(),
        task: spec.task,
        grid,
        probs,
        mean,
    })
}

/// Sample-average point elasticity of `P(alt)` with respect to one raw
/// feature, over the rows of one task.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ElasticitySummary {
    pub feature: String,
    pub task: Task,
    pub alt: usize,
    pub mean_elasticity: Real,
    pub n_used: usize,
    /// Rows skipped because the raw feature value is exactly zero.
    pub n_zero_value: usize,
    /// Rows skipped because the predicted probability is below the floor.
    pub n_low_prob: usize,
}

/// Per-row elasticity is `(dP/dx_raw) * x_raw / P`, with the gradient pulled
/// back to raw units through the scaler slope. Rows where `x_raw` is zero or
/// `P` is below [`ELASTICITY_PROB_FLOOR`] are excluded and counted.
pub fn elasticity(
    model: &dyn ProbModel,
    data: &Dataset,
    scaler: &Scaler,
    feature: &str,
    task: Task,
    alt: usize,
) -> Result<ElasticitySummary> {
    let j = data
        .schema()
        .index_of(feature)
        .ok_or_else(|| Error::Input(format!("unknown feature {feature:?}")))?;
    if alt >= model.n_alternatives(task) {
        return Err(Error::Input(format!("alternative {alt} out of range")));
    }
    let mut acc = 0.0;
    let mut used = 0usize;
    let mut zero = 0usize;
    let mut low = 0usize;
    for obs in data.rows().iter().filter(|o| o.task == task) {
        let raw = scaler.inverse_value(j, obs.x[j]);
        if raw == 0.0 {
            zero += 1;
            continue;
        }
        let p = model.predict(obs.x.view(), task)?[alt];
        if p < ELASTICITY_PROB_FLOOR {
            low += 1;
            continue;
        }
        let g_std = model.prob_input_gradient(obs.x.view(), task, alt)?[j];
        let g_raw = g_std * scaler.slope(j);
        acc += g_raw * raw / p;
        used += 1;
    }
    if used == 0 {
        return Err(Error::Input(format!(
            "no usable rows for elasticity of {feature:?}"
        )));
    }
    Ok(ElasticitySummary {
        feature: feature.to_string(),
        task,
        alt,
        mean_elasticity: acc / used as Real,
        n_used: used,
        n_zero_value: zero,
        n_low_prob: low,
    })
}

/// Long-format CSV: one row per (model, grid point, alternative), model -1
/// for the across-model mean.
pub fn write_curve_csv(result: &CurveResult, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["model", "feature", "task", "x", "alternative", "probability"])?;
    let task = result.task.to_string();
    let mut emit = |model: i64, g: usize, p: &Array1<Real>| -> Result<()> {
        for (a, v) in p.iter().enumerate() {
            w.write_record([
                model.to_string(),
                result.feature.clone(),
                task.clone(),
                format!("{}", result.grid[g]),
                a.to_string(),
                format!("{v}"),
            ])?;
        }
        Ok(())
    };
    for (m, curve) in result.probs.iter().enumerate() {
        for (g, p) in curve.iter().enumerate() {
            emit(m as i64, g, p)?;
        }
    }
    for (g, p) in result.mean.iter().enumerate() {
        emit(-1, g, p)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_elasticity_csv(rows: &[ElasticitySummary], path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        "feature",
        "task",
        "alternative",
        "mean_elasticity",
        "n_used",
        "n_zero_value",
        "n_low_prob",
    ])?;
    for r in rows {
        w.write_record([
            r.feature.clone(),
            r.task.to_string(),
            r.alt.to_string(),
            format!("{}", r.mean_elasticity),
            r.n_used.to_string(),
            r.n_zero_value.to_string(),
            r.n_low_prob.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Minimal standalone SVG: the across-model mean probability of one
/// alternative as a polyline over the grid.
pub fn curve_svg(result: &CurveResult, alt: usize) -> Result<String> {
    if result.mean.is_empty() {
        return Err(Error::Input("empty curve".into()));
    }
    if alt >= result.mean[0].len() {
        return Err(Error::Input(format!("alternative {alt} out of range")));
    }
    let (w, h, pad) = (640.0, 400.0, 40.0);
    let (x0, x1) = (result.grid[0], *result.grid.last().unwrap());
    let span = (x1 - x0).max(Real::MIN_POSITIVE);
    let points: Vec<String> = result
        .grid
        .iter()
        .zip(&result.mean)
        .map(|(&x, p)| {
            let px = pad + (x - x0) / span * (w - 2.0 * pad);
            let py = h - pad - p[alt] * (h - 2.0 * pad);
            format!("{px:.2},{py:.2}")
        })
        .collect();
    Ok(format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" ",
            "viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"{w}\" height=\"{h}\" fill=\"white\"/>\n",
            "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"2\" points=\"{pts}\"/>\n",
            "<text x=\"{tx}\" y=\"{ty}\" font-size=\"14\">{label} (alt {alt})</text>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        pts = points.join(" "),
        tx = pad,
        ty = pad / 2.0,
        label = result.feature,
        alt = alt,
    ))
}

pub fn write_curve_svg(result: &CurveResult, alt: usize, path: &Path) -> Result<()> {
    let svg = curve_svg(result, alt)?;
    let mut f = std::fs::File::create(path)?;
    f.write_all(svg.as_bytes())?;
    Ok(())
}
