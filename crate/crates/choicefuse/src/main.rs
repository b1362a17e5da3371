//! Command-line entry point: reproducible experiments driven by a TOML
//! config. Every artifact embeds the config hash, and rerunning a command
//! with the same config and seed writes byte-identical files.

use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use choicefuse::config::{ExperimentConfig, ModelKind, SearchConfig};
use choicefuse::data::{load_csv, standardize, write_csv, Dataset, FeatureSchema, Scaler, Task};
use choicefuse::interpret::{
    elasticity, prob_curve, write_curve_csv, write_curve_svg, write_elasticity_csv, CurveSpec,
};
use choicefuse::mnl::{fit_mnl, MnlModel, MnlPair, OptConfig, TaskScope};
use choicefuse::model::{evaluate, AccuracySummary, MaskRp, ProbModel};
use choicefuse::mtldnn::{self, MtldnnModel};
use choicefuse::nl::{fit_nl, NlModel};
use choicefuse::search::{ensemble_topk, random_search, Ensemble, SearchOutcome, SearchSpace};
use choicefuse::synth::generate;
use choicefuse::{derive_seed, Error, Real, Result};

#[derive(Parser)]
#[command(name = "choicefuse", version, about = "RP/SP discrete-choice estimation toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, clap::Args)]
struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory; overrides the config and CHOICEFUSE_OUT_DIR.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Master seed override; re-derives every seed in the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for parallel runs (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Rerun into a scratch directory and fail unless outputs match byte
    /// for byte.
    #[arg(long)]
    verify: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset CSV from the config's DGP spec.
    Synth(CommonArgs),
    /// Fit the configured model once and write the model file plus metrics.
    Train(CommonArgs),
    /// Random hyperparameter search; writes the ranked report and run models.
    Search(CommonArgs),
    /// Recompute metrics for a saved model file on the configured data.
    Evaluate {
        #[command(flatten)]
        common: CommonArgs,
        /// Saved model file from `train`, `search`, or `ensemble`.
        #[arg(long)]
        model: PathBuf,
    },
    /// Average the top-k searched models and write ensemble metrics.
    Ensemble {
        #[command(flatten)]
        common: CommonArgs,
        /// Directory holding a `search` run (defaults to the output dir).
        #[arg(long)]
        search_dir: Option<PathBuf>,
    },
    /// Probability curves and elasticities for a saved model.
    Interpret {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        model: PathBuf,
        /// Feature to sweep / differentiate.
        #[arg(long)]
        feature: String,
        #[arg(long, value_parser = parse_task, default_value = "sp")]
        task: Task,
        /// Alternative whose probability is plotted and differentiated.
        #[arg(long, default_value_t = 0)]
        alt: usize,
        /// Raw sweep range; defaults to the train-split range of the feature.
        #[arg(long)]
        min: Option<Real>,
        #[arg(long)]
        max: Option<Real>,
        #[arg(long, default_value_t = 41)]
        points: usize,
    },
    /// Run the full eight-model grid and write the accuracy table.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        /// Renormalize pooled models' RP predictions over the RP
        /// alternatives before scoring.
        #[arg(long)]
        mask_rp: bool,
    },
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    match s {
        "rp" => Ok(Task::Rp),
        "sp" => Ok(Task::Sp),
        other => Err(format!("task must be rp or sp, got {other:?}")),
    }
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli.command) {
        eprintln!("error: {e}");
        std::process::exit(1);
    }
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Synth(c) => with_verify(c, cmd_synth),
        Command::Train(c) => with_verify(c, cmd_train),
        Command::Search(c) => with_verify(c, cmd_search),
        Command::Evaluate { common, model } => {
            with_verify(common, move |ctx, dir| cmd_evaluate(ctx, dir, &model))
        }
        Command::Ensemble { common, search_dir } => {
            let fallback = resolve_out_dir(&common, &ExperimentConfig::load(&common.config)?);
            let search_dir = search_dir.unwrap_or(fallback);
            with_verify(common, move |ctx, dir| cmd_ensemble(ctx, dir, &search_dir))
        }
        Command::Interpret {
            common,
            model,
            feature,
            task,
            alt,
            min,
            max,
            points,
        } => with_verify(common, move |ctx, dir| {
            cmd_interpret(ctx, dir, &model, &feature, task, alt, min, max, points)
        }),
        Command::Compare { common, mask_rp } => {
            with_verify(common, move |ctx, dir| cmd_compare(ctx, dir, mask_rp))
        }
    }
}

/// Shared per-command context.
struct Ctx {
    config: ExperimentConfig,
    hash: String,
}

fn resolve_out_dir(common: &CommonArgs, config: &ExperimentConfig) -> PathBuf {
    common
        .out_dir
        .clone()
        .or_else(|| config.out_dir.clone())
        .or_else(|| std::env::var_os("CHOICEFUSE_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

/// Re-derives every seed in the config from one master seed, so a single
/// `--seed` flag reproduces or varies a whole experiment.
fn apply_seed_override(config: &mut ExperimentConfig, master: u64) {
    if let Some(synth) = &mut config.data.synth {
        synth.seed = derive_seed(master, 1);
    }
    config.split.seed = derive_seed(master, 2);
    if let Some(h) = &mut config.model.hyper {
        h.seed = derive_seed(master, 3);
    }
    if let Some(s) = &mut config.model.search {
        s.seed = derive_seed(master, 4);
    }
    if let Some(c) = &mut config.compare {
        c.search.seed = derive_seed(master, 5);
    }
}

/// Runs `body` into the resolved output directory; with `--verify`, runs it
/// again into a scratch directory and diffs every artifact byte for byte.
fn with_verify<F>(common: CommonArgs, body: F) -> Result<()>
where
    F: Fn(&Ctx, &Path) -> Result<Vec<PathBuf>>,
{
    if let Some(workers) = common.workers {
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build_global()
            .map_err(|e| Error::Config(format!("worker pool: {e}")))?;
    }
    let mut config = ExperimentConfig::load(&common.config)?;
    if let Some(seed) = common.seed {
        apply_seed_override(&mut config, seed);
    }
    let out_dir = resolve_out_dir(&common, &config);
    std::fs::create_dir_all(&out_dir)?;
    let ctx = Ctx {
        hash: config.hash(),
        config,
    };
    let artifacts = body(&ctx, &out_dir)?;
    for a in &artifacts {
        println!("wrote {}", out_dir.join(a).display());
    }
    if common.verify {
        let scratch = tempfile::tempdir()?;
        let again = body(&ctx, scratch.path())?;
        if again != artifacts {
            return Err(Error::Config("verify: artifact lists differ".into()));
        }
        for a in &artifacts {
            let first = std::fs::read(out_dir.join(a))?;
            let second = std::fs::read(scratch.path().join(a))?;
            if first != second {
                return Err(Error::Config(format!(
                    "verify: {} differs between runs",
                    a.display()
                )));
            }
        }
        println!("verify: {} artifacts byte-identical", artifacts.len());
    }
    Ok(())
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<PathBuf> {
    let text = serde_json::to_string_pretty(value).map_err(Error::from)?;
    std::fs::write(dir.join(name), text + "\n")?;
    Ok(PathBuf::from(name))
}

/// Loads the configured data source (raw units).
fn load_data(config: &ExperimentConfig) -> Result<Dataset> {
    if let Some(csv) = &config.data.csv {
        let schema = FeatureSchema::new(csv.features.clone(), csv.av_specific.clone())?;
        load_csv(&csv.path, &schema, csv.k_r, csv.k_s)
    } else {
        let synth = config.data.synth.as_ref().expect("validated");
        generate(&synth.spec, synth.n_rp, synth.n_sp, synth.seed)
    }
}

/// Splits and (optionally) standardizes. Returns raw train too, for
/// raw-unit summaries.
struct Prepared {
    train: Dataset,
    test: Dataset,
    scaler: Scaler,
    raw_train: Dataset,
}

fn prepare(config: &ExperimentConfig) -> Result<Prepared> {
    let full = load_data(config)?;
    let (train_raw, test_raw) = full.split(config.split.ratio, config.split.seed)?;
    if config.standardize {
        let (train, test, scaler) = standardize(&train_raw, &test_raw)?;
        Ok(Prepared {
            train,
            test,
            scaler,
            raw_train: train_raw,
        })
    } else {
        let scaler = Scaler::identity(train_raw.schema().d());
        Ok(Prepared {
            train: train_raw.clone(),
            test: test_raw,
            scaler,
            raw_train: train_raw,
        })
    }
}

/// On-disk model file: enough to reload, evaluate, and interpret later.
#[derive(Serialize, Deserialize)]
struct ModelBundle {
    config_hash: String,
    kind: String,
    schema: FeatureSchema,
    k_r: usize,
    k_s: usize,
    scaler: Scaler,
    payload: Payload,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "kebab-case")]
enum Payload {
    Mtldnn { model: MtldnnModel },
    Ensemble { members: Vec<MtldnnModel> },
    Nl { model: NlModel },
    MnlPair { rp: MnlModel, sp: MnlModel },
    Mnl { model: MnlModel },
}

impl ModelBundle {
    fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(Error::from)
    }

    fn instantiate(&self) -> Result<Box<dyn ProbModel>> {
        Ok(match &self.payload {
            Payload::Mtldnn { model } => Box::new(model.clone()),
            Payload::Ensemble { members } => Box::new(Ensemble::new(members.clone())?),
            Payload::Nl { model } => Box::new(model.clone()),
            Payload::MnlPair { rp, sp } => Box::new(MnlPair {
                rp: rp.clone(),
                sp: sp.clone(),
            }),
            Payload::Mnl { model } => Box::new(model.clone()),
        })
    }
}

#[derive(Serialize)]
struct Metrics<'a> {
    config_hash: &'a str,
    kind: &'a str,
    train: AccuracySummary,
    test: AccuracySummary,
    warnings: Vec<String>,
}

fn cmd_synth(ctx: &Ctx, dir: &Path) -> Result<Vec<PathBuf>> {
    let synth = ctx.config.data.synth.as_ref().ok_or_else(|| {
        Error::Config("synth subcommand needs a [data.synth] source".into())
    })?;
    let data = generate(&synth.spec, synth.n_rp, synth.n_sp, synth.seed)?;
    write_csv(&data, &dir.join("dataset.csv"))?;
    #[derive(Serialize)]
    struct Meta<'a> {
        config_hash: &'a str,
        seed: u64,
        n_rp: usize,
        n_sp: usize,
    }
    let meta = write_json(
        dir,
        "synth_meta.json",
        &Meta {
            config_hash: &ctx.hash,
            seed: synth.seed,
            n_rp: synth.n_rp,
            n_sp: synth.n_sp,
        },
    )?;
    Ok(vec![PathBuf::from("dataset.csv"), meta])
}

fn fit_single(
    ctx: &Ctx,
    prepared: &Prepared,
) -> Result<(Payload, Vec<String>)> {
    let config = &ctx.config;
    let kind = config.model.kind;
    let opt = OptConfig::default();
    Ok(match kind {
        ModelKind::Mtldnn | ModelKind::DnnSpt | ModelKind::DnnJoint => {
            let hyper = config.model.hyper.as_ref().ok_or_else(|| {
                Error::Config(format!(
                    "train with kind {} needs model.hyper (use `search` for model.search)",
                    kind.as_str()
                ))
            })?;
            let mut model = mtldnn::build(
                hyper,
                prepared.train.schema().d(),
                prepared.train.k_r(),
                prepared.train.k_s(),
                prepared.train.schema().av_indices(),
            )?;
            mtldnn::train(&mut model, &prepared.train, hyper)?;
            (Payload::Mtldnn { model }, vec![])
        }
        ModelKind::NlC | ModelKind::NlNc => {
            let ties = if kind == ModelKind::NlC {
                config.model.ties.clone()
            } else {
                vec![]
            };
            let fit = fit_nl(&prepared.train, &ties, &opt)?;
            (Payload::Nl { model: fit.model }, fit.warnings)
        }
        ModelKind::MnlSpt => {
            let rp = fit_mnl(&prepared.train, TaskScope::Rp, &opt)?;
            let sp = fit_mnl(&prepared.train, TaskScope::Sp, &opt)?;
            let mut warnings = rp.warnings;
            warnings.extend(sp.warnings);
            (
                Payload::MnlPair {
                    rp: rp.model,
                    sp: sp.model,
                },
                warnings,
            )
        }
        ModelKind::MnlJoint => {
            let fit = fit_mnl(&prepared.train, TaskScope::Joint, &opt)?;
            (Payload::Mnl { model: fit.model }, fit.warnings)
        }
    })
}

fn cmd_train(ctx: &Ctx, dir: &Path) -> Result<Vec<PathBuf>> {
    let prepared = prepare(&ctx.config)?;
    let (payload, warnings) = fit_single(ctx, &prepared)?;
    let bundle = ModelBundle {
        config_hash: ctx.hash.clone(),
        kind: ctx.config.model.kind.as_str().to_string(),
        schema: prepared.train.schema().clone(),
        k_r: prepared.train.k_r(),
        k_s: prepared.train.k_s(),
        scaler: prepared.scaler.clone(),
        payload,
    };
    let model = bundle.instantiate()?;
    let metrics = Metrics {
        config_hash: &ctx.hash,
        kind: ctx.config.model.kind.as_str(),
        train: evaluate(model.as_ref(), &prepared.train)?,
        test: evaluate(model.as_ref(), &prepared.test)?,
        warnings,
    };
    let a = write_json(dir, "model.json", &bundle)?;
    let b = write_json(dir, "metrics.json", &metrics)?;
    Ok(vec![a, b])
}

/// Narrows a search space to the single-task boundary (no shared layers, no
/// alignment penalty).
fn spt_space(space: &SearchSpace) -> SearchSpace {
    let mut s = space.clone();
    s.m1 = vec![0];
    s.lambda3 = vec![0.0];
    s.m2 = nonzero_or(&s.m2, 1);
    s
}

/// Narrows a search space to the pooled single-head boundary.
fn joint_space(space: &SearchSpace) -> SearchSpace {
    let mut s = space.clone();
    s.m2 = vec![0];
    s.m1 = nonzero_or(&s.m1, 1);
    s.lambda2 = vec![0.0];
    s.lambda3 = vec![0.0];
    s
}

fn nonzero_or(list: &[usize], fallback: usize) -> Vec<usize> {
    let out: Vec<usize> = list.iter().copied().filter(|&v| v > 0).collect();
    if out.is_empty() {
        vec![fallback]
    } else {
        out
    }
}

fn search_space_for(kind: ModelKind, sc: &SearchConfig) -> SearchSpace {
    match kind {
        ModelKind::DnnSpt => spt_space(&sc.space),
        ModelKind::DnnJoint => joint_space(&sc.space),
        _ => sc.space.clone(),
    }
}

#[derive(Serialize, Deserialize)]
struct SearchReportMeta {
    config_hash: String,
    seed: u64,
    selection: choicefuse::search::Selection,
    top_k: usize,
    /// Ranked draw indices (best first) pointing into `models/run_*.json`.
    ranked_draws: Vec<usize>,
    failed_draws: Vec<usize>,
}

fn write_search_artifacts(
    ctx: &Ctx,
    dir: &Path,
    sc: &SearchConfig,
    outcome: &SearchOutcome,
    prepared: &Prepared,
) -> Result<Vec<PathBuf>> {
    let mut artifacts = Vec::new();
    let models_dir = dir.join("models");
    std::fs::create_dir_all(&models_dir)?;

    let report_path = dir.join("search_report.csv");
    let mut w = csv::Writer::from_path(&report_path)?;
    w.write_record([
        "rank", "draw", "m1", "m2", "width", "lambda1", "lambda2", "lambda3", "n_iter",
        "batch", "seed", "status", "test_risk", "train_joint", "train_rp", "train_sp",
        "test_joint", "test_rp", "test_sp", "model_path",
    ])?;
    for (rank, run) in outcome.runs.iter().enumerate() {
        let train_acc = evaluate(&run.model, &prepared.train)?;
        let rel = format!("models/run_{:03}.json", run.draw);
        let text = serde_json::to_string_pretty(&run.model).map_err(Error::from)?;
        std::fs::write(dir.join(&rel), text + "\n")?;
        artifacts.push(PathBuf::from(&rel));
        w.write_record([
            rank.to_string(),
            run.draw.to_string(),
            run.hyper.m1.to_string(),
            run.hyper.m2.to_string(),
            run.hyper.width.to_string(),
            format!("{}", run.hyper.lambda1),
            format!("{}", run.hyper.lambda2),
            format!("{}", run.hyper.lambda3),
            run.hyper.n_iter.to_string(),
            run.hyper.batch.to_string(),
            run.hyper.seed.to_string(),
            "ok".to_string(),
            format!("{}", run.test_risk),
            format!("{:.6}", train_acc.joint),
            format!("{:.6}", train_acc.rp),
            format!("{:.6}", train_acc.sp),
            format!("{:.6}", run.test_accuracy.joint),
            format!("{:.6}", run.test_accuracy.rp),
            format!("{:.6}", run.test_accuracy.sp),
            rel,
        ])?;
    }
    for &draw in &outcome.failed {
        let mut record = vec![String::new(); 20];
        record[1] = draw.to_string();
        record[11] = "failed".to_string();
        w.write_record(&record)?;
    }
    w.flush()?;
    artifacts.push(PathBuf::from("search_report.csv"));

    let meta = SearchReportMeta {
        config_hash: ctx.hash.clone(),
        seed: sc.seed,
        selection: sc.selection,
        top_k: sc.top_k,
        ranked_draws: outcome.runs.iter().map(|r| r.draw).collect(),
        failed_draws: outcome.failed.clone(),
    };
    artifacts.push(write_json(dir, "search_meta.json", &meta)?);

    let best = outcome.best().expect("nonempty outcome");
    let bundle = ModelBundle {
        config_hash: ctx.hash.clone(),
        kind: ctx.config.model.kind.as_str().to_string(),
        schema: prepared.train.schema().clone(),
        k_r: prepared.train.k_r(),
        k_s: prepared.train.k_s(),
        scaler: prepared.scaler.clone(),
        payload: Payload::Mtldnn {
            model: best.model.clone(),
        },
    };
    artifacts.push(write_json(dir, "best_model.json", &bundle)?);

    let mut summary = String::new();
    summary.push_str(&format!("config {}\n", ctx.hash));
    summary.push_str(&format!(
        "runs {} ok, {} failed\n",
        outcome.runs.len(),
        outcome.failed.len()
    ));
    summary.push_str(&format!(
        "best draw {} (m1={} m2={} width={}): test risk {:.6}, test joint accuracy {:.4}\n",
        best.draw,
        best.hyper.m1,
        best.hyper.m2,
        best.hyper.width,
        best.test_risk,
        best.test_accuracy.joint,
    ));
    std::fs::write(dir.join("search_summary.txt"), summary)?;
    artifacts.push(PathBuf::from("search_summary.txt"));
    Ok(artifacts)
}

fn cmd_search(ctx: &Ctx, dir: &Path) -> Result<Vec<PathBuf>> {
    let kind = ctx.config.model.kind;
    if !kind.is_network() {
        return Err(Error::Config(format!(
            "search applies to network kinds, not {}",
            kind.as_str()
        )));
    }
    let sc = ctx
        .config
        .model
        .search
        .as_ref()
        .ok_or_else(|| Error::Config("search subcommand needs model.search".into()))?;
    let prepared = prepare(&ctx.config)?;
    let space = search_space_for(kind, sc);
    let outcome = random_search(
        &space,
        &prepared.train,
        &prepared.test,
        sc.n_draws,
        sc.seed,
        sc.selection,
    )?;
    write_search_artifacts(ctx, dir, sc, &outcome, &prepared)
}

fn cmd_ensemble(ctx: &Ctx, dir: &Path, search_dir: &Path) -> Result<Vec<PathBuf>> {
    let meta_path = search_dir.join("search_meta.json");
    let meta: SearchReportMeta = serde_json::from_str(&std::fs::read_to_string(&meta_path)?)
        .map_err(Error::from)?;
    let take = meta.top_k.min(meta.ranked_draws.len());
    let mut members = Vec::with_capacity(take);
    for &draw in &meta.ranked_draws[..take] {
        let path = search_dir.join(format!("models/run_{draw:03}.json"));
        let model: MtldnnModel =
            serde_json::from_str(&std::fs::read_to_string(&path)?).map_err(Error::from)?;
        members.push(model);
    }
    let prepared = prepare(&ctx.config)?;
    let bundle = ModelBundle {
        config_hash: ctx.hash.clone(),
        kind: "mtldnn-e".to_string(),
        schema: prepared.train.schema().clone(),
        k_r: prepared.train.k_r(),
        k_s: prepared.train.k_s(),
        scaler: prepared.scaler.clone(),
        payload: Payload::Ensemble { members },
    };
    let model = bundle.instantiate()?;
    let metrics = Metrics {
        config_hash: &ctx.hash,
        kind: "mtldnn-e",
        train: evaluate(model.as_ref(), &prepared.train)?,
        test: evaluate(model.as_ref(), &prepared.test)?,
        warnings: vec![],
    };
    let a = write_json(dir, "ensemble_model.json", &bundle)?;
    let b = write_json(dir, "ensemble_metrics.json", &metrics)?;
    Ok(vec![a, b])
}

fn cmd_evaluate(ctx: &Ctx, dir: &Path, model_path: &Path) -> Result<Vec<PathBuf>> {
    let bundle = ModelBundle::load(model_path)?;
    let prepared = prepare(&ctx.config)?;
    if bundle.schema != *prepared.train.schema() {
        return Err(Error::Config(
            "model schema does not match the configured data".into(),
        ));
    }
    let model = bundle.instantiate()?;
    let metrics = Metrics {
        config_hash: &ctx.hash,
        kind: &bundle.kind,
        train: evaluate(model.as_ref(), &prepared.train)?,
        test: evaluate(model.as_ref(), &prepared.test)?,
        warnings: vec![],
    };
    Ok(vec![write_json(dir, "evaluate_metrics.json", &metrics)?])
}

#[allow(clippy::too_many_arguments)]
fn cmd_interpret(
    ctx: &Ctx,
    dir: &Path,
    model_path: &Path,
    feature: &str,
    task: Task,
    alt: usize,
    min: Option<Real>,
    max: Option<Real>,
    points: usize,
) -> Result<Vec<PathBuf>> {
    let bundle = ModelBundle::load(model_path)?;
    let prepared = prepare(&ctx.config)?;
    let schema = prepared.train.schema().clone();
    let j = schema
        .index_of(feature)
        .ok_or_else(|| Error::Input(format!("unknown feature {feature:?}")))?;

    // Raw-unit base row and sweep range from the raw training split.
    let d = schema.d();
    let mut base = vec![0.0; d];
    let mut lo = Real::INFINITY;
    let mut hi = Real::NEG_INFINITY;
    for obs in prepared.raw_train.rows() {
        for c in 0..d {
            base[c] += obs.x[c];
        }
        lo = lo.min(obs.x[j]);
        hi = hi.max(obs.x[j]);
    }
    for b in &mut base {
        *b /= prepared.raw_train.len() as Real;
    }
    let spec = CurveSpec {
        feature: feature.to_string(),
        task,
        raw_min: min.unwrap_or(lo),
        raw_max: max.unwrap_or(hi),
        n_points: points,
        base,
    };

    let model = bundle.instantiate()?;
    let models: Vec<&dyn ProbModel> = vec![model.as_ref()];
    let curve = prob_curve(&models, &bundle.scaler, &schema, &spec)?;
    write_curve_csv(&curve, &dir.join("curve.csv"))?;
    write_curve_svg(&curve, alt, &dir.join("curve.svg"))?;

    let summary = elasticity(model.as_ref(), &prepared.test, &bundle.scaler, feature, task, alt)?;
    write_elasticity_csv(std::slice::from_ref(&summary), &dir.join("elasticity.csv"))?;
    Ok(vec![
        PathBuf::from("curve.csv"),
        PathBuf::from("curve.svg"),
        PathBuf::from("elasticity.csv"),
    ])
}

/// The eight comparison columns, in table order.
const COMPARE_COLUMNS: [&str; 8] = [
    "mtldnn", "mtldnn-e", "dnn-spt", "dnn-joint", "nl-c", "nl-nc", "mnl-spt", "mnl-joint",
];

fn cmd_compare(ctx: &Ctx, dir: &Path, mask_rp: bool) -> Result<Vec<PathBuf>> {
    let cc = ctx.config.compare.as_ref().ok_or_else(|| {
        Error::Config("compare subcommand needs a [compare] section".into())
    })?;
    let prepared = prepare(&ctx.config)?;
    let train = &prepared.train;
    let test = &prepared.test;
    let k_r = train.k_r();

    // Scores a model on train and test, optionally renormalizing pooled RP
    // predictions over the RP alternatives.
    let score = |model: &dyn ProbModel, pooled: bool| -> Result<(AccuracySummary, AccuracySummary)> {
        if mask_rp && pooled {
            let masked = MaskRp { inner: model, k_r };
            Ok((evaluate(&masked, train)?, evaluate(&masked, test)?))
        } else {
            Ok((evaluate(model, train)?, evaluate(model, test)?))
        }
    };

    let mut columns: Vec<(AccuracySummary, AccuracySummary)> = Vec::with_capacity(8);

    let outcome = random_search(
        &cc.search.space,
        train,
        test,
        cc.search.n_draws,
        cc.search.seed,
        cc.search.selection,
    )?;
    let best = outcome.best().expect("nonempty outcome");
    columns.push(score(&best.model, best.model.is_pooled())?);
    let ens = ensemble_topk(&outcome, cc.search.top_k)?;
    columns.push(score(&ens, ens.members[0].is_pooled())?);

    for (space, seed_idx) in [
        (spt_space(&cc.search.space), 2u64),
        (joint_space(&cc.search.space), 3u64),
    ] {
        let sub = random_search(
            &space,
            train,
            test,
            cc.search.n_draws,
            derive_seed(cc.search.seed, seed_idx),
            cc.search.selection,
        )?;
        let best = sub.best().expect("nonempty outcome");
        columns.push(score(&best.model, best.model.is_pooled())?);
    }

    let opt = OptConfig::default();
    let nl_c = fit_nl(train, &cc.ties, &opt)?;
    columns.push(score(&nl_c.model, false)?);
    let nl_nc = fit_nl(train, &[], &opt)?;
    columns.push(score(&nl_nc.model, false)?);
    let mnl_spt = MnlPair {
        rp: fit_mnl(train, TaskScope::Rp, &opt)?.model,
        sp: fit_mnl(train, TaskScope::Sp, &opt)?.model,
    };
    columns.push(score(&mnl_spt, false)?);
    let mnl_joint = fit_mnl(train, TaskScope::Joint, &opt)?.model;
    columns.push(score(&mnl_joint, true)?);

    // 6 rows x 8 columns, the accuracy-panel shape.
    let grid_path = dir.join("compare.csv");
    let mut w = csv::Writer::from_path(&grid_path)?;
    let mut header = vec!["metric".to_string()];
    header.extend(COMPARE_COLUMNS.iter().map(|s| s.to_string()));
    w.write_record(&header)?;
    let rows: [(&str, fn(&(AccuracySummary, AccuracySummary)) -> Real); 6] = [
        ("train_joint", |c| c.0.joint),
        ("train_rp", |c| c.0.rp),
        ("train_sp", |c| c.0.sp),
        ("test_joint", |c| c.1.joint),
        ("test_rp", |c| c.1.rp),
        ("test_sp", |c| c.1.sp),
    ];
    for (name, get) in rows {
        let mut record = vec![name.to_string()];
        record.extend(columns.iter().map(|c| format!("{:.6}", get(c))));
        w.write_record(&record)?;
    }
    w.flush()?;

    #[derive(Serialize)]
    struct Meta<'a> {
        config_hash: &'a str,
        seed: u64,
        mask_rp: bool,
        n_draws: usize,
        top_k: usize,
        failed_draws: Vec<usize>,
    }
    let meta = write_json(
        dir,
        "compare_meta.json",
        &Meta {
            config_hash: &ctx.hash,
            seed: cc.search.seed,
            mask_rp,
            n_draws: cc.search.n_draws,
            top_k: cc.search.top_k,
            failed_draws: outcome.failed.clone(),
        },
    )?;
    Ok(vec![PathBuf::from("compare.csv"), meta])
}
