//! Acceptance gate: one test per release criterion, each printing a PASS
//! line with the measured quantity (visible with `--nocapture`; failures
//! always show it).

use std::time::Instant;

use ndarray::Array2;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use choicefuse::data::{Dataset, Task};
use choicefuse::interpret::{elasticity, prob_curve, CurveSpec};
use choicefuse::math::{finite_diff_grad, Activation};
use choicefuse::mnl::{fit_mnl, mnl_nll, MnlPair, OptConfig, TaskScope};
use choicefuse::model::{evaluate, ProbModel};
use choicefuse::mtldnn::{
    self, head_alignment_distance, loss, loss_and_grad, Batch, HyperConfig, MtldnnModel,
};
use choicefuse::nl::{fit_nl, nl_pooled_nll, TieSpec};
use choicefuse::search::{random_search, SearchSpace, Selection};
use choicefuse::synth::{
    generate, linear_mnl_recovery_spec, nonlinear_spec, scaled_nl_spec,
};
use choicefuse::Real;

fn hyper(m1: usize, m2: usize, width: usize, seed: u64) -> HyperConfig {
    HyperConfig {
        m1,
        m2,
        width,
        lambda0: 1.0,
        lambda1: 0.0,
        lambda2: 0.0,
        lambda3: 0.0,
        n_iter: 1000,
        batch: 32,
        lr: 1e-3,
        seed,
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, d: usize, k: usize) -> Batch {
    let x = Array2::from_shape_fn((n, d), |_| rng.gen_range(-2.0..2.0));
    let y = (0..n).map(|_| rng.gen_range(0..k)).collect();
    Batch { x, y }
}

fn min_abs_preactivation(model: &MtldnnModel, x: &Array2<Real>, task: Task) -> Real {
    let head = match task {
        Task::Rp => &model.rp_head,
        Task::Sp => &model.sp_head,
    };
    let mut min = Real::INFINITY;
    let mut cur = x.clone();
    for layer in model.shared.iter().chain(head) {
        let z = cur.dot(&layer.weights.t()) + &layer.bias;
        if layer.activation == Activation::Relu {
            for &v in z.iter() {
                min = min.min(v.abs());
            }
            cur = z.mapv(|v| v.max(0.0));
        } else {
            cur = z;
        }
    }
    min
}

/// Criterion 1: analytic loss gradients match central finite differences to
/// a relative error below 1e-5 on at least 100 random instances spanning
/// depths 0..=3, widths {5, 25}, and penalty weights {0, 1e-2}, in under a
/// minute. Instances whose ReLU preactivations sit near a kink are redrawn,
/// since the quadratic oracle is invalid there.
#[test]
fn criterion_1_gradients_match_finite_differences() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    let widths = [5usize, 25];
    let lambdas = [0.0, 1e-2];
    let (d, k_r, k_s) = (4usize, 2usize, 3usize);
    let mut checked = 0usize;
    let mut max_rel: Real = 0.0;
    while checked < 100 {
        let m1 = rng.gen_range(0..=3);
        let m2 = rng.gen_range(0..=3);
        if m1 + m2 == 0 {
            continue;
        }
        let mut h = hyper(m1, m2, widths[rng.gen_range(0..2)], rng.gen());
        h.lambda1 = lambdas[rng.gen_range(0..2)];
        h.lambda2 = lambdas[rng.gen_range(0..2)];
        h.lambda3 = lambdas[rng.gen_range(0..2)];
        let model = mtldnn::build(&h, d, k_r, k_s, vec![]).unwrap();
        let (rp, sp) = loop {
            let rp = random_batch(&mut rng, 5, d, k_r);
            let sp = random_batch(&mut rng, 5, d, k_s);
            if min_abs_preactivation(&model, &rp.x, Task::Rp) > 1e-3
                && min_abs_preactivation(&model, &sp.x, Task::Sp) > 1e-3
            {
                break (rp, sp);
            }
        };
        let params = model.params_flat();
        let (_, grad) = loss_and_grad(&model, Some(&rp), Some(&sp), &h).unwrap();
        let fd = finite_diff_grad(
            |p: &[Real]| {
                let mut m = model.clone();
                m.set_params(p).unwrap();
                loss(&m, Some(&rp), Some(&sp), &h).unwrap().total
            },
            &params,
            1e-5,
        )
        .unwrap();
        for (i, (a, f)) in grad.iter().zip(&fd).enumerate() {
            // Floor at 1e-4: below that, central differences with h = 1e-5
            // bottom out at roundoff (~1e-11 absolute) and stop being a
            // valid oracle for the gradient.
            let rel = (a - f).abs() / a.abs().max(f.abs()).max(1e-4);
            max_rel = max_rel.max(rel);
            assert!(
                rel < 1e-5,
                "instance {checked} (m1={m1} m2={m2}) param {i}: analytic {a} vs fd {f}"
            );
        }
        checked += 1;
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 60, "took {elapsed:?}");
    println!(
        "criterion 1 PASS: {checked} instances, max rel err {max_rel:.2e}, {elapsed:?}"
    );
}

/// Criterion 2: maximum-likelihood recovery of the LinearMnl coefficients
/// (1.0, -0.5) within +-0.1 at n = 10,000, and the fitted point beats an
/// independent 81x81 likelihood grid around it, in under 30 s.
#[test]
fn criterion_2_mnl_recovery_and_grid_oracle() {
    let start = Instant::now();
    let spec = linear_mnl_recovery_spec();
    let data = generate(&spec, 10_000, 1, 21).unwrap();
    let fit = fit_mnl(&data, TaskScope::Rp, &OptConfig::default()).unwrap();
    let b1 = fit.model.beta[[0, 1]];
    let b2 = fit.model.beta[[0, 2]];
    assert!((b1 - 1.0).abs() < 0.1, "beta1 {b1}");
    assert!((b2 + 0.5).abs() < 0.1, "beta2 {b2}");

    // Independent oracle: vary the two alternative-0 feature coefficients
    // over an 81x81 grid; no grid point may beat the fitted likelihood.
    let (x, y) = data.task_matrix(Task::Rp);
    let mut design = Array2::ones((x.nrows(), x.ncols() + 1));
    design.slice_mut(ndarray::s![.., 1..]).assign(&x);
    let fitted_nll = mnl_nll(&fit.model.beta, &design, &y);
    let mut grid_min = Real::INFINITY;
    for i in 0..81 {
        for j in 0..81 {
            let mut beta = fit.model.beta.clone();
            beta[[0, 1]] = b1 - 0.4 + 0.01 * i as Real;
            beta[[0, 2]] = b2 - 0.4 + 0.01 * j as Real;
            grid_min = grid_min.min(mnl_nll(&beta, &design, &y));
        }
    }
    assert!(
        fitted_nll <= grid_min + 1e-9,
        "fitted nll {fitted_nll} vs grid min {grid_min}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 30, "took {elapsed:?}");
    println!(
        "criterion 2 PASS: beta=({b1:.3}, {b2:.3}), fitted nll {fitted_nll:.6} <= grid min {grid_min:.6}, {elapsed:?}"
    );
}

fn scaled_nl_ties() -> Vec<TieSpec> {
    let mut ties = Vec::new();
    for alt in 0..2 {
        for feature in ["cost", "time"] {
            ties.push(TieSpec {
                feature: feature.into(),
                alternative: alt,
            });
        }
    }
    ties
}

/// Criterion 3: the constrained joint fit recovers the SP scale theta = 2.0
/// within [1.8, 2.2] on every one of 5 seeds at n_r = n_s = 20,000, in
/// under 2 min.
#[test]
fn criterion_3_theta_recovery() {
    let start = Instant::now();
    let spec = scaled_nl_spec(2.0);
    let mut estimates = Vec::new();
    for seed in 0..5u64 {
        let data = generate(&spec, 20_000, 20_000, 100 + seed).unwrap();
        let fit = fit_nl(&data, &scaled_nl_ties(), &OptConfig::default()).unwrap();
        let theta = fit.model.theta();
        assert!(
            (1.8..=2.2).contains(&theta),
            "seed {seed}: theta {theta}"
        );
        estimates.push(theta);
    }
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 120, "took {elapsed:?}");
    println!("criterion 3 PASS: theta estimates {estimates:?}, {elapsed:?}");
}

/// Criterion 4: without ties, theta is not identified: rescaling
/// (beta_s, theta) by c in {0.5, 2, 10} moves the pooled likelihood by less
/// than 1e-10.
#[test]
fn criterion_4_theta_not_identified_without_ties() {
    let spec = scaled_nl_spec(2.0);
    let data = generate(&spec, 2_000, 2_000, 77).unwrap();
    let fit = fit_nl(&data, &[], &OptConfig::default()).unwrap();
    assert!(!fit.model.theta_identified);
    let base = nl_pooled_nll(
        &fit.model.beta_r,
        &fit.model.beta_s,
        fit.model.theta(),
        &data,
    );
    let mut max_shift: Real = 0.0;
    for c in [0.5, 2.0, 10.0] {
        let scaled = nl_pooled_nll(
            &fit.model.beta_r,
            &(&fit.model.beta_s * c),
            fit.model.theta() * c,
            &data,
        );
        max_shift = max_shift.max((scaled - base).abs());
    }
    assert!(max_shift < 1e-10, "likelihood moved by {max_shift}");
    println!("criterion 4 PASS: max likelihood shift {max_shift:.2e} under rescaling");
}

fn filter_task(data: &Dataset, task: Task) -> Dataset {
    Dataset::new(
        data.schema().clone(),
        data.k_r(),
        data.k_s(),
        data.rows().iter().filter(|o| o.task == task).cloned().collect(),
    )
    .unwrap()
}

/// Criterion 5: with no shared layers and no alignment penalty the joint
/// run decouples: after 1,000 iterations every RP-head (resp. SP-head)
/// parameter matches the corresponding single-task run within 1e-10.
#[test]
fn criterion_5_decoupling_matches_single_task_runs() {
    let spec = nonlinear_spec();
    let data = generate(&spec, 400, 400, 5).unwrap();
    let mut h = hyper(0, 2, 10, 55);
    h.n_iter = 1000;
    let build = || {
        mtldnn::build(
            &h,
            data.schema().d(),
            data.k_r(),
            data.k_s(),
            data.schema().av_indices(),
        )
        .unwrap()
    };

    let mut joint = build();
    mtldnn::train(&mut joint, &data, &h).unwrap();
    let mut rp_only = build();
    mtldnn::train(&mut rp_only, &filter_task(&data, Task::Rp), &h).unwrap();
    let mut sp_only = build();
    mtldnn::train(&mut sp_only, &filter_task(&data, Task::Sp), &h).unwrap();

    let mut max_dev: Real = 0.0;
    for (a, b) in joint.rp_head.iter().zip(&rp_only.rp_head) {
        for (x, y) in a.weights.iter().zip(b.weights.iter()) {
            max_dev = max_dev.max((x - y).abs());
        }
        for (x, y) in a.bias.iter().zip(b.bias.iter()) {
            max_dev = max_dev.max((x - y).abs());
        }
    }
    for (a, b) in joint.sp_head.iter().zip(&sp_only.sp_head) {
        for (x, y) in a.weights.iter().zip(b.weights.iter()) {
            max_dev = max_dev.max((x - y).abs());
        }
        for (x, y) in a.bias.iter().zip(b.bias.iter()) {
            max_dev = max_dev.max((x - y).abs());
        }
    }
    max_dev = max_dev.max((joint.log_t - sp_only.log_t).abs());
    assert!(max_dev < 1e-10, "max parameter deviation {max_dev}");
    println!("criterion 5 PASS: max parameter deviation {max_dev:.2e}");
}

/// Criterion 6: sweeping lambda3 over {0, 1e-4, 1e-2, 5e-1, 1e2}, the final
/// aligned-head distance at 1e2 is at least 10x smaller than at 0.
#[test]
fn criterion_6_alignment_penalty_controls_head_distance() {
    let spec = nonlinear_spec();
    let data = generate(&spec, 400, 400, 6).unwrap();
    let mut dists = Vec::new();
    for lambda3 in [0.0, 1e-4, 1e-2, 5e-1, 1e2] {
        let mut h = hyper(1, 1, 16, 66);
        h.n_iter = 1500;
        h.lambda3 = lambda3;
        let mut model = mtldnn::build(
            &h,
            data.schema().d(),
            data.k_r(),
            data.k_s(),
            data.schema().av_indices(),
        )
        .unwrap();
        mtldnn::train(&mut model, &data, &h).unwrap();
        dists.push(head_alignment_distance(&model));
    }
    let (loose, tight) = (dists[0], dists[4]);
    assert!(
        tight * 10.0 < loose,
        "distances over the sweep: {dists:?}"
    );
    println!("criterion 6 PASS: head distances over lambda3 sweep {dists:?}");
}

fn desk_search_space() -> SearchSpace {
    SearchSpace {
        m1: vec![1, 2, 3],
        m2: vec![1, 2],
        width: vec![25, 50],
        lambda1: vec![1e-20, 1e-4, 1e-2],
        lambda2: vec![1e-20, 1e-4, 1e-2],
        lambda3: vec![1e-20, 1e-4, 1e-2, 5e-1],
        n_iter: 2000,
        batch: 200,
        lr: 1e-3,
    }
}

/// Criterion 7: on the Nonlinear DGP (n_r = 2,000, n_s = 8,000), the best of
/// a 20-draw random search beats both MNL-SPT and NL-NC joint test accuracy
/// by at least 3 percentage points, in under 10 min.
#[test]
fn criterion_7_misspecification_gap() {
    let start = Instant::now();
    let spec = nonlinear_spec();
    let data = generate(&spec, 2_000, 8_000, 7).unwrap();
    let (train_raw, test_raw) = data.split(0.8, 70).unwrap();
    let (train, test, _) = choicefuse::data::standardize(&train_raw, &test_raw).unwrap();

    let outcome = random_search(
        &desk_search_space(),
        &train,
        &test,
        20,
        700,
        Selection::TestJointAccuracy,
    )
    .unwrap();
    let best = outcome.best().unwrap();
    let dnn_acc = best.test_accuracy.joint;

    let opt = OptConfig::default();
    let mnl_spt = MnlPair {
        rp: fit_mnl(&train, TaskScope::Rp, &opt).unwrap().model,
        sp: fit_mnl(&train, TaskScope::Sp, &opt).unwrap().model,
    };
    let mnl_acc = evaluate(&mnl_spt, &test).unwrap().joint;
    let nl_nc = fit_nl(&train, &[], &opt).unwrap();
    let nl_acc = evaluate(&nl_nc.model, &test).unwrap().joint;

    assert!(
        dnn_acc >= mnl_acc + 0.03 && dnn_acc >= nl_acc + 0.03,
        "network {dnn_acc:.4} vs mnl-spt {mnl_acc:.4}, nl-nc {nl_acc:.4}"
    );
    let elapsed = start.elapsed();
    assert!(elapsed.as_secs() < 600, "took {elapsed:?}");
    println!(
        "criterion 7 PASS: network joint test acc {dnn_acc:.4} vs mnl-spt {mnl_acc:.4} / nl-nc {nl_acc:.4}, {elapsed:?}"
    );
}

/// Criterion 8: over the six (m1, m2) splits of total depth 5, at least one
/// mixed architecture ties or beats both boundary architectures (0, 5) and
/// (5, 0) on joint test accuracy.
#[test]
fn criterion_8_depth_split_sweep() {
    let spec = nonlinear_spec();
    let data = generate(&spec, 1_000, 3_000, 8).unwrap();
    let (train_raw, test_raw) = data.split(0.8, 80).unwrap();
    let (train, test, _) = choicefuse::data::standardize(&train_raw, &test_raw).unwrap();

    let mut accs = Vec::new();
    for (m1, m2) in [(0usize, 5usize), (1, 4), (2, 3), (3, 2), (4, 1), (5, 0)] {
        let mut h = hyper(m1, m2, 25, 88);
        h.n_iter = 2000;
        h.batch = 200;
        let mut model = mtldnn::build(
            &h,
            train.schema().d(),
            train.k_r(),
            train.k_s(),
            train.schema().av_indices(),
        )
        .unwrap();
        mtldnn::train(&mut model, &train, &h).unwrap();
        accs.push(evaluate(&model, &test).unwrap().joint);
    }
    let boundary = accs[0].max(accs[5]);
    let best_mixed = accs[1..5].iter().cloned().fold(0.0 as Real, Real::max);
    assert!(
        best_mixed >= boundary,
        "mixed best {best_mixed:.4} vs boundary best {boundary:.4}; all {accs:?}"
    );
    println!(
        "criterion 8 PASS: accuracies over (m1,m2) splits {accs:?}; best mixed {best_mixed:.4} >= boundary {boundary:.4}"
    );
}

/// Criterion 9: interpretation correctness: per-row elasticity gradients
/// match finite differences in raw units to 1e-6 relative error, curve
/// probabilities stay on the simplex within 1e-10, and the average cost
/// elasticity of the cost-bearing alternative is negative.
#[test]
fn criterion_9_interpretation() {
    let spec = scaled_nl_spec(2.0);
    let data = generate(&spec, 3_000, 3_000, 9).unwrap();
    let (train_raw, test_raw) = data.split(0.8, 90).unwrap();
    let (train, test, scaler) = choicefuse::data::standardize(&train_raw, &test_raw).unwrap();
    let fit = fit_mnl(&train, TaskScope::Sp, &OptConfig::default()).unwrap();
    let model = fit.model;

    // Per-row gradient versus a raw-unit central difference.
    let j = train.schema().index_of("cost").unwrap();
    let eps = 1e-6;
    let mut rows_checked = 0;
    for obs in test
        .rows()
        .iter()
        .filter(|o| {
            // Rows with a vanishing probability carry a vanishing gradient,
            // where the difference quotient is pure roundoff.
            o.task == Task::Sp
                && model.predict(o.x.view(), Task::Sp).unwrap()[0] > 1e-3
        })
        .take(50)
    {
        let g_raw =
            model.prob_input_gradient(obs.x.view(), Task::Sp, 0).unwrap()[j] * scaler.slope(j);
        let raw = scaler.inverse_value(j, obs.x[j]);
        let probe = |r: Real| {
            let mut x = obs.x.clone();
            x[j] = scaler.transform_value(j, r);
            model.predict(x.view(), Task::Sp).unwrap()[0]
        };
        let fd = (probe(raw + eps) - probe(raw - eps)) / (2.0 * eps);
        let rel = (g_raw - fd).abs() / g_raw.abs().max(fd.abs()).max(1e-9);
        assert!(rel < 1e-6, "row {rows_checked}: rel err {rel}");
        rows_checked += 1;
    }

    // Curve probabilities sum to one along the sweep.
    let models: Vec<&dyn ProbModel> = vec![&model];
    let curve = prob_curve(
        &models,
        &scaler,
        train.schema(),
        &CurveSpec {
            feature: "cost".into(),
            task: Task::Sp,
            raw_min: -2.0,
            raw_max: 2.0,
            n_points: 33,
            base: vec![0.0, 0.0, 0.0],
        },
    )
    .unwrap();
    let mut worst: Real = 0.0;
    for p in &curve.mean {
        worst = worst.max((p.sum() - 1.0).abs());
    }
    assert!(worst < 1e-10, "simplex deviation {worst}");

    let summary = elasticity(&model, &test, &scaler, "cost", Task::Sp, 0).unwrap();
    assert!(
        summary.mean_elasticity < 0.0,
        "cost elasticity {}",
        summary.mean_elasticity
    );
    println!(
        "criterion 9 PASS: {rows_checked} gradient rows checked, simplex dev {worst:.2e}, cost elasticity {:.4}",
        summary.mean_elasticity
    );
}

/// Criterion 10: rerunning `compare` with the same config and seed yields
/// byte-identical metric files.
#[test]
fn criterion_10_compare_rerun_is_byte_identical() {
    let config_toml = r#"
standardize = true

[data.synth]
n_rp = 300
n_sp = 600
seed = 11

[data.synth.spec]
kind = "nonlinear"
feature_names = ["x1", "x2", "av_attr"]
av_specific = ["av_attr"]
k_r = 3
k_s = 4
beta_r = [
  [0.0, 0.3, 0.0, 0.0, 1.8, -1.8, 0.0],
  [0.0, 0.0, 0.3, 0.0, -1.8, 1.8, 2.0],
  [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
]
beta_s = [
  [0.0, 0.3, 0.0, 0.0, 1.8, -1.8, 0.0],
  [0.0, 0.0, 0.3, 0.0, -1.8, 1.8, 2.0],
  [0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
  [0.5, 0.0, 0.0, -1.5, 0.0, 0.0, -2.0],
]
noise_seed = 0

[split]
ratio = 0.8
seed = 2

[model]
kind = "mnl-joint"

[compare]
ties = [
  { feature = "x1", alternative = 0 },
  { feature = "x2", alternative = 1 },
]

[compare.search]
n_draws = 2
seed = 12
top_k = 2

[compare.search.space]
m1 = [1]
m2 = [1]
width = [8]
lambda1 = [0.0]
lambda2 = [0.0]
lambda3 = [0.0]
n_iter = 200
batch = 64
"#;
    let dir = tempfile::tempdir().unwrap();
    let config_path = dir.path().join("exp.toml");
    std::fs::write(&config_path, config_toml).unwrap();

    let run = |out: &std::path::Path| {
        let status = std::process::Command::new(env!("CARGO_BIN_EXE_choicefuse"))
            .args(["compare", "--config"])
            .arg(&config_path)
            .arg("--out-dir")
            .arg(out)
            .status()
            .unwrap();
        assert!(status.success(), "compare exited with {status}");
    };
    let out1 = dir.path().join("run1");
    let out2 = dir.path().join("run2");
    run(&out1);
    run(&out2);

    for name in ["compare.csv", "compare_meta.json"] {
        let a = std::fs::read(out1.join(name)).unwrap();
        let b = std::fs::read(out2.join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between reruns");
    }
    let grid = std::fs::read_to_string(out1.join("compare.csv")).unwrap();
    let mut lines = grid.lines();
    let header = lines.next().unwrap();
    assert_eq!(header.split(',').count(), 9, "metric column + 8 models");
    assert_eq!(lines.count(), 6, "6 accuracy rows");
    println!("criterion 10 PASS: compare reruns byte-identical, grid 6 x 8");
}
