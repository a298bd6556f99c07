//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with the measured values. Run with
//! `cargo test --test acceptance -- --nocapture`.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use wdjm_core::corpus::{parse_transcripts, split_dataset, write_transcripts};
use wdjm_core::embed::EmbedderSpec;
use wdjm_core::features::{extract, read_features_csv, write_features_csv, FeatureCatalog};
use wdjm_core::gbdt::{fit_gbdt, grid_search_gbdt, predict_class, GbdtConfig};
use wdjm_core::gradsuite::{run_suite, GRAD_TOLERANCE};
use wdjm_core::metrics::{compute_metrics, confusion, ConfusionMatrix};
use wdjm_core::model::{
    fuse_predict, load_model_bytes, save_model_bytes, ModelMode, WideDeepConfig,
};
use wdjm_core::ops::softmax_xent;
use wdjm_core::rng::SeededRng;
use wdjm_core::synth::{generate_synthetic, SynthConfig};
use wdjm_core::tensor::Tensor;
use wdjm_core::train::{train, TrainConfig};

fn pass(name: &str, detail: String) {
    println!("[PASS] {name}: {detail}");
}

/// Quantitative verification never leans on the published corpus results:
/// thresholds come from property identities and the synthetic generator's
/// own Bayes oracle, and the README says so.
#[test]
fn c1_disclosure_synthetic_oracle_basis() {
    let readme = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/../../README.md"))
        .expect("README.md present at workspace root");
    assert!(
        readme.contains("proprietary"),
        "README must state that real classroom corpora of this kind are proprietary"
    );
    assert!(
        readme.to_lowercase().contains("synthetic"),
        "README must point at the synthetic benchmark"
    );
    pass(
        "c1-disclosure",
        "README states the proprietary-data caveat; all quantitative gates below are synthetic-oracle or property based".to_string(),
    );
}

#[test]
fn c2_gradient_suite() {
    let started = Instant::now();
    let results = run_suite(1, 10).expect("gradient suite runs");
    let elapsed = started.elapsed().as_secs_f64();
    let mut detail = String::new();
    for r in &results {
        assert!(
            r.passes(GRAD_TOLERANCE),
            "{} exceeded {GRAD_TOLERANCE:e}: {}",
            r.name,
            r.max_rel_error
        );
        detail.push_str(&format!("{}={:.2e} ", r.name, r.max_rel_error));
    }
    assert_eq!(results.len(), 6);
    assert!(elapsed < 60.0, "gradient suite took {elapsed:.1}s");
    pass("c2-gradients", format!("{detail}in {elapsed:.1}s (< 60s)"));
}

#[test]
fn c3_metric_identities() {
    let mut rng = SeededRng::new(42);
    for case in 0..1000 {
        let k = 2 + rng.below(5);
        let n = 1 + rng.below(60);
        let preds: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let cm = confusion(&preds, &labels, k).unwrap();
        let rep = compute_metrics("m", &cm).unwrap();
        assert!(
            (rep.micro_f1 - rep.accuracy).abs() < 1e-12,
            "case {case}: micro {} vs accuracy {}",
            rep.micro_f1,
            rep.accuracy
        );
    }

    let perfect = confusion(&[0, 1, 2, 1], &[0, 1, 2, 1], 3).unwrap();
    let rep = compute_metrics("m", &perfect).unwrap();
    assert_eq!(
        (rep.accuracy, rep.micro_f1, rep.macro_f1),
        (1.0, 1.0, 1.0)
    );

    let cm = ConfusionMatrix::from_rows(&[vec![1, 1], vec![0, 2]]).unwrap();
    let rep = compute_metrics("m", &cm).unwrap();
    assert!((rep.accuracy - 0.75).abs() < 1e-15);
    assert!((rep.macro_f1 - 11.0 / 15.0).abs() < 1e-15);
    pass(
        "c3-metrics",
        "micro-F1 == accuracy on 1000 random evaluations; perfect = 1.0; [[1,1],[0,2]] -> 0.75 / 11/15".to_string(),
    );
}

#[test]
fn c4_softmax_loss_anchors() {
    for k in [2usize, 3, 5, 9] {
        let logits = Tensor::zeros(&[3, k]);
        let labels = vec![0usize; 3];
        let (loss, _) = softmax_xent(&logits, &labels).unwrap();
        assert!(
            (loss - (k as f64).ln()).abs() < 1e-12,
            "K={k}: {loss} vs {}",
            (k as f64).ln()
        );
    }

    // probabilities sum to 1 within 1e-9 end to end
    let cfg = SynthConfig {
        n_samples: 40,
        num_classes: 3,
        ..SynthConfig::default()
    };
    let (ds, _) = generate_synthetic(&cfg, 9).unwrap();
    let mut mcfg = WideDeepConfig::new(3, ModelMode::WideDeep).with_lstm_hidden(8);
    mcfg.d_proj = 8;
    mcfg.wide_hidden = 8;
    mcfg.deep_hidden = vec![8, 6, 4];
    mcfg.embedder = EmbedderSpec::hashed(12);
    let model = wdjm_core::model::WideDeepModel::init(mcfg, 5).unwrap();
    let embedder = wdjm_core::embed::Embedder::new(model.config.embedder.clone()).unwrap();
    for s in &ds.samples {
        let probs = fuse_predict(&model, &embedder, s).unwrap();
        let sum: f64 = probs.iter().sum();
        assert!((sum - 1.0).abs() < 1e-9, "prob sum {sum}");
    }

    // fresh-init first-batch loss on balanced data within 10% of ln K
    for k in [2usize, 3] {
        let cfg = SynthConfig {
            n_samples: 4 * 64,
            num_classes: k,
            ..SynthConfig::default()
        };
        let (ds, _) = generate_synthetic(&cfg, 17).unwrap();
        let mut mcfg = WideDeepConfig::new(k, ModelMode::WideDeep).with_lstm_hidden(8);
        mcfg.d_proj = 8;
        mcfg.wide_hidden = 8;
        mcfg.deep_hidden = vec![8, 6, 4];
        mcfg.embedder = EmbedderSpec::hashed(12);
        let tc = TrainConfig {
            max_epochs: 2,
            patience: 1,
            deterministic: true,
            seed: 11,
            ..TrainConfig::default()
        };
        let (_, report) = train(&ds, &ds, &mcfg, &tc).unwrap();
        let lnk = (k as f64).ln();
        assert!(
            (report.first_batch_loss - lnk).abs() < 0.1 * lnk,
            "K={k}: first batch loss {} vs ln K {lnk}",
            report.first_batch_loss
        );
    }
    pass(
        "c4-softmax-anchors",
        "uniform loss = ln K to 1e-12; prob sums within 1e-9; first-batch loss within 10% of ln K".to_string(),
    );
}

#[test]
fn c5_end_to_end_synthetic_benchmark() {
    let started = Instant::now();
    let cfg = SynthConfig::preset("default").unwrap();
    assert_eq!((cfg.n_samples, cfg.num_classes), (5000, 2));
    let (ds, bayes) = generate_synthetic(&cfg, 1).unwrap();
    assert!(
        (bayes.joint_accuracy - 0.93).abs() <= 0.02,
        "joint bayes {}",
        bayes.joint_accuracy
    );
    assert!(
        (bayes.wide_accuracy - 0.78).abs() <= 0.02,
        "wide bayes {}",
        bayes.wide_accuracy
    );
    assert!(
        (bayes.text_accuracy - 0.78).abs() <= 0.02,
        "text bayes {}",
        bayes.text_accuracy
    );

    let (train_ds, val_ds, test_ds) = split_dataset(&ds, (0.7, 0.15, 0.15), 1).unwrap();
    let tc = TrainConfig {
        max_epochs: 16,
        patience: 5,
        seed: 1,
        ..TrainConfig::default()
    };
    let mut accs = std::collections::BTreeMap::new();
    for mode in [ModelMode::WideDeep, ModelMode::WideOnly, ModelMode::DeepOnly] {
        let mcfg = WideDeepConfig::new(2, mode).with_lstm_hidden(64);
        let (model, _) = train(&train_ds, &val_ds, &mcfg, &tc).unwrap();
        let report = wdjm_core::train::evaluate_model(&model, &test_ds, "m").unwrap();
        accs.insert(format!("{mode}"), report.accuracy);
    }
    let wd = accs["wd"];
    let wide = accs["wide"];
    let deep = accs["deep"];
    assert!(wd >= 0.88, "wide&deep test accuracy {wd}");
    assert!((0.72..=0.82).contains(&wide), "wide-only test accuracy {wide}");
    assert!((0.72..=0.82).contains(&deep), "deep-only test accuracy {deep}");
    assert!(wd - wide >= 0.05, "wd {wd} vs wide {wide}");
    assert!(wd - deep >= 0.05, "wd {wd} vs deep {deep}");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 300.0, "benchmark took {elapsed:.0}s");
    pass(
        "c5-benchmark",
        format!(
            "bayes joint/wide/text = {:.3}/{:.3}/{:.3}; test acc wd {wd:.3}, wide {wide:.3}, deep {deep:.3}; {elapsed:.0}s (< 300s)",
            bayes.joint_accuracy, bayes.wide_accuracy, bayes.text_accuracy
        ),
    );
}

#[test]
fn c6_gbdt_suite() {
    // training log-loss non-increasing at subsample 1.0
    let mut rng = SeededRng::new(21);
    let features: Vec<Vec<f64>> = (0..80)
        .map(|_| vec![rng.range(-5.0, 5.0), rng.range(-5.0, 5.0)])
        .collect();
    let labels: Vec<usize> = features
        .iter()
        .map(|r| usize::from(r[0] - 0.5 * r[1] > 0.0))
        .collect();
    let cfg = GbdtConfig {
        max_depth: 3,
        n_estimators: 30,
        subsample: 1.0,
        min_samples_leaf: 2,
        seed: 4,
        ..GbdtConfig::default()
    };
    let model = fit_gbdt(&features, &labels, 2, &cfg).unwrap();
    for w in model.train_loss.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "loss increased: {:?}", model.train_loss);
    }

    // 1-D separable fixture reaches training accuracy 1.0 with stumps
    let xs: Vec<f64> = (0..30).map(|i| i as f64 * 0.37).collect();
    let sep_labels: Vec<usize> = xs.iter().map(|&x| usize::from(x >= 5.0)).collect();
    let sep_features: Vec<Vec<f64>> = xs.iter().map(|&x| vec![x]).collect();
    let stump_cfg = GbdtConfig {
        max_depth: 1,
        n_estimators: 20,
        subsample: 1.0,
        min_samples_leaf: 1,
        seed: 2,
        ..GbdtConfig::default()
    };
    let stump_model = fit_gbdt(&sep_features, &sep_labels, 2, &stump_cfg).unwrap();
    let correct = sep_features
        .iter()
        .zip(&sep_labels)
        .filter(|(row, &y)| predict_class(&stump_model, row).unwrap() == y)
        .count();
    assert_eq!(correct, xs.len(), "stump training accuracy must be 1.0");

    // 9x9 grid returns the argmax of the retained validation accuracies
    let (ds, _) = generate_synthetic(&SynthConfig::preset("default").map(|mut c| {
        c.n_samples = 400;
        c
    }).unwrap(), 3).unwrap();
    let (gtrain, gval, _) = split_dataset(&ds, (0.6, 0.2, 0.2), 3).unwrap();
    let catalog = FeatureCatalog::default();
    let rows = |d: &wdjm_core::corpus::Dataset| -> Vec<Vec<f64>> {
        d.samples
            .iter()
            .map(|s| wdjm_core::gbdt::feature_row(&extract(s, &catalog).unwrap()))
            .collect()
    };
    let depth_grid: Vec<usize> = (1..=9).collect();
    let rounds_grid: Vec<usize> = (1..=9).map(|i| i * 10).collect();
    let base = GbdtConfig {
        seed: 5,
        ..GbdtConfig::default()
    };
    let outcome = grid_search_gbdt(
        &rows(&gtrain),
        &gtrain.labels(),
        &rows(&gval),
        &gval.labels(),
        2,
        &base,
        &depth_grid,
        &rounds_grid,
    )
    .unwrap();
    assert_eq!(outcome.points.len(), 81);
    let best_by_rescan = outcome
        .points
        .iter()
        .map(|p| p.val_accuracy)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(outcome.best_val_accuracy, best_by_rescan);

    // seeded refit is bit-identical
    let refit = fit_gbdt(
        &rows(&gtrain),
        &gtrain.labels(),
        2,
        &outcome.best_config,
    )
    .unwrap();
    assert_eq!(refit, outcome.best_model);

    pass(
        "c6-gbdt",
        format!(
            "monotone loss ok; separable fixture 30/30; 81-point grid argmax {:.3} at depth {} rounds {}; refit bit-identical",
            outcome.best_val_accuracy, outcome.best_config.max_depth, outcome.best_config.n_estimators
        ),
    );
}

fn run_wdjm(dir: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wdjm"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

#[test]
fn c7_determinism_via_cli() {
    let tmp = tempfile::tempdir().unwrap();
    let mut artifacts: Vec<Vec<Vec<u8>>> = Vec::new();
    for run in 0..2 {
        let dir = tmp.path().join(format!("run{run}"));
        std::fs::create_dir(&dir).unwrap();
        let out = run_wdjm(
            &dir,
            &[
                "generate",
                "--preset",
                "default",
                "--n-samples",
                "360",
                "--seed",
                "7",
                "--output",
                "corpus.jsonl",
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = run_wdjm(
            &dir,
            &[
                "train",
                "--input",
                "corpus.jsonl",
                "--model",
                "wd",
                "--output",
                "model.wdjm",
                "--seed",
                "7",
                "--hidden",
                "16",
                "--embed-dim",
                "16",
                "--max-epochs",
                "4",
                "--deterministic",
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        let out = run_wdjm(
            &dir,
            &[
                "predict",
                "--input",
                "corpus.jsonl",
                "--model-path",
                "model.wdjm",
                "--output",
                "preds.jsonl",
            ],
        );
        assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
        artifacts.push(
            [
                "corpus.jsonl",
                "model.wdjm",
                "model.wdjm.report.json",
                "preds.jsonl",
                "model.wdjm.manifest.json",
            ]
            .iter()
            .map(|f| std::fs::read(dir.join(f)).unwrap())
            .collect(),
        );
    }
    for (i, name) in [
        "corpus.jsonl",
        "model.wdjm",
        "model.wdjm.report.json",
        "preds.jsonl",
        "model.wdjm.manifest.json",
    ]
    .iter()
    .enumerate()
    {
        assert_eq!(
            artifacts[0][i], artifacts[1][i],
            "{name} differs between identical deterministic runs"
        );
    }

    // re-running from the recorded manifest reproduces the artifact hashes
    let dir = tmp.path().join("run0");
    let out = run_wdjm(&dir, &["rerun", "--manifest", "model.wdjm.manifest.json"]);
    assert!(
        out.status.success(),
        "rerun failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    pass(
        "c7-determinism",
        "checkpoints, reports, predictions and manifests bit-identical across two deterministic runs; manifest rerun reproduces hashes".to_string(),
    );
}

#[test]
fn c8_round_trips() {
    // JSONL parse -> serialize -> parse identity
    let cfg = SynthConfig {
        n_samples: 60,
        num_classes: 3,
        noise: 0.1,
        ..SynthConfig::default()
    };
    let (ds, _) = generate_synthetic(&cfg, 31).unwrap();
    let mut buf = Vec::new();
    write_transcripts(&ds, &mut buf).unwrap();
    let ds2 = parse_transcripts(buf.as_slice()).unwrap();
    assert_eq!(ds, ds2);

    // checkpoint save -> load -> predict exactness
    let mut mcfg = WideDeepConfig::new(3, ModelMode::WideDeep).with_lstm_hidden(6);
    mcfg.d_proj = 6;
    mcfg.wide_hidden = 6;
    mcfg.deep_hidden = vec![8, 6, 4];
    mcfg.embedder = EmbedderSpec::hashed(10);
    let model = wdjm_core::model::WideDeepModel::init(mcfg, 23).unwrap();
    let embedder = wdjm_core::embed::Embedder::new(model.config.embedder.clone()).unwrap();
    let bytes = save_model_bytes(&model).unwrap();
    let loaded = load_model_bytes(&bytes).unwrap();
    assert_eq!(save_model_bytes(&loaded).unwrap(), bytes);
    for s in ds.samples.iter().take(10) {
        let a = fuse_predict(&model, &embedder, s).unwrap();
        let b = fuse_predict(&loaded, &embedder, s).unwrap();
        assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    // featurize CSV re-ingestion reproduces x_c and x_d bit-exactly
    let catalog = FeatureCatalog::default();
    let mut csv_buf = Vec::new();
    write_features_csv(&ds, &catalog, &mut csv_buf).unwrap();
    let rows = read_features_csv(csv_buf.as_slice(), &catalog).unwrap();
    assert_eq!(rows.len(), ds.len());
    for (sample, (wf, label)) in ds.samples.iter().zip(rows.iter()) {
        let direct = extract(sample, &catalog).unwrap();
        assert_eq!(*label, sample.label);
        assert_eq!(wf.counts, direct.counts);
        assert_eq!(wf.x_d, direct.x_d);
        assert!(wf
            .x_c
            .iter()
            .zip(direct.x_c.iter())
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
    pass(
        "c8-round-trips",
        "JSONL identity, checkpoint byte + prediction exactness, CSV bit-exact re-ingestion".to_string(),
    );
}
