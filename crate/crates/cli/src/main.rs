//! Command-line front end: corpus generation, featurization, training,
//! grid search, evaluation, prediction and gradient checking, with a run
//! manifest written next to every artifact.

mod manifest;

use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use manifest::{load_manifest, sha256_file, ManifestBuilder};
use wdjm_core::corpus::{parse_transcripts_with_classes, split_dataset, write_transcripts, Dataset};
use wdjm_core::embed::{Embedder, EmbedderSpec, DEFAULT_EMBED_DIM};
use wdjm_core::error::Error as CoreError;
use wdjm_core::features::{extract, write_features_csv, FeatureCatalog};
use wdjm_core::gbdt::{
    feature_row, fit_gbdt, grid_search_gbdt, load_gbdt_json, predict_gbdt, save_gbdt_json,
    GbdtConfig, GbdtModel,
};
use wdjm_core::gradsuite::{run_suite, GRAD_TOLERANCE};
use wdjm_core::metrics::{compute_metrics, confusion, render_table, EvalReport};
use wdjm_core::model::{
    fuse_predict, load_model, save_model, ModelMode, WideDeepConfig, WideDeepModel,
    CHECKPOINT_MAGIC,
};
use wdjm_core::synth::{generate_synthetic, SynthConfig};
use wdjm_core::train::{
    evaluate_model, grid_search, train_with_progress, EpochStats, TrainConfig,
};

#[derive(Parser)]
#[command(name = "wdjm", version, about = "Wide & Deep mastery judgment toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a seeded synthetic transcript corpus with a Bayes report.
    Generate(GenerateArgs),
    /// Export the 25 wide features of every sample as CSV.
    Featurize(FeaturizeArgs),
    /// Split a corpus, train one model, evaluate it on the test split.
    Train(TrainArgs),
    /// Hyperparameter grid search with validation-accuracy selection.
    Gridsearch(GridArgs),
    /// Evaluate checkpoints on a corpus and print the metrics table.
    Evaluate(EvaluateArgs),
    /// Per-sample class probabilities as JSONL.
    Predict(PredictArgs),
    /// Verify analytic gradients against finite differences.
    Gradcheck(GradcheckArgs),
    /// Re-run a recorded manifest and verify the artifact hashes.
    Rerun(RerunArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum ModelKind {
    Wd,
    Wide,
    Deep,
    Gbdt,
}

impl ModelKind {
    fn mode(self) -> ModelMode {
        match self {
            ModelKind::Wd => ModelMode::WideDeep,
            ModelKind::Wide => ModelMode::WideOnly,
            ModelKind::Deep => ModelMode::DeepOnly,
            ModelKind::Gbdt => unreachable!("gbdt has no neural mode"),
        }
    }
}

#[derive(Args)]
struct GenerateArgs {
    /// Output JSONL corpus path.
    #[arg(long)]
    output: PathBuf,
    /// Built-in preset name (`default`, `k3`).
    #[arg(long, default_value = "default")]
    preset: String,
    /// Synthetic config file (TOML, may embed presets).
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Override the preset's sample count.
    #[arg(long)]
    n_samples: Option<usize>,
    /// Override the preset's class count.
    #[arg(long)]
    num_classes: Option<usize>,
}

#[derive(Args)]
struct FeaturizeArgs {
    /// Input JSONL corpus.
    #[arg(long)]
    input: PathBuf,
    /// Output CSV path.
    #[arg(long)]
    output: PathBuf,
    /// Feature catalog override file (TOML).
    #[arg(long)]
    catalog: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct TrainArgs {
    /// Input JSONL corpus; split internally into train/val/test.
    #[arg(long)]
    input: PathBuf,
    /// Output checkpoint path.
    #[arg(long)]
    output: PathBuf,
    #[arg(long, value_enum, default_value = "wd")]
    model: ModelKind,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Train config override file (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Feature catalog override file (TOML).
    #[arg(long)]
    catalog: Option<PathBuf>,
    /// BiLSTM hidden size.
    #[arg(long, default_value_t = 64)]
    hidden: usize,
    /// Hashed-ngram embedder width.
    #[arg(long, default_value_t = DEFAULT_EMBED_DIM)]
    embed_dim: usize,
    /// Use a pretrained sentence-embedding table (TSV) instead of hashing.
    #[arg(long)]
    embed_table: Option<PathBuf>,
    /// train,val,test ratios.
    #[arg(long, default_value = "0.7,0.15,0.15")]
    split: String,
    /// Force single-threaded reductions and zeroed timings.
    #[arg(long)]
    deterministic: bool,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    num_classes: Option<usize>,
    /// Tree depth for the gbdt model.
    #[arg(long, default_value_t = 3)]
    gbdt_depth: usize,
    /// Boosting rounds for the gbdt model.
    #[arg(long, default_value_t = 50)]
    gbdt_rounds: usize,
}

#[derive(Args)]
struct GridArgs {
    #[command(flatten)]
    train: TrainArgs,
    /// Per-point reports path (JSON).
    #[arg(long)]
    points: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Input JSONL corpus.
    #[arg(long)]
    input: PathBuf,
    /// Checkpoint path; repeat for a multi-row table.
    #[arg(long = "model-path", required = true)]
    model_paths: Vec<PathBuf>,
    /// Which part of the corpus to evaluate.
    #[arg(long, default_value = "all")]
    split: String,
    /// Seed of the split to reproduce (for `--split test` etc.).
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "0.7,0.15,0.15")]
    ratios: String,
    /// Reports JSON output path.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long)]
    num_classes: Option<usize>,
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    input: PathBuf,
    #[arg(long = "model-path")]
    model_path: PathBuf,
    /// Output JSONL of per-sample probabilities.
    #[arg(long)]
    output: PathBuf,
    #[arg(long)]
    num_classes: Option<usize>,
}

#[derive(Args)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 10)]
    instances: usize,
}

#[derive(Args)]
struct RerunArgs {
    /// Manifest written by a previous run.
    #[arg(long)]
    manifest: PathBuf,
}

// ---------------------------------------------------------------------------
// Error handling / exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    Core(CoreError),
    Usage(String),
    HashMismatch(String),
}

impl From<CoreError> for CliError {
    fn from(e: CoreError) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(CoreError::Io(e))
    }
}

fn error_kind_and_code(err: &CliError) -> (&'static str, i32) {
    match err {
        CliError::Usage(_) => ("usage", 2),
        CliError::HashMismatch(_) => ("hash-mismatch", 11),
        CliError::Core(e) => match e {
            CoreError::Io(_) => ("io", 3),
            CoreError::Parse { .. } => ("parse", 4),
            CoreError::Validation { .. } | CoreError::EmptyDataset(_) => ("validation", 5),
            CoreError::Config(_) => ("config", 6),
            CoreError::ClassMismatch { .. } | CoreError::Label { .. } => ("class-mismatch", 7),
            CoreError::UnsupportedFormat(_) | CoreError::Corrupted(_) => ("checkpoint", 8),
            CoreError::Numeric { .. } | CoreError::Diverged { .. } => ("numeric", 9),
            CoreError::Shape { .. } | CoreError::FeatureMismatch { .. } | CoreError::Data(_) => {
                ("data", 10)
            }
            CoreError::MissingEmbedding(_) => ("data", 10),
        },
    }
}

fn fail(err: CliError) -> ! {
    let (kind, code) = error_kind_and_code(&err);
    let msg = match &err {
        CliError::Core(e) => e.to_string(),
        CliError::Usage(m) | CliError::HashMismatch(m) => m.clone(),
    };
    let one_line = msg.replace('\n', " ");
    eprintln!("error kind={kind} code={code}: {one_line}");
    std::process::exit(code);
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

fn read_corpus(path: &Path, num_classes: Option<usize>) -> Result<Dataset, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Core(CoreError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display())))))?;
    Ok(parse_transcripts_with_classes(BufReader::new(file), num_classes)?)
}

fn load_catalog(path: &Option<PathBuf>) -> Result<FeatureCatalog, CliError> {
    match path {
        None => Ok(FeatureCatalog::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            Ok(FeatureCatalog::from_toml(&text)?)
        }
    }
}

fn parse_ratios(text: &str) -> Result<(f64, f64, f64), CliError> {
    let parts: Vec<f64> = text
        .split(',')
        .map(|p| p.trim().parse::<f64>())
        .collect::<Result<_, _>>()
        .map_err(|e| CliError::Usage(format!("bad --split {text:?}: {e}")))?;
    if parts.len() != 3 {
        return Err(CliError::Usage(format!(
            "--split needs three comma-separated ratios, got {text:?}"
        )));
    }
    Ok((parts[0], parts[1], parts[2]))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let json = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Core(CoreError::Data(format!("serialize: {e}"))))?;
    std::fs::write(path, json + "\n")?;
    Ok(())
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let mut name = path
        .file_name()
        .map(|n| n.to_string_lossy().to_string())
        .unwrap_or_else(|| "out".to_string());
    name.push_str(suffix);
    path.with_file_name(name)
}

enum AnyModel {
    Neural(Box<WideDeepModel>),
    Gbdt(Box<GbdtModel>),
}

fn load_any_model(path: &Path) -> Result<AnyModel, CliError> {
    let bytes = std::fs::read(path)?;
    if bytes.len() >= 4 && &bytes[..4] == CHECKPOINT_MAGIC {
        return Ok(AnyModel::Neural(Box::new(load_model(path)?)));
    }
    let text = String::from_utf8(bytes).map_err(|_| {
        CliError::Core(CoreError::UnsupportedFormat(format!(
            "{} is neither a WDJM checkpoint nor JSON",
            path.display()
        )))
    })?;
    Ok(AnyModel::Gbdt(Box::new(load_gbdt_json(&text)?)))
}

fn gbdt_eval(model: &GbdtModel, ds: &Dataset, name: &str) -> Result<EvalReport, CliError> {
    let catalog = model.catalog.clone().ok_or_else(|| {
        CliError::Core(CoreError::Config(
            "gbdt checkpoint carries no feature catalog".into(),
        ))
    })?;
    if ds.num_classes != model.num_classes {
        return Err(CliError::Core(CoreError::ClassMismatch {
            left: ds.num_classes,
            right: model.num_classes,
        }));
    }
    let mut preds = Vec::with_capacity(ds.len());
    for s in &ds.samples {
        let row = feature_row(&extract(s, &catalog)?);
        let probs = predict_gbdt(model, &row)?;
        preds.push(argmax(&probs));
    }
    let cm = confusion(&preds, &ds.labels(), ds.num_classes)?;
    Ok(compute_metrics(name, &cm)?)
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

fn stem_name(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().to_string())
        .unwrap_or_else(|| "model".to_string())
}

// ---------------------------------------------------------------------------
// Commands
// ---------------------------------------------------------------------------

fn cmd_generate(args: &GenerateArgs, argv: Vec<String>) -> Result<(), CliError> {
    let mut cfg = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            SynthConfig::from_toml(&text)?
        }
        None => SynthConfig::preset(&args.preset)?,
    };
    if let Some(n) = args.n_samples {
        cfg.n_samples = n;
    }
    if let Some(k) = args.num_classes {
        cfg.num_classes = k;
    }
    let (dataset, report) = generate_synthetic(&cfg, args.seed)?;

    let file = std::fs::File::create(&args.output)?;
    let mut w = BufWriter::new(file);
    write_transcripts(&dataset, &mut w)?;
    w.flush()?;
    let bayes_path = sibling(&args.output, ".bayes.json");
    write_json(&bayes_path, &report)?;

    let mut mb = ManifestBuilder::new("generate", argv, Some(args.seed), true);
    mb.output(&args.output)?;
    mb.output(&bayes_path)?;
    mb.write_next_to(&args.output)?;

    println!(
        "generated {} samples (K={}) -> {}",
        dataset.len(),
        dataset.num_classes,
        args.output.display()
    );
    println!(
        "bayes oracle: joint {:.4} wide {:.4} text {:.4} (held-out n={})",
        report.joint_accuracy, report.wide_accuracy, report.text_accuracy, report.n_heldout
    );
    Ok(())
}

fn cmd_featurize(args: &FeaturizeArgs, argv: Vec<String>) -> Result<(), CliError> {
    let ds = read_corpus(&args.input, None)?;
    let catalog = load_catalog(&args.catalog)?;
    let file = std::fs::File::create(&args.output)?;
    write_features_csv(&ds, &catalog, BufWriter::new(file))?;

    let mut mb = ManifestBuilder::new("featurize", argv, None, true);
    mb.input(&args.input)?;
    mb.output(&args.output)?;
    mb.write_next_to(&args.output)?;
    println!("featurized {} samples -> {}", ds.len(), args.output.display());
    Ok(())
}

fn build_train_config(args: &TrainArgs) -> Result<TrainConfig, CliError> {
    let mut tc = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            TrainConfig::from_toml(&text)?
        }
        None => TrainConfig::default(),
    };
    tc.seed = args.seed;
    tc.deterministic = args.deterministic;
    if let Some(v) = args.max_epochs {
        tc.max_epochs = v;
        if tc.patience >= tc.max_epochs {
            tc.patience = tc.max_epochs.saturating_sub(1).max(1);
        }
    }
    if let Some(v) = args.learning_rate {
        tc.learning_rate = v;
    }
    if let Some(v) = args.batch_size {
        tc.batch_size = v;
    }
    tc.validate()?;
    Ok(tc)
}

fn build_model_config(
    args: &TrainArgs,
    num_classes: usize,
    catalog: FeatureCatalog,
) -> Result<WideDeepConfig, CliError> {
    let mut cfg =
        WideDeepConfig::new(num_classes, args.model.mode()).with_lstm_hidden(args.hidden);
    cfg.catalog = catalog;
    cfg.embedder = match &args.embed_table {
        Some(path) => EmbedderSpec::PretrainedTable {
            dim: args.embed_dim,
            path: path.display().to_string(),
        },
        None => EmbedderSpec::hashed(args.embed_dim),
    };
    cfg.validate()?;
    Ok(cfg)
}

#[derive(Serialize)]
struct GbdtRunReport {
    config: GbdtConfig,
    train_loss: Vec<f64>,
    val_accuracy: f64,
    test: EvalReport,
}

fn cmd_train(args: &TrainArgs, argv: Vec<String>) -> Result<(), CliError> {
    let ds = read_corpus(&args.input, args.num_classes)?;
    let ratios = parse_ratios(&args.split)?;
    let (train_ds, val_ds, test_ds) = split_dataset(&ds, ratios, args.seed)?;
    let catalog = load_catalog(&args.catalog)?;
    println!(
        "split: train {} / val {} / test {} (K={})",
        train_ds.len(),
        val_ds.len(),
        test_ds.len(),
        ds.num_classes
    );

    let report_path = sibling(&args.output, ".report.json");
    if args.model == ModelKind::Gbdt {
        let cfg = GbdtConfig {
            max_depth: args.gbdt_depth,
            n_estimators: args.gbdt_rounds,
            seed: args.seed,
            ..GbdtConfig::default()
        };
        let (model, val_acc, test_report) =
            train_gbdt_on(&train_ds, &val_ds, &test_ds, &catalog, &cfg, "gbdt")?;
        std::fs::write(&args.output, save_gbdt_json(&model)? + "\n")?;
        let run = GbdtRunReport {
            config: cfg,
            train_loss: model.train_loss.clone(),
            val_accuracy: val_acc,
            test: test_report.clone(),
        };
        write_json(&report_path, &run)?;
        println!("{}", render_table(std::slice::from_ref(&test_report)));
    } else {
        let tc = build_train_config(args)?;
        let mc = build_model_config(args, ds.num_classes, catalog)?;
        let (model, mut report) = train_with_progress(
            &train_ds,
            &val_ds,
            &mc,
            &tc,
            &mut |e: &EpochStats| {
                println!(
                    "epoch {:>3}  train_loss {:.6}  val_acc {:.4}",
                    e.epoch, e.train_loss, e.val_accuracy
                );
            },
        )?;
        let name = stem_name(&args.output);
        let test_report = evaluate_model(&model, &test_ds, &name)?;
        report.test = Some(test_report.clone());
        save_model(&model, &args.output)?;
        write_json(&report_path, &report)?;
        println!(
            "best epoch {} (val_acc {:.4})",
            report.best_epoch, report.best_val_accuracy
        );
        println!("{}", render_table(std::slice::from_ref(&test_report)));
    }

    let mut mb = ManifestBuilder::new("train", argv, Some(args.seed), args.deterministic);
    mb.input(&args.input)?;
    mb.output(&args.output)?;
    mb.output(&report_path)?;
    mb.write_next_to(&args.output)?;
    Ok(())
}

fn train_gbdt_on(
    train_ds: &Dataset,
    val_ds: &Dataset,
    test_ds: &Dataset,
    catalog: &FeatureCatalog,
    cfg: &GbdtConfig,
    name: &str,
) -> Result<(GbdtModel, f64, EvalReport), CliError> {
    let rows = |ds: &Dataset| -> Result<Vec<Vec<f64>>, CliError> {
        ds.samples
            .iter()
            .map(|s| Ok(feature_row(&extract(s, catalog)?)))
            .collect()
    };
    let train_rows = rows(train_ds)?;
    let val_rows = rows(val_ds)?;
    let test_rows = rows(test_ds)?;
    let mut model = fit_gbdt(&train_rows, &train_ds.labels(), train_ds.num_classes, cfg)?;
    model.catalog = Some(catalog.clone());

    let acc_on = |rows: &[Vec<f64>], labels: &[usize]| -> Result<f64, CliError> {
        let mut correct = 0usize;
        for (row, &y) in rows.iter().zip(labels) {
            if argmax(&predict_gbdt(&model, row)?) == y {
                correct += 1;
            }
        }
        Ok(correct as f64 / labels.len() as f64)
    };
    let val_acc = acc_on(&val_rows, &val_ds.labels())?;
    let mut preds = Vec::with_capacity(test_rows.len());
    for row in &test_rows {
        preds.push(argmax(&predict_gbdt(&model, row)?));
    }
    let cm = confusion(&preds, &test_ds.labels(), test_ds.num_classes)?;
    let report = compute_metrics(name, &cm)?;
    Ok((model, val_acc, report))
}

fn cmd_gridsearch(args: &GridArgs, argv: Vec<String>) -> Result<(), CliError> {
    let t = &args.train;
    let ds = read_corpus(&t.input, t.num_classes)?;
    let ratios = parse_ratios(&t.split)?;
    let (train_ds, val_ds, test_ds) = split_dataset(&ds, ratios, t.seed)?;
    let catalog = load_catalog(&t.catalog)?;
    let report_path = sibling(&t.output, ".report.json");
    let points_path = args
        .points
        .clone()
        .unwrap_or_else(|| sibling(&t.output, ".points.json"));

    if t.model == ModelKind::Gbdt {
        let base = GbdtConfig {
            seed: t.seed,
            ..GbdtConfig::default()
        };
        let rows = |ds: &Dataset| -> Result<Vec<Vec<f64>>, CliError> {
            ds.samples
                .iter()
                .map(|s| Ok(feature_row(&extract(s, &catalog)?)))
                .collect()
        };
        let train_rows = rows(&train_ds)?;
        let val_rows = rows(&val_ds)?;
        let depth_grid: Vec<usize> = (1..=9).collect();
        let rounds_grid: Vec<usize> = (1..=9).map(|i| i * 10).collect();
        let outcome = grid_search_gbdt(
            &train_rows,
            &train_ds.labels(),
            &val_rows,
            &val_ds.labels(),
            ds.num_classes,
            &base,
            &depth_grid,
            &rounds_grid,
        )?;
        let mut model = outcome.best_model;
        model.catalog = Some(catalog.clone());
        std::fs::write(&t.output, save_gbdt_json(&model)? + "\n")?;
        write_json(&points_path, &outcome.points)?;
        let test_rows = rows(&test_ds)?;
        let mut preds = Vec::with_capacity(test_rows.len());
        for row in &test_rows {
            preds.push(argmax(&predict_gbdt(&model, row)?));
        }
        let cm = confusion(&preds, &test_ds.labels(), test_ds.num_classes)?;
        let test_report = compute_metrics("gbdt", &cm)?;
        let run = GbdtRunReport {
            config: outcome.best_config.clone(),
            train_loss: model.train_loss.clone(),
            val_accuracy: outcome.best_val_accuracy,
            test: test_report.clone(),
        };
        write_json(&report_path, &run)?;
        println!(
            "best gbdt: depth {} rounds {} (val_acc {:.4})",
            outcome.best_config.max_depth,
            outcome.best_config.n_estimators,
            outcome.best_val_accuracy
        );
        println!("{}", render_table(std::slice::from_ref(&test_report)));
    } else {
        let tc = build_train_config(t)?;
        let mc = build_model_config(t, ds.num_classes, catalog)?;
        let outcome = grid_search(&train_ds, &val_ds, &mc, &tc)?;
        let mut best_report = outcome.best_report;
        let name = stem_name(&t.output);
        let test_report = evaluate_model(&outcome.best_model, &test_ds, &name)?;
        best_report.test = Some(test_report.clone());
        save_model(&outcome.best_model, &t.output)?;
        write_json(&points_path, &outcome.points)?;
        write_json(&report_path, &best_report)?;
        println!(
            "best hidden size {} (val_acc {:.4})",
            outcome.best_hidden, best_report.best_val_accuracy
        );
        println!("{}", render_table(std::slice::from_ref(&test_report)));
    }

    let mut mb = ManifestBuilder::new("gridsearch", argv, Some(t.seed), t.deterministic);
    mb.input(&t.input)?;
    mb.output(&t.output)?;
    mb.output(&report_path)?;
    mb.output(&points_path)?;
    mb.write_next_to(&t.output)?;
    Ok(())
}

fn select_split(
    ds: &Dataset,
    which: &str,
    ratios: (f64, f64, f64),
    seed: u64,
) -> Result<Dataset, CliError> {
    match which {
        "all" => Ok(ds.clone()),
        "train" | "val" | "test" => {
            let (train, val, test) = split_dataset(ds, ratios, seed)?;
            Ok(match which {
                "train" => train,
                "val" => val,
                _ => test,
            })
        }
        other => Err(CliError::Usage(format!(
            "--split must be all|train|val|test, got {other:?}"
        ))),
    }
}

fn cmd_evaluate(args: &EvaluateArgs, argv: Vec<String>) -> Result<(), CliError> {
    let ds = read_corpus(&args.input, args.num_classes)?;
    let ratios = parse_ratios(&args.ratios)?;
    let eval_ds = select_split(&ds, &args.split, ratios, args.seed)?;

    let mut reports = Vec::new();
    for path in &args.model_paths {
        let name = stem_name(path);
        let report = match load_any_model(path)? {
            AnyModel::Neural(model) => evaluate_model(&model, &eval_ds, &name)?,
            AnyModel::Gbdt(model) => gbdt_eval(&model, &eval_ds, &name)?,
        };
        reports.push(report);
    }
    print!("{}", render_table(&reports));

    if let Some(out) = &args.output {
        write_json(out, &reports)?;
        let mut mb = ManifestBuilder::new("evaluate", argv, Some(args.seed), true);
        mb.input(&args.input)?;
        for path in &args.model_paths {
            mb.input(path)?;
        }
        mb.output(out)?;
        mb.write_next_to(out)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Prediction<'a> {
    sample_id: &'a str,
    probs: Vec<f64>,
    pred: usize,
}

fn cmd_predict(args: &PredictArgs, argv: Vec<String>) -> Result<(), CliError> {
    let ds = read_corpus(&args.input, args.num_classes)?;
    let model = load_any_model(&args.model_path)?;
    let file = std::fs::File::create(&args.output)?;
    let mut w = BufWriter::new(file);
    match model {
        AnyModel::Neural(model) => {
            if ds.num_classes != model.config.num_classes {
                return Err(CliError::Core(CoreError::ClassMismatch {
                    left: ds.num_classes,
                    right: model.config.num_classes,
                }));
            }
            let embedder = Embedder::new(model.config.embedder.clone())?;
            for s in &ds.samples {
                let probs = fuse_predict(&model, &embedder, s)?;
                let line = Prediction {
                    sample_id: &s.sample_id,
                    pred: argmax(&probs),
                    probs,
                };
                serde_json::to_writer(&mut w, &line)
                    .map_err(|e| CliError::Core(CoreError::Data(e.to_string())))?;
                w.write_all(b"\n")?;
            }
        }
        AnyModel::Gbdt(model) => {
            let catalog = model.catalog.clone().ok_or_else(|| {
                CliError::Core(CoreError::Config(
                    "gbdt checkpoint carries no feature catalog".into(),
                ))
            })?;
            if ds.num_classes != model.num_classes {
                return Err(CliError::Core(CoreError::ClassMismatch {
                    left: ds.num_classes,
                    right: model.num_classes,
                }));
            }
            for s in &ds.samples {
                let row = feature_row(&extract(s, &catalog)?);
                let probs = predict_gbdt(&model, &row)?;
                let line = Prediction {
                    sample_id: &s.sample_id,
                    pred: argmax(&probs),
                    probs,
                };
                serde_json::to_writer(&mut w, &line)
                    .map_err(|e| CliError::Core(CoreError::Data(e.to_string())))?;
                w.write_all(b"\n")?;
            }
        }
    }
    w.flush()?;

    let mut mb = ManifestBuilder::new("predict", argv, None, true);
    mb.input(&args.input)?;
    mb.input(&args.model_path)?;
    mb.output(&args.output)?;
    mb.write_next_to(&args.output)?;
    println!("wrote predictions -> {}", args.output.display());
    Ok(())
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<(), CliError> {
    let results = run_suite(args.seed, args.instances)?;
    let mut all_pass = true;
    for r in &results {
        let ok = r.passes(GRAD_TOLERANCE);
        all_pass &= ok;
        println!(
            "{:<16} max_rel_err {:>12.3e}  ({} instances)  {}",
            r.name,
            r.max_rel_error,
            r.instances,
            if ok { "PASS" } else { "FAIL" }
        );
    }
    if !all_pass {
        return Err(CliError::Core(CoreError::Numeric {
            op: "gradcheck",
            msg: format!("at least one primitive exceeded {GRAD_TOLERANCE:.0e}"),
        }));
    }
    Ok(())
}

fn cmd_rerun(args: &RerunArgs) -> Result<(), CliError> {
    let manifest = load_manifest(&args.manifest).map_err(CliError::Usage)?;
    println!("re-running: wdjm {}", manifest.argv.join(" "));
    let mut argv = vec!["wdjm".to_string()];
    argv.extend(manifest.argv.iter().cloned());
    let cli = Cli::try_parse_from(&argv)
        .map_err(|e| CliError::Usage(format!("manifest argv: {e}")))?;
    dispatch(cli, manifest.argv.clone())?;
    let mut mismatches = Vec::new();
    for (path, want) in &manifest.outputs {
        let got = sha256_file(Path::new(path))?;
        if &got != want {
            mismatches.push(format!("{path}: {got} != {want}"));
        }
    }
    if !mismatches.is_empty() {
        return Err(CliError::HashMismatch(mismatches.join("; ")));
    }
    println!("all {} artifact hashes reproduced", manifest.outputs.len());
    Ok(())
}

fn dispatch(cli: Cli, argv: Vec<String>) -> Result<(), CliError> {
    match &cli.command {
        Command::Generate(a) => cmd_generate(a, argv),
        Command::Featurize(a) => cmd_featurize(a, argv),
        Command::Train(a) => cmd_train(a, argv),
        Command::Gridsearch(a) => cmd_gridsearch(a, argv),
        Command::Evaluate(a) => cmd_evaluate(a, argv),
        Command::Predict(a) => cmd_predict(a, argv),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Rerun(a) => cmd_rerun(a),
    }
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let argv: Vec<String> = std::env::args().skip(1).collect();
    let cli = Cli::parse();
    if let Err(e) = dispatch(cli, argv) {
        fail(e);
    }
}
