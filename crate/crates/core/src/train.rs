//! Mini-batch cross-entropy training with validation-accuracy selection.
//!
//! One optimizer (adaptive moments with bias correction), seeded shuffling,
//! early stopping on validation accuracy, and a hidden-size grid search.
//! In deterministic mode gradient reduction is single-threaded; otherwise
//! per-sample gradients are accumulated in fixed-size chunks so the result
//! is identical regardless of thread count.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Dataset;
use crate::embed::Embedder;
use crate::error::{Error, Result};
use crate::features::{extract, WideFeatures};
use crate::metrics::{compute_metrics, confusion, EvalReport};
use crate::model::{
    backward_cached, forward_cached, fuse_predict, ModelMode, WideDeepConfig, WideDeepGrads,
    WideDeepModel,
};
use crate::ops::softmax_xent;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

/// Fixed accumulation chunk so parallel reduction order never depends on
/// the thread count.
const GRAD_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without validation improvement before stopping.
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
    /// Hidden sizes tried by [`grid_search`].
    pub hidden_grid: Vec<usize>,
    pub seed: u64,
    /// Force single-threaded gradient reduction and zeroed wall-clock in
    /// reports, for byte-reproducible artifacts.
    pub deterministic: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 256,
            max_epochs: 50,
            patience: 5,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
            hidden_grid: vec![64, 128, 256],
            seed: 1,
            deterministic: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.patience >= self.max_epochs {
            return Err(Error::Config(format!(
                "patience {} must be < max_epochs {}",
                self.patience, self.max_epochs
            )));
        }
        if self.hidden_grid.is_empty() {
            return Err(Error::Config("hidden_grid must be non-empty".into()));
        }
        Ok(())
    }

    /// Parse a TOML override file on top of the defaults.
    pub fn from_toml(text: &str) -> Result<TrainConfig> {
        #[derive(Deserialize)]
        struct Partial {
            batch_size: Option<usize>,
            max_epochs: Option<usize>,
            patience: Option<usize>,
            learning_rate: Option<f64>,
            beta1: Option<f64>,
            beta2: Option<f64>,
            epsilon: Option<f64>,
            weight_decay: Option<f64>,
            hidden_grid: Option<Vec<usize>>,
            seed: Option<u64>,
            deterministic: Option<bool>,
        }
        let p: Partial =
            toml::from_str(text).map_err(|e| Error::Config(format!("train config: {e}")))?;
        let mut cfg = TrainConfig::default();
        macro_rules! apply {
            ($($field:ident),*) => {
                $(if let Some(v) = p.$field { cfg.$field = v; })*
            };
        }
        apply!(
            batch_size,
            max_epochs,
            patience,
            learning_rate,
            beta1,
            beta2,
            epsilon,
            weight_decay,
            hidden_grid,
            seed,
            deterministic
        );
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: ModelMode,
    pub lstm_hidden: usize,
    pub num_parameters: usize,
    pub train_config: TrainConfig,
    pub epochs: Vec<EpochStats>,
    /// 1-based epoch whose parameters were kept (earliest of the ties).
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    /// Loss of the very first batch at fresh initialization.
    pub first_batch_loss: f64,
    pub wall_clock_s: f64,
    /// Test metrics, filled by the caller after model selection.
    pub test: Option<EvalReport>,
}

// ---------------------------------------------------------------------------
// Optimizer
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamHyper {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub weight_decay: f64,
}

impl From<&TrainConfig> for AdamHyper {
    fn from(c: &TrainConfig) -> Self {
        AdamHyper {
            learning_rate: c.learning_rate,
            beta1: c.beta1,
            beta2: c.beta2,
            epsilon: c.epsilon,
            weight_decay: c.weight_decay,
        }
    }
}

/// First/second moment buffers, index-aligned with the parameter list.
#[derive(Debug, Clone)]
pub struct AdamState {
    m: Vec<Tensor>,
    v: Vec<Tensor>,
    t: u64,
}

impl AdamState {
    pub fn new(params: &[&Tensor]) -> Self {
        AdamState {
            m: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            v: params.iter().map(|p| Tensor::zeros(p.shape())).collect(),
            t: 0,
        }
    }
}

/// One adaptive-moment update with bias correction.
pub fn optimizer_step(
    params: &mut [&mut Tensor],
    grads: &[&Tensor],
    state: &mut AdamState,
    hyper: &AdamHyper,
) {
    assert_eq!(params.len(), grads.len());
    assert_eq!(params.len(), state.m.len());
    state.t += 1;
    let t = state.t as f64;
    let bc1 = 1.0 - hyper.beta1.powf(t);
    let bc2 = 1.0 - hyper.beta2.powf(t);
    for ((p, g), (m, v)) in params
        .iter_mut()
        .zip(grads.iter())
        .zip(state.m.iter_mut().zip(state.v.iter_mut()))
    {
        let pd = p.data_mut();
        let gd = g.data();
        let md = m.data_mut();
        let vd = v.data_mut();
        for i in 0..pd.len() {
            let grad = gd[i] + hyper.weight_decay * pd[i];
            md[i] = hyper.beta1 * md[i] + (1.0 - hyper.beta1) * grad;
            vd[i] = hyper.beta2 * vd[i] + (1.0 - hyper.beta2) * grad * grad;
            let m_hat = md[i] / bc1;
            let v_hat = vd[i] / bc2;
            pd[i] -= hyper.learning_rate * m_hat / (v_hat.sqrt() + hyper.epsilon);
        }
    }
}

// ---------------------------------------------------------------------------
// Featurization cache
// ---------------------------------------------------------------------------

struct SampleInputs {
    wf: Option<WideFeatures>,
    embedded: Option<Tensor>,
    label: usize,
}

fn prepare_inputs(
    ds: &Dataset,
    model_config: &WideDeepConfig,
    embedder: &Embedder,
    parallel: bool,
) -> Result<Vec<SampleInputs>> {
    let needs_wide = model_config.mode != ModelMode::DeepOnly;
    let needs_deep = model_config.mode != ModelMode::WideOnly;
    let build = |s: &crate::corpus::QuestionSample| -> Result<SampleInputs> {
        Ok(SampleInputs {
            wf: if needs_wide {
                Some(extract(s, &model_config.catalog)?)
            } else {
                None
            },
            embedded: if needs_deep {
                Some(embedder.embed_sample(s)?)
            } else {
                None
            },
            label: s.label,
        })
    };
    if parallel {
        ds.samples.par_iter().map(build).collect()
    } else {
        ds.samples.iter().map(build).collect()
    }
}

/// Train-split mean and population standard deviation per continuous feature.
fn normalization_stats(inputs: &[SampleInputs], n_cont: usize) -> (Vec<f64>, Vec<f64>) {
    let mut mean = vec![0.0f64; n_cont];
    let mut count = 0usize;
    for s in inputs {
        if let Some(wf) = &s.wf {
            for (m, v) in mean.iter_mut().zip(&wf.x_c) {
                *m += v;
            }
            count += 1;
        }
    }
    if count == 0 {
        return (vec![0.0; n_cont], vec![1.0; n_cont]);
    }
    mean.iter_mut().for_each(|m| *m /= count as f64);
    let mut var = vec![0.0f64; n_cont];
    for s in inputs {
        if let Some(wf) = &s.wf {
            for ((sv, v), m) in var.iter_mut().zip(&wf.x_c).zip(&mean) {
                *sv += (v - m) * (v - m);
            }
        }
    }
    let std = var.iter().map(|v| (v / count as f64).sqrt()).collect();
    (mean, std)
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

fn accuracy_on(model: &WideDeepModel, inputs: &[SampleInputs], parallel: bool) -> Result<f64> {
    let eval = |s: &SampleInputs| -> Result<usize> {
        let (logits, _) = forward_cached(model, s.wf.as_ref(), s.embedded.as_ref())?;
        Ok(argmax(logits.row(0)))
    };
    let preds: Vec<usize> = if parallel {
        inputs.par_iter().map(eval).collect::<Result<_>>()?
    } else {
        inputs.iter().map(eval).collect::<Result<_>>()?
    };
    let correct = preds
        .iter()
        .zip(inputs.iter())
        .filter(|(p, s)| **p == s.label)
        .count();
    Ok(correct as f64 / inputs.len() as f64)
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

/// Train one model; returns the parameters of the best validation epoch.
pub fn train(
    train_ds: &Dataset,
    val_ds: &Dataset,
    model_config: &WideDeepConfig,
    train_config: &TrainConfig,
) -> Result<(WideDeepModel, TrainReport)> {
    train_with_progress(train_ds, val_ds, model_config, train_config, &mut |_| {})
}

/// [`train`] with a per-epoch callback (the CLI prints progress lines).
pub fn train_with_progress(
    train_ds: &Dataset,
    val_ds: &Dataset,
    model_config: &WideDeepConfig,
    train_config: &TrainConfig,
    progress: &mut dyn FnMut(&EpochStats),
) -> Result<(WideDeepModel, TrainReport)> {
    train_config.validate()?;
    model_config.validate()?;
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(Error::EmptyDataset("train and val must be non-empty".into()));
    }
    if train_ds.num_classes != model_config.num_classes {
        return Err(Error::ClassMismatch {
            left: train_ds.num_classes,
            right: model_config.num_classes,
        });
    }
    if val_ds.num_classes != train_ds.num_classes {
        return Err(Error::ClassMismatch {
            left: val_ds.num_classes,
            right: train_ds.num_classes,
        });
    }

    let started = Instant::now();
    let parallel = !train_config.deterministic;
    let embedder = Embedder::new(model_config.embedder.clone())?;
    let train_inputs = prepare_inputs(train_ds, model_config, &embedder, parallel)?;
    let val_inputs = prepare_inputs(val_ds, model_config, &embedder, parallel)?;

    let mut model = WideDeepModel::init(model_config.clone(), train_config.seed)?;
    let n_cont = model_config.catalog.continuous.len();
    let (mean, std) = normalization_stats(&train_inputs, n_cont);
    model.set_normalization(mean, std);

    let hyper = AdamHyper::from(train_config);
    let mut adam = AdamState::new(&model.params());
    let mut shuffle_rng = SeededRng::new(train_config.seed).substream("train-shuffle");

    let n = train_inputs.len();
    let mut order: Vec<usize> = (0..n).collect();
    let mut epochs: Vec<EpochStats> = Vec::new();
    let mut best_val = f64::NEG_INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Vec<Tensor> = Vec::new();
    let mut first_batch_loss = f64::NAN;

    'epochs: for epoch in 1..=train_config.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut loss_sum = 0.0f64;
        for (batch_no, batch) in order.chunks(train_config.batch_size).enumerate() {
            let step = |&i: &usize| -> Result<(Tensor, crate::model::ForwardCache)> {
                let s = &train_inputs[i];
                forward_cached(&model, s.wf.as_ref(), s.embedded.as_ref())
            };
            let outputs: Vec<(Tensor, crate::model::ForwardCache)> = if parallel {
                batch.par_iter().map(step).collect::<Result<_>>()?
            } else {
                batch.iter().map(step).collect::<Result<_>>()?
            };

            let k = model_config.num_classes;
            let mut logits = Tensor::zeros(&[batch.len(), k]);
            let mut labels = Vec::with_capacity(batch.len());
            for (row, (&i, (l, _))) in batch.iter().zip(outputs.iter()).enumerate() {
                logits.row_mut(row).copy_from_slice(l.row(0));
                labels.push(train_inputs[i].label);
            }
            let (loss, d_logits) = softmax_xent(&logits, &labels).map_err(|_| Error::Diverged {
                epoch,
                batch: batch_no,
            })?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch: batch_no,
                });
            }
            if first_batch_loss.is_nan() {
                first_batch_loss = loss;
            }
            loss_sum += loss * batch.len() as f64;

            let rows: Vec<(usize, &crate::model::ForwardCache)> = outputs
                .iter()
                .enumerate()
                .map(|(row, (_, cache))| (row, cache))
                .collect();
            let backward_chunk = |chunk: &[(usize, &crate::model::ForwardCache)]| {
                let mut local = WideDeepGrads::zeros_like(&model);
                for (row, cache) in chunk {
                    let d_row = Tensor::from_vec(&[1, k], d_logits.row(*row).to_vec())
                        .expect("row shape");
                    backward_cached(&model, cache, &d_row, &mut local);
                }
                local
            };
            let mut grads = WideDeepGrads::zeros_like(&model);
            if parallel {
                let partials: Vec<WideDeepGrads> = rows
                    .par_chunks(GRAD_CHUNK)
                    .map(backward_chunk)
                    .collect();
                for p in &partials {
                    grads.add_assign(p);
                }
            } else {
                for chunk in rows.chunks(GRAD_CHUNK) {
                    grads.add_assign(&backward_chunk(chunk));
                }
            }

            let grad_tensors = grads.tensors();
            let mut params = model.params_mut();
            optimizer_step(&mut params, &grad_tensors, &mut adam, &hyper);
        }

        let train_loss = loss_sum / n as f64;
        let val_accuracy = accuracy_on(&model, &val_inputs, parallel)?;
        let stats = EpochStats {
            epoch,
            train_loss,
            val_accuracy,
        };
        progress(&stats);
        epochs.push(stats);
        log::info!("epoch {epoch}: train_loss {train_loss:.6} val_acc {val_accuracy:.4}");

        if val_accuracy > best_val {
            best_val = val_accuracy;
            best_epoch = epoch;
            best_params = model.params().into_iter().cloned().collect();
        } else if epoch - best_epoch >= train_config.patience {
            break 'epochs;
        }
    }

    model.set_params(&best_params);
    let wall_clock_s = if train_config.deterministic {
        0.0
    } else {
        started.elapsed().as_secs_f64()
    };
    let report = TrainReport {
        mode: model_config.mode,
        lstm_hidden: model_config.lstm_hidden,
        num_parameters: model.num_parameters(),
        train_config: train_config.clone(),
        epochs,
        best_epoch,
        best_val_accuracy: best_val,
        first_batch_loss,
        wall_clock_s,
        test: None,
    };
    Ok((model, report))
}

/// Evaluate a trained model on a dataset.
pub fn evaluate_model(
    model: &WideDeepModel,
    ds: &Dataset,
    model_name: &str,
) -> Result<EvalReport> {
    if ds.num_classes != model.config.num_classes {
        return Err(Error::ClassMismatch {
            left: ds.num_classes,
            right: model.config.num_classes,
        });
    }
    let embedder = Embedder::new(model.config.embedder.clone())?;
    let preds: Vec<usize> = ds
        .samples
        .par_iter()
        .map(|s| fuse_predict(model, &embedder, s).map(|p| argmax(&p)))
        .collect::<Result<_>>()?;
    let cm = confusion(&preds, &ds.labels(), ds.num_classes)?;
    compute_metrics(model_name, &cm)
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridPoint {
    pub lstm_hidden: usize,
    pub val_accuracy: Option<f64>,
    pub report: Option<TrainReport>,
    pub error: Option<String>,
}

pub struct GridOutcome {
    pub best_hidden: usize,
    pub best_model: WideDeepModel,
    pub best_report: TrainReport,
    pub points: Vec<GridPoint>,
}

/// Train one model per hidden size with the same seed; select by validation
/// accuracy, ties broken by smaller hidden size then earlier grid order.
pub fn grid_search(
    train_ds: &Dataset,
    val_ds: &Dataset,
    model_config: &WideDeepConfig,
    train_config: &TrainConfig,
) -> Result<GridOutcome> {
    train_config.validate()?;
    let mut points = Vec::new();
    let mut best: Option<(usize, WideDeepModel, TrainReport)> = None;
    for &hidden in &train_config.hidden_grid {
        let cfg = model_config.clone().with_lstm_hidden(hidden);
        match train(train_ds, val_ds, &cfg, train_config) {
            Ok((model, report)) => {
                let acc = report.best_val_accuracy;
                points.push(GridPoint {
                    lstm_hidden: hidden,
                    val_accuracy: Some(acc),
                    report: Some(report.clone()),
                    error: None,
                });
                let replace = match &best {
                    None => true,
                    Some((bh, _, br)) => {
                        acc > br.best_val_accuracy
                            || (acc == br.best_val_accuracy && hidden < *bh)
                    }
                };
                if replace {
                    best = Some((hidden, model, report));
                }
            }
            Err(e) => {
                log::warn!("grid point H={hidden} failed: {e}");
                points.push(GridPoint {
                    lstm_hidden: hidden,
                    val_accuracy: None,
                    report: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }
    match best {
        Some((best_hidden, best_model, best_report)) => Ok(GridOutcome {
            best_hidden,
            best_model,
            best_report,
            points,
        }),
        None => Err(Error::Config("all grid points failed".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{QuestionSample, Speaker, Utterance};
    use crate::embed::EmbedderSpec;

    fn tiny_config(mode: ModelMode, k: usize) -> WideDeepConfig {
        let mut cfg = WideDeepConfig::new(k, mode).with_lstm_hidden(4);
        cfg.d_proj = 4;
        cfg.wide_hidden = 8;
        cfg.deep_hidden = vec![8, 6, 4];
        cfg.embedder = EmbedderSpec::hashed(8);
        cfg
    }

    fn toy_dataset(n: usize, k: usize) -> Dataset {
        // word count and a marker token separate the classes
        let samples: Vec<QuestionSample> = (0..n)
            .map(|i| {
                let label = i % k;
                let text = format!("answer mark{label} {}", "word ".repeat(label + 1));
                QuestionSample::new(
                    format!("t{i}"),
                    label,
                    vec![
                        Utterance {
                            speaker: Speaker::Teacher,
                            text: "what is this?".into(),
                            start_s: 0.0,
                            end_s: 2.0 + label as f64,
                        },
                        Utterance {
                            speaker: Speaker::Student,
                            text,
                            start_s: 2.5 + label as f64,
                            end_s: 4.0 + 2.0 * label as f64,
                        },
                    ],
                )
                .unwrap()
            })
            .collect();
        Dataset::new(samples, k).unwrap()
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut p = Tensor::from_vec(&[2, 2], vec![1.0, -2.0, 3.0, 4.0]).unwrap();
        let g = Tensor::zeros(&[2, 2]);
        let before = p.clone();
        let mut state = AdamState::new(&[&p]);
        let hyper = AdamHyper::from(&TrainConfig::default());
        optimizer_step(&mut [&mut p], &[&g], &mut state, &hyper);
        assert!(p.bits_eq(&before));
    }

    #[test]
    fn constant_gradient_step_approaches_learning_rate() {
        let mut p = Tensor::vector(&[0.0]);
        let g = Tensor::vector(&[0.37]);
        let hyper = AdamHyper {
            learning_rate: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        };
        let mut state = AdamState::new(&[&p]);
        let mut prev = p.data()[0];
        let mut last_step = 0.0;
        for _ in 0..2000 {
            optimizer_step(&mut [&mut p], &[&g], &mut state, &hyper);
            last_step = (p.data()[0] - prev).abs();
            prev = p.data()[0];
        }
        assert!(
            (last_step - hyper.learning_rate).abs() < 0.01 * hyper.learning_rate,
            "step {last_step} vs lr {}",
            hyper.learning_rate
        );
    }

    #[test]
    fn quadratic_bowl_converges_to_known_optimum() {
        // f(x, y) = 0.5 (x-0.3)^2 + 2 (y+0.7)^2, optimum (0.3, -0.7)
        let target = [0.3, -0.7];
        let mut p = Tensor::vector(&[1.0, 1.0]);
        let hyper = AdamHyper {
            learning_rate: 0.05,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            weight_decay: 0.0,
        };
        let mut state = AdamState::new(&[&p]);
        for _ in 0..200 {
            let g = Tensor::vector(&[p.data()[0] - target[0], 4.0 * (p.data()[1] - target[1])]);
            optimizer_step(&mut [&mut p], &[&g], &mut state, &hyper);
        }
        let dist =
            ((p.data()[0] - target[0]).powi(2) + (p.data()[1] - target[1]).powi(2)).sqrt();
        assert!(dist < 1e-3, "distance to optimum {dist}");
    }

    #[test]
    fn zero_learning_rate_changes_nothing() {
        let ds = toy_dataset(12, 2);
        let cfg = tiny_config(ModelMode::WideOnly, 2);
        let mut tc = TrainConfig {
            learning_rate: 0.0,
            max_epochs: 3,
            patience: 2,
            batch_size: 4,
            deterministic: true,
            ..TrainConfig::default()
        };
        tc.seed = 7;
        let (model, report) = train(&ds, &ds, &cfg, &tc).unwrap();
        let fresh = WideDeepModel::init(cfg, tc.seed).unwrap();
        for (a, b) in model.params().iter().zip(fresh.params()) {
            assert!(a.bits_eq(b));
        }
        let losses: Vec<f64> = report.epochs.iter().map(|e| e.train_loss).collect();
        for w in losses.windows(2) {
            assert!((w[0] - w[1]).abs() < 1e-12, "loss drifted: {losses:?}");
        }
    }

    #[test]
    fn single_sample_is_memorized() {
        let ds = toy_dataset(1, 2);
        let cfg = tiny_config(ModelMode::WideDeep, 2);
        let tc = TrainConfig {
            learning_rate: 0.02,
            max_epochs: 400,
            patience: 399,
            batch_size: 1,
            deterministic: true,
            seed: 3,
            ..TrainConfig::default()
        };
        let (_, report) = train(&ds, &ds, &cfg, &tc).unwrap();
        let final_loss = report.epochs.last().unwrap().train_loss;
        assert!(final_loss < 1e-3, "final loss {final_loss}");
    }

    #[test]
    fn first_batch_loss_is_near_ln_k() {
        for k in [2usize, 3] {
            let ds = toy_dataset(4 * k, k);
            let cfg = tiny_config(ModelMode::WideDeep, k);
            let tc = TrainConfig {
                max_epochs: 2,
                patience: 1,
                batch_size: 4 * k,
                deterministic: true,
                seed: 11,
                ..TrainConfig::default()
            };
            let (_, report) = train(&ds, &ds, &cfg, &tc).unwrap();
            let lnk = (k as f64).ln();
            assert!(
                (report.first_batch_loss - lnk).abs() < 0.1 * lnk,
                "K={k}: first batch loss {} vs ln K {lnk}",
                report.first_batch_loss
            );
        }
    }

    #[test]
    fn training_is_bit_reproducible_in_deterministic_mode() {
        let ds = toy_dataset(16, 2);
        let cfg = tiny_config(ModelMode::WideDeep, 2);
        let tc = TrainConfig {
            max_epochs: 4,
            patience: 3,
            batch_size: 8,
            deterministic: true,
            seed: 5,
            ..TrainConfig::default()
        };
        let (m1, r1) = train(&ds, &ds, &cfg, &tc).unwrap();
        let (m2, r2) = train(&ds, &ds, &cfg, &tc).unwrap();
        assert_eq!(
            crate::model::save_model_bytes(&m1).unwrap(),
            crate::model::save_model_bytes(&m2).unwrap()
        );
        assert_eq!(
            serde_json::to_string(&r1).unwrap(),
            serde_json::to_string(&r2).unwrap()
        );
    }

    #[test]
    fn best_epoch_has_max_val_accuracy_and_early_stop_holds() {
        let ds = toy_dataset(24, 2);
        let cfg = tiny_config(ModelMode::WideOnly, 2);
        let tc = TrainConfig {
            max_epochs: 30,
            patience: 3,
            batch_size: 8,
            learning_rate: 0.01,
            deterministic: true,
            seed: 13,
            ..TrainConfig::default()
        };
        let (model, report) = train(&ds, &ds, &cfg, &tc).unwrap();
        let max_acc = report
            .epochs
            .iter()
            .map(|e| e.val_accuracy)
            .fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(report.best_val_accuracy, max_acc);
        let first_best = report
            .epochs
            .iter()
            .find(|e| e.val_accuracy == max_acc)
            .unwrap();
        assert_eq!(report.best_epoch, first_best.epoch);
        let last_epoch = report.epochs.last().unwrap().epoch;
        assert!(last_epoch <= report.best_epoch + tc.patience);
        // returned model reproduces the reported validation accuracy
        let eval = evaluate_model(&model, &ds, "check").unwrap();
        assert!((eval.accuracy - report.best_val_accuracy).abs() < 1e-12);
    }

    #[test]
    fn k_mismatch_is_rejected() {
        let ds2 = toy_dataset(8, 2);
        let ds3 = toy_dataset(9, 3);
        let cfg = tiny_config(ModelMode::WideOnly, 2);
        let tc = TrainConfig {
            max_epochs: 2,
            patience: 1,
            ..TrainConfig::default()
        };
        assert!(matches!(
            train(&ds3, &ds3, &cfg, &tc),
            Err(Error::ClassMismatch { .. })
        ));
        assert!(matches!(
            train(&ds2, &ds3, &cfg, &tc),
            Err(Error::ClassMismatch { .. })
        ));
    }

    #[test]
    fn singleton_grid_equals_plain_train() {
        let ds = toy_dataset(12, 2);
        let cfg = tiny_config(ModelMode::WideOnly, 2);
        let tc = TrainConfig {
            max_epochs: 3,
            patience: 2,
            batch_size: 6,
            hidden_grid: vec![4],
            deterministic: true,
            seed: 2,
            ..TrainConfig::default()
        };
        let outcome = grid_search(&ds, &ds, &cfg, &tc).unwrap();
        let (direct, _) = train(&ds, &ds, &cfg.clone().with_lstm_hidden(4), &tc).unwrap();
        assert_eq!(outcome.best_hidden, 4);
        assert_eq!(
            crate::model::save_model_bytes(&outcome.best_model).unwrap(),
            crate::model::save_model_bytes(&direct).unwrap()
        );
    }

    #[test]
    fn grid_selection_matches_rescan_of_reports() {
        let ds = toy_dataset(18, 2);
        let cfg = tiny_config(ModelMode::WideOnly, 2);
        let tc = TrainConfig {
            max_epochs: 3,
            patience: 2,
            batch_size: 6,
            hidden_grid: vec![2, 4, 6],
            deterministic: true,
            seed: 4,
            ..TrainConfig::default()
        };
        let outcome = grid_search(&ds, &ds, &cfg, &tc).unwrap();
        assert_eq!(outcome.points.len(), 3);
        // brute-force re-scan with the same tie rule
        let mut want = (0usize, f64::NEG_INFINITY);
        for p in &outcome.points {
            let acc = p.val_accuracy.unwrap();
            if acc > want.1 || (acc == want.1 && p.lstm_hidden < want.0) {
                want = (p.lstm_hidden, acc);
            }
        }
        assert_eq!(outcome.best_hidden, want.0);
        assert_eq!(outcome.best_report.best_val_accuracy, want.1);
    }
}
