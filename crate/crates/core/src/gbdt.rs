//! Gradient boosted decision trees on the raw wide features.
//!
//! Stochastic gradient boosting with a multi-class softmax loss: each round
//! fits one regression tree per class to the softmax residuals of a seeded
//! subsample, using exact greedy variance-reduction splits (all midpoints
//! between distinct sorted values are candidates). Trees consume raw counts
//! directly; no one-hot encoding on this path.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureCatalog, WideFeatures};
use crate::rng::SeededRng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtConfig {
    pub max_depth: usize,
    pub n_estimators: usize,
    pub subsample: f64,
    pub shrinkage: f64,
    pub min_samples_leaf: usize,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        GbdtConfig {
            max_depth: 3,
            n_estimators: 50,
            subsample: 0.9,
            shrinkage: 0.1,
            min_samples_leaf: 5,
            seed: 1,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_depth == 0 {
            return Err(Error::Config("max_depth must be >= 1".into()));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return Err(Error::Config(format!(
                "subsample must be in (0,1], got {}",
                self.subsample
            )));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::Config("min_samples_leaf must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    Leaf {
        value: f64,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn predict(&self, row: &[f64]) -> f64 {
        match self {
            TreeNode::Leaf { value } => *value,
            TreeNode::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                if row[*feature] <= *threshold {
                    left.predict(row)
                } else {
                    right.predict(row)
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Split { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }

    /// First split's (feature, threshold), if the tree is not a stump leaf.
    pub fn root_split(&self) -> Option<(usize, f64)> {
        match self {
            TreeNode::Leaf { .. } => None,
            TreeNode::Split {
                feature, threshold, ..
            } => Some((*feature, *threshold)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtModel {
    /// Format marker so checkpoints are self-identifying JSON.
    pub format: String,
    pub num_classes: usize,
    pub num_features: usize,
    /// Smoothed log class priors.
    pub base_scores: Vec<f64>,
    /// `rounds[t][c]` is round `t`'s tree for class `c`; leaf values are
    /// raw and scaled by `config.shrinkage` at accumulation time.
    pub rounds: Vec<Vec<TreeNode>>,
    /// Full-training-set softmax log-loss after each round (index 0 is the
    /// base-score loss).
    pub train_loss: Vec<f64>,
    pub config: GbdtConfig,
    /// Extraction recipe, present when the model was fit on wide features.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub catalog: Option<FeatureCatalog>,
}

pub const GBDT_FORMAT: &str = "gbdt-v1";

/// Raw feature row for the tree path: continuous values then counts.
pub fn feature_row(wf: &WideFeatures) -> Vec<f64> {
    wf.x_c
        .iter()
        .copied()
        .chain(wf.counts.iter().map(|&c| c as f64))
        .collect()
}

fn softmax_row(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

fn log_loss(scores: &[Vec<f64>], labels: &[usize]) -> f64 {
    let mut total = 0.0;
    for (s, &y) in scores.iter().zip(labels) {
        let max = s.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let log_z = max + s.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        total += log_z - s[y];
    }
    total / labels.len() as f64
}

/// Largest Newton step a leaf may take.
const MAX_LEAF_VALUE: f64 = 8.0;

struct TreeFitter<'a> {
    features: &'a [Vec<f64>],
    residual: &'a [f64],
    /// `|r|(1-|r|)` Newton denominators per sample.
    hessian: &'a [f64],
    num_classes: usize,
    min_leaf: usize,
}

impl<'a> TreeFitter<'a> {
    fn leaf(&self, idx: &[usize]) -> TreeNode {
        let num: f64 = idx.iter().map(|&i| self.residual[i]).sum();
        let den: f64 = idx.iter().map(|&i| self.hessian[i]).sum();
        let k = self.num_classes as f64;
        let value = if den.abs() < 1e-12 {
            0.0
        } else {
            ((k - 1.0) / k * num / den).clamp(-MAX_LEAF_VALUE, MAX_LEAF_VALUE)
        };
        TreeNode::Leaf { value }
    }

    /// Best variance-reduction split over all features and midpoints.
    fn best_split(&self, idx: &[usize]) -> Option<(usize, f64, Vec<usize>, Vec<usize>)> {
        let n = idx.len();
        if n < 2 * self.min_leaf {
            return None;
        }
        let total_sum: f64 = idx.iter().map(|&i| self.residual[i]).sum();
        let base_score = total_sum * total_sum / n as f64;
        let n_features = self.features[idx[0]].len();
        let mut best: Option<(f64, usize, f64)> = None;
        let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
        for f in 0..n_features {
            pairs.clear();
            pairs.extend(idx.iter().map(|&i| (self.features[i][f], self.residual[i])));
            pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left_sum = 0.0;
            for pos in 0..n - 1 {
                left_sum += pairs[pos].1;
                let left_n = pos + 1;
                let right_n = n - left_n;
                if left_n < self.min_leaf || right_n < self.min_leaf {
                    continue;
                }
                // split only between distinct values
                if pairs[pos].0 == pairs[pos + 1].0 {
                    continue;
                }
                let right_sum = total_sum - left_sum;
                let gain = left_sum * left_sum / left_n as f64
                    + right_sum * right_sum / right_n as f64
                    - base_score;
                if best.is_none_or(|(bg, _, _)| gain > bg) {
                    let threshold = (pairs[pos].0 + pairs[pos + 1].0) / 2.0;
                    best = Some((gain, f, threshold));
                }
            }
        }
        let (gain, feature, threshold) = best?;
        if gain <= 0.0 {
            return None;
        }
        let (mut left, mut right) = (Vec::new(), Vec::new());
        for &i in idx {
            if self.features[i][feature] <= threshold {
                left.push(i);
            } else {
                right.push(i);
            }
        }
        Some((feature, threshold, left, right))
    }

    fn fit(&self, idx: &[usize], depth_left: usize) -> TreeNode {
        if depth_left == 0 {
            return self.leaf(idx);
        }
        match self.best_split(idx) {
            None => self.leaf(idx),
            Some((feature, threshold, left, right)) => TreeNode::Split {
                feature,
                threshold,
                left: Box::new(self.fit(&left, depth_left - 1)),
                right: Box::new(self.fit(&right, depth_left - 1)),
            },
        }
    }
}

/// Fit a K-output boosted ensemble.
pub fn fit_gbdt(
    features: &[Vec<f64>],
    labels: &[usize],
    num_classes: usize,
    cfg: &GbdtConfig,
) -> Result<GbdtModel> {
    cfg.validate()?;
    let m = features.len();
    if m < 2 {
        return Err(Error::Data(format!("need at least 2 samples, got {m}")));
    }
    if labels.len() != m {
        return Err(Error::Data(format!(
            "{m} feature rows vs {} labels",
            labels.len()
        )));
    }
    let num_features = features[0].len();
    if features.iter().any(|r| r.len() != num_features) {
        return Err(Error::Data("ragged feature matrix".into()));
    }
    for &y in labels {
        if y >= num_classes {
            return Err(Error::Label {
                label: y,
                num_classes,
            });
        }
    }

    let mut class_counts = vec![0usize; num_classes];
    for &y in labels {
        class_counts[y] += 1;
    }
    let base_scores: Vec<f64> = class_counts
        .iter()
        .map(|&c| ((c + 1) as f64 / (m + num_classes) as f64).ln())
        .collect();

    let mut scores: Vec<Vec<f64>> = vec![base_scores.clone(); m];
    let mut train_loss = vec![log_loss(&scores, labels)];
    let mut rng = SeededRng::new(cfg.seed).substream("gbdt-fit");
    let mut rounds = Vec::with_capacity(cfg.n_estimators);
    let mut pool: Vec<usize> = (0..m).collect();

    for _ in 0..cfg.n_estimators {
        rng.shuffle(&mut pool);
        let take = ((cfg.subsample * m as f64).round() as usize).clamp(1, m);
        let mut sub: Vec<usize> = pool[..take].to_vec();
        sub.sort_unstable();

        // residuals on the subsample at the current scores
        let probs: Vec<Vec<f64>> = sub.iter().map(|&i| softmax_row(&scores[i])).collect();
        let mut class_trees = Vec::with_capacity(num_classes);
        #[allow(clippy::needless_range_loop)]
        for c in 0..num_classes {
            let mut residual = vec![0.0f64; m];
            let mut hessian = vec![0.0f64; m];
            for (pos, &i) in sub.iter().enumerate() {
                let p = probs[pos][c];
                let y = if labels[i] == c { 1.0 } else { 0.0 };
                residual[i] = y - p;
                hessian[i] = p * (1.0 - p);
            }
            let fitter = TreeFitter {
                features,
                residual: &residual,
                hessian: &hessian,
                num_classes,
                min_leaf: cfg.min_samples_leaf,
            };
            let tree = fitter.fit(&sub, cfg.max_depth);
            debug_assert!(tree.depth() <= cfg.max_depth);
            class_trees.push(tree);
        }
        for (i, row) in features.iter().enumerate() {
            for (c, tree) in class_trees.iter().enumerate() {
                scores[i][c] += cfg.shrinkage * tree.predict(row);
            }
        }
        rounds.push(class_trees);
        train_loss.push(log_loss(&scores, labels));
    }

    Ok(GbdtModel {
        format: GBDT_FORMAT.to_string(),
        num_classes,
        num_features,
        base_scores,
        rounds,
        train_loss,
        config: cfg.clone(),
        catalog: None,
    })
}

/// Class probabilities for one feature row.
pub fn predict_gbdt(model: &GbdtModel, row: &[f64]) -> Result<Vec<f64>> {
    if row.len() != model.num_features {
        return Err(Error::Shape {
            op: "predict_gbdt",
            lhs: vec![row.len()],
            rhs: vec![model.num_features],
        });
    }
    let mut scores = model.base_scores.clone();
    for round in &model.rounds {
        for (c, tree) in round.iter().enumerate() {
            scores[c] += model.config.shrinkage * tree.predict(row);
        }
    }
    Ok(softmax_row(&scores))
}

pub fn predict_class(model: &GbdtModel, row: &[f64]) -> Result<usize> {
    let probs = predict_gbdt(model, row)?;
    let mut best = 0;
    for (i, p) in probs.iter().enumerate() {
        if *p > probs[best] {
            best = i;
        }
    }
    Ok(best)
}

pub fn save_gbdt_json(model: &GbdtModel) -> Result<String> {
    serde_json::to_string(model).map_err(|e| Error::Data(format!("gbdt serialize: {e}")))
}

pub fn load_gbdt_json(text: &str) -> Result<GbdtModel> {
    let model: GbdtModel =
        serde_json::from_str(text).map_err(|e| Error::Corrupted(format!("gbdt json: {e}")))?;
    if model.format != GBDT_FORMAT {
        return Err(Error::UnsupportedFormat(format!(
            "gbdt format {:?}",
            model.format
        )));
    }
    Ok(model)
}

// ---------------------------------------------------------------------------
// Grid search
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GbdtGridPoint {
    pub max_depth: usize,
    pub n_estimators: usize,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct GbdtGridOutcome {
    pub best_config: GbdtConfig,
    pub best_model: GbdtModel,
    pub best_val_accuracy: f64,
    pub points: Vec<GbdtGridPoint>,
}

/// Grid over depth × rounds with validation-accuracy selection; ties prefer
/// fewer rounds, then shallower trees.
///
/// Per depth the ensemble is fit once to the largest round count and scored
/// at every checkpoint; because the subsample stream advances one round at a
/// time, the prefix of a long fit is bit-identical to a short fit.
#[allow(clippy::too_many_arguments)]
pub fn grid_search_gbdt(
    train_features: &[Vec<f64>],
    train_labels: &[usize],
    val_features: &[Vec<f64>],
    val_labels: &[usize],
    num_classes: usize,
    base: &GbdtConfig,
    depth_grid: &[usize],
    rounds_grid: &[usize],
) -> Result<GbdtGridOutcome> {
    if depth_grid.is_empty() || rounds_grid.is_empty() {
        return Err(Error::Config("gbdt grid must be non-empty".into()));
    }
    let max_rounds = *rounds_grid.iter().max().unwrap();
    let mut points = Vec::new();
    let mut best: Option<(GbdtConfig, f64)> = None;
    let mut errors = Vec::new();

    for &depth in depth_grid {
        let cfg = GbdtConfig {
            max_depth: depth,
            n_estimators: max_rounds,
            ..base.clone()
        };
        let model = match fit_gbdt(train_features, train_labels, num_classes, &cfg) {
            Ok(m) => m,
            Err(e) => {
                log::warn!("gbdt grid depth {depth} failed: {e}");
                errors.push(e.to_string());
                continue;
            }
        };
        // incremental validation scores per checkpoint
        let mut scores: Vec<Vec<f64>> = vec![model.base_scores.clone(); val_features.len()];
        let mut checkpoints = rounds_grid.to_vec();
        checkpoints.sort_unstable();
        let mut next = 0usize;
        for (round_idx, round) in model.rounds.iter().enumerate() {
            for (row, score) in val_features.iter().zip(scores.iter_mut()) {
                for (c, tree) in round.iter().enumerate() {
                    score[c] += model.config.shrinkage * tree.predict(row);
                }
            }
            while next < checkpoints.len() && checkpoints[next] == round_idx + 1 {
                let correct = scores
                    .iter()
                    .zip(val_labels)
                    .filter(|(s, &y)| {
                        let mut b = 0;
                        for (i, v) in s.iter().enumerate() {
                            if *v > s[b] {
                                b = i;
                            }
                        }
                        b == y
                    })
                    .count();
                let acc = correct as f64 / val_labels.len() as f64;
                points.push(GbdtGridPoint {
                    max_depth: depth,
                    n_estimators: checkpoints[next],
                    val_accuracy: acc,
                });
                next += 1;
            }
        }
    }

    for p in &points {
        let better = match &best {
            None => true,
            Some((bc, ba)) => {
                p.val_accuracy > *ba
                    || (p.val_accuracy == *ba
                        && (p.n_estimators < bc.n_estimators
                            || (p.n_estimators == bc.n_estimators && p.max_depth < bc.max_depth)))
            }
        };
        if better {
            best = Some((
                GbdtConfig {
                    max_depth: p.max_depth,
                    n_estimators: p.n_estimators,
                    ..base.clone()
                },
                p.val_accuracy,
            ));
        }
    }

    match best {
        None => Err(Error::Config(format!(
            "all gbdt grid points failed: {}",
            errors.join("; ")
        ))),
        Some((cfg, acc)) => {
            let model = fit_gbdt(train_features, train_labels, num_classes, &cfg)?;
            Ok(GbdtGridOutcome {
                best_config: cfg,
                best_model: model,
                best_val_accuracy: acc,
                points,
            })
        }
    }
}
