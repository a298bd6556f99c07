//! Confusion-matrix evaluation: accuracy, per-class F1, micro-F1, macro-F1.
//!
//! Zero-denominator convention: a class with no true and no predicted
//! instances scores 0 for precision/recall/F1 and still counts in the macro
//! mean. The convention is recorded in every report.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Row-major counts with rows = true class, columns = predicted class.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub num_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let k = rows.len();
        if rows.iter().any(|r| r.len() != k) {
            return Err(Error::Data("confusion matrix must be square".into()));
        }
        Ok(ConfusionMatrix {
            num_classes: k,
            counts: rows.iter().flatten().copied().collect(),
        })
    }

    pub fn count(&self, true_class: usize, pred_class: usize) -> u64 {
        self.counts[true_class * self.num_classes + pred_class]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes).map(|i| self.count(i, i)).sum()
    }

    fn row_sum(&self, t: usize) -> u64 {
        (0..self.num_classes).map(|p| self.count(t, p)).sum()
    }

    fn col_sum(&self, p: usize) -> u64 {
        (0..self.num_classes).map(|t| self.count(t, p)).sum()
    }
}

/// Tally predictions against labels into a `K×K` matrix.
pub fn confusion(preds: &[usize], labels: &[usize], num_classes: usize) -> Result<ConfusionMatrix> {
    if preds.len() != labels.len() {
        return Err(Error::Data(format!(
            "confusion: {} predictions vs {} labels",
            preds.len(),
            labels.len()
        )));
    }
    let mut cm = ConfusionMatrix::new(num_classes);
    for (&p, &t) in preds.iter().zip(labels.iter()) {
        if p >= num_classes || t >= num_classes {
            return Err(Error::Label {
                label: p.max(t),
                num_classes,
            });
        }
        cm.counts[t * num_classes + p] += 1;
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// One model's evaluation on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub model_name: String,
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    pub confusion: ConfusionMatrix,
    pub n_samples: u64,
    /// Zero-denominator convention used for per-class scores.
    pub zero_rule: String,
}

fn safe_div(num: f64, den: f64) -> f64 {
    if den == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn f1(p: f64, r: f64) -> f64 {
    safe_div(2.0 * p * r, p + r)
}

/// Derive accuracy, micro/macro F1 and per-class scores from a matrix.
pub fn compute_metrics(model_name: &str, cm: &ConfusionMatrix) -> Result<EvalReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Data("empty confusion matrix".into()));
    }
    let k = cm.num_classes;
    let mut per_class = Vec::with_capacity(k);
    let (mut tp_pool, mut fp_pool, mut fn_pool) = (0u64, 0u64, 0u64);
    for c in 0..k {
        let tp = cm.count(c, c);
        let fp = cm.col_sum(c) - tp;
        let fn_ = cm.row_sum(c) - tp;
        tp_pool += tp;
        fp_pool += fp;
        fn_pool += fn_;
        let precision = safe_div(tp as f64, (tp + fp) as f64);
        let recall = safe_div(tp as f64, (tp + fn_) as f64);
        per_class.push(ClassMetrics {
            precision,
            recall,
            f1: f1(precision, recall),
        });
    }
    let micro_p = safe_div(tp_pool as f64, (tp_pool + fp_pool) as f64);
    let micro_r = safe_div(tp_pool as f64, (tp_pool + fn_pool) as f64);
    Ok(EvalReport {
        model_name: model_name.to_string(),
        accuracy: cm.trace() as f64 / total as f64,
        micro_f1: f1(micro_p, micro_r),
        macro_f1: per_class.iter().map(|m| m.f1).sum::<f64>() / k as f64,
        per_class,
        confusion: cm.clone(),
        n_samples: total,
        zero_rule: "empty-class scores 0 and counts in macro mean".to_string(),
    })
}

/// Round to 3 decimals, halves away from zero.
fn round3(x: f64) -> f64 {
    (x * 1000.0).round() / 1000.0
}

/// Plain-text table with one row per model and three metric columns.
pub fn render_table(reports: &[EvalReport]) -> String {
    let name_w = reports
        .iter()
        .map(|r| r.model_name.len())
        .max()
        .unwrap_or(10)
        .max("Model Name".len());
    let mut out = String::new();
    out.push_str(&format!(
        "{:<name_w$}  {:>8}  {:>8}  {:>8}\n",
        "Model Name", "Accuracy", "micro-F1", "macro-F1"
    ));
    out.push_str(&format!("{}\n", "-".repeat(name_w + 2 + 3 * 10)));
    for r in reports {
        out.push_str(&format!(
            "{:<name_w$}  {:>8.3}  {:>8.3}  {:>8.3}\n",
            r.model_name,
            round3(r.accuracy),
            round3(r.micro_f1),
            round3(r.macro_f1)
        ));
    }
    out
}
