use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassScores {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub num_known: usize,
    pub num_samples: usize,
    pub accuracy: f64,
    pub macro_f1_all: f64,
    pub macro_f1_known: f64,
    pub f1_open: f64,
    pub recall_open: f64,
    pub weighted_f1: f64,
    /// Accuracy of the K-way classifier on known-class samples; needs the
    /// model's logits, so it is absent when computed from predictions alone.
    pub acc_kok: Option<f64>,
    pub per_class: Vec<ClassScores>,
    /// Rows are gold classes, columns predicted classes, both `1..=K+1`.
    pub confusion: Vec<Vec<usize>>,
    pub class_names: Vec<String>,
}

impl MetricsReport {
    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_known + 1 {
            return Err(Error::Shape(format!(
                "{} class names for {} classes",
                names.len(),
                self.num_known + 1
            )));
        }
        self.class_names = names;
        Ok(self)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Per-class and aggregate scores over classes `1..=K+1`. Undefined
/// ratios (0/0) count as 0, and classes without support still enter the
/// macro averages.
pub fn compute_metrics(preds: &[usize], golds: &[usize], num_known: usize) -> Result<MetricsReport> {
    if preds.len() != golds.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} gold labels",
            preds.len(),
            golds.len()
        )));
    }
    if golds.is_empty() {
        return Err(Error::Empty("no samples to score".into()));
    }
    let n = num_known + 1;
    let mut confusion = vec![vec![0usize; n]; n];
    for (&p, &g) in preds.iter().zip(golds) {
        for label in [p, g] {
            if label == 0 || label > n {
                return Err(Error::invalid(format!("label {label} outside 1..={n}")));
            }
        }
        confusion[g - 1][p - 1] += 1;
    }

    let per_class: Vec<ClassScores> = (0..n)
        .map(|c| {
            let tp = confusion[c][c];
            let support: usize = confusion[c].iter().sum();
            let predicted: usize = confusion.iter().map(|row| row[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                class: c + 1,
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();

    let total = golds.len();
    let correct: usize = (0..n).map(|c| confusion[c][c]).sum();
    let mean = |scores: &[ClassScores]| scores.iter().map(|s| s.f1).sum::<f64>() / scores.len() as f64;
    let weighted_f1 = per_class.iter().map(|s| s.f1 * s.support as f64).sum::<f64>() / total as f64;
    let open = &per_class[num_known];
    Ok(MetricsReport {
        num_known,
        num_samples: total,
        accuracy: ratio(correct, total),
        macro_f1_all: mean(&per_class),
        macro_f1_known: if num_known == 0 { 0.0 } else { mean(&per_class[..num_known]) },
        f1_open: open.f1,
        recall_open: open.recall,
        weighted_f1,
        acc_kok: None,
        class_names: (1..=n).map(|c| c.to_string()).collect(),
        per_class,
        confusion,
    })
}
