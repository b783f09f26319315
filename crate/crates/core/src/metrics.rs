//! Accuracy, per-class precision/recall/F1 and macro-F1 from a confusion
//! matrix.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub per_class: Vec<ClassMetrics>,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 are 0 whenever their denominator is 0, so a
/// class that is neither present nor predicted scores F1 = 0.
pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Result<Metrics> {
    let m = confusion.len();
    if confusion.iter().any(|r| r.len() != m) {
        return Err(Error::invalid("confusion matrix must be square"));
    }
    let total: u64 = confusion.iter().flatten().sum();
    if total == 0 {
        return Err(Error::invalid("no predictions to score"));
    }
    let trace: u64 = (0..m).map(|c| confusion[c][c]).sum();
    let per_class: Vec<ClassMetrics> = (0..m)
        .map(|c| {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            let f1 = if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            };
            ClassMetrics {
                precision,
                recall,
                f1,
                support,
            }
        })
        .collect();
    let macro_f1 = per_class.iter().map(|c| c.f1).sum::<f64>() / m as f64;
    Ok(Metrics {
        accuracy: ratio(trace, total),
        macro_f1,
        per_class,
        confusion,
    })
}

pub fn compute_metrics(predictions: &[usize], labels: &[usize], n_classes: usize) -> Result<Metrics> {
    if predictions.len() != labels.len() {
        return Err(Error::shape(labels.len(), predictions.len()));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("cannot score an empty prediction set"));
    }
    let mut confusion = vec![vec![0u64; n_classes]; n_classes];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= n_classes || y >= n_classes {
            return Err(Error::invalid(format!("class index out of range 0..{n_classes}")));
        }
        confusion[y][p] += 1;
    }
    from_confusion(confusion)
}

/// Mean and sample standard deviation (`n − 1`; 0 for a single value).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanSd {
    pub mean: f64,
    pub sd: f64,
}

impl MeanSd {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                sd: f64::NAN,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let sd = if n > 1 {
            (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, sd }
    }
}
