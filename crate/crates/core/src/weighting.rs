//! Per-sample training weights from label quality.
//!
//! Reweighting z-scores the quality vector and squashes it with a logistic
//! sigmoid, so every sample keeps a weight strictly inside `(0, 1)` and
//! better-labeled samples weigh more. Pruning zeroes the loss of flagged
//! samples and leaves the rest at 1.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spike::mean_std;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Baseline,
    /// Loss reweighting (Emo-R).
    #[serde(rename = "emo_r", alias = "reweight")]
    Reweight,
    /// Data pruning (Emo-P).
    #[serde(rename = "emo_p", alias = "prune")]
    Prune,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Baseline => "baseline",
            Mode::Reweight => "emo_r",
            Mode::Prune => "emo_p",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(Mode::Baseline),
            "reweight" | "emo_r" => Ok(Mode::Reweight),
            "prune" | "emo_p" => Ok(Mode::Prune),
            other => Err(Error::invalid(format!("unknown weighting mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector {
    pub weights: Vec<f64>,
    pub mode: Mode,
}

impl WeightVector {
    pub fn baseline(n: usize) -> Self {
        Self {
            weights: vec![1.0; n],
            mode: Mode::Baseline,
        }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Number of samples with a positive weight.
    pub fn n_effective(&self) -> usize {
        self.weights.iter().filter(|&&w| w > 0.0).count()
    }

    /// Rescales to mean 1. Only meaningful for reweighting.
    pub fn renormalized(mut self) -> Self {
        let mean = self.weights.iter().sum::<f64>() / self.weights.len().max(1) as f64;
        if mean > 0.0 {
            self.weights.iter_mut().for_each(|w| *w /= mean);
        }
        self
    }

    /// CSV with header `sample_id,weight,mode`.
    pub fn to_csv(&self, sample_ids: &[u64]) -> String {
        let mut out = String::from("sample_id,weight,mode\n");
        for (id, w) in sample_ids.iter().zip(&self.weights) {
            writeln!(out, "{id},{w},{}", self.mode.as_str()).unwrap();
        }
        out
    }
}

/// `(q − μ) / σ` with population σ; a constant vector maps to zeros.
pub fn standardize_quality(q: &[f64]) -> Result<Vec<f64>> {
    if q.is_empty() {
        return Err(Error::invalid("empty quality vector"));
    }
    if q.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("quality vector has non-finite entries"));
    }
    let (mean, std) = mean_std(q);
    if std == 0.0 {
        return Ok(vec![0.0; q.len()]);
    }
    Ok(q.iter().map(|v| (v - mean) / std).collect())
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Reweighting weights `1 / (1 + e^{−q*})` from standardized quality.
pub fn weight_reweight(q_std: &[f64]) -> WeightVector {
    WeightVector {
        weights: q_std.iter().map(|&z| sigmoid(z)).collect(),
        mode: Mode::Reweight,
    }
}

/// Pruning weights: 0 for flagged samples, 1 otherwise.
pub fn weight_prune(flags: &[bool]) -> WeightVector {
    WeightVector {
        weights: flags.iter().map(|&f| if f { 0.0 } else { 1.0 }).collect(),
        mode: Mode::Prune,
    }
}

/// Weights for `mode` from a quality vector and its flags.
pub fn weights_for(mode: Mode, q: &[f64], flags: &[bool], renormalize: bool) -> Result<WeightVector> {
    if q.len() != flags.len() {
        return Err(Error::shape(q.len(), flags.len()));
    }
    Ok(match mode {
        Mode::Baseline => WeightVector::baseline(q.len()),
        Mode::Prune => weight_prune(flags),
        Mode::Reweight => {
            let w = weight_reweight(&standardize_quality(q)?);
            if renormalize {
                w.renormalized()
            } else {
                w
            }
        }
    })
}
