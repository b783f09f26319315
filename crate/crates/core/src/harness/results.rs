//! Versioned results documents written by every experiment.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{AblationPoint, CvReport, ModeResult};
use crate::cl::ConfidentJoint;
use crate::error::{Error, Result};
use crate::metrics::Metrics;
use crate::weighting::Mode;

pub const RESULTS_FORMAT_VERSION: u32 = 1;

/// Envelope shared by all experiment outputs: identity, seed and a verbatim
/// echo of the run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResultsDoc {
    pub format_version: u32,
    pub experiment_id: String,
    pub dataset: String,
    pub seed: u64,
    pub config: serde_json::Value,
    pub results: ResultBody,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ResultBody {
    Clean {
        n_samples: usize,
        n_flagged: usize,
        excluded: usize,
        thresholds: Vec<f64>,
        joint: ConfidentJoint,
        /// Precision and recall of the flags against the hidden flips.
        flag_precision: Option<f64>,
        flag_recall: Option<f64>,
    },
    Train {
        mode: Mode,
        n_train: usize,
        n_eval: usize,
        n_effective: usize,
        final_loss: f64,
        metrics: Metrics,
        true_label_metrics: Option<Metrics>,
    },
    Cv {
        mode: Mode,
        report: CvReport,
    },
    Reliable {
        n_train: usize,
        n_test: usize,
        modes: Vec<ModeResult>,
    },
    Ablation {
        n_train: usize,
        n_test: usize,
        points: Vec<AblationPoint>,
    },
}

fn check_metrics(m: &Metrics, what: &str) -> Result<()> {
    let unit = |v: f64| (0.0..=1.0).contains(&v);
    let k = m.confusion.len();
    let ok = unit(m.accuracy)
        && unit(m.macro_f1)
        && m.per_class.len() == k
        && m.confusion.iter().all(|r| r.len() == k)
        && m.per_class
            .iter()
            .all(|c| unit(c.precision) && unit(c.recall) && unit(c.f1));
    if ok {
        Ok(())
    } else {
        Err(Error::Format(format!("{what}: metrics out of range or misshapen")))
    }
}

impl ResultsDoc {
    pub fn new(
        experiment_id: impl Into<String>,
        dataset: impl Into<String>,
        seed: u64,
        config: serde_json::Value,
        results: ResultBody,
    ) -> Self {
        Self {
            format_version: RESULTS_FORMAT_VERSION,
            experiment_id: experiment_id.into(),
            dataset: dataset.into(),
            seed,
            config,
            results,
        }
    }

    /// Structural checks beyond what deserialization enforces.
    pub fn validate(&self) -> Result<()> {
        if self.format_version != RESULTS_FORMAT_VERSION {
            return Err(Error::Format(format!("results format version {}", self.format_version)));
        }
        if !self.config.is_object() {
            return Err(Error::Format("config echo must be an object".into()));
        }
        match &self.results {
            ResultBody::Train {
                metrics,
                true_label_metrics,
                ..
            } => {
                check_metrics(metrics, "train")?;
                if let Some(t) = true_label_metrics {
                    check_metrics(t, "train (true labels)")?;
                }
            }
            ResultBody::Cv { report, .. } => {
                for f in &report.folds {
                    check_metrics(&f.metrics, "cv fold")?;
                }
            }
            ResultBody::Reliable { modes, .. } => {
                for m in modes {
                    check_metrics(&m.metrics, "reliable")?;
                }
            }
            ResultBody::Ablation { points, .. } => {
                if points
                    .iter()
                    .any(|p| !(0.0..=1.0).contains(&p.ratio) || p.per_seed.len() != p.seed_count)
                {
                    return Err(Error::Format("ablation point misshapen".into()));
                }
            }
            ResultBody::Clean { joint, .. } => {
                let s: f64 = joint.calibrated.iter().flatten().sum();
                if (s - 1.0).abs() > 1e-9 {
                    return Err(Error::Format("calibrated joint does not sum to 1".into()));
                }
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.validate()?;
        let text = self.to_json()?;
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    /// Parses and validates a results document, rejecting other versions
    /// before the body is interpreted.
    pub fn parse(text: &str) -> Result<Self> {
        let raw: serde_json::Value = serde_json::from_str(text)?;
        match raw.get("format_version").and_then(|v| v.as_u64()) {
            Some(v) if v == RESULTS_FORMAT_VERSION as u64 => {}
            Some(v) => return Err(Error::Format(format!("results format version {v}"))),
            None => return Err(Error::Format("missing format_version".into())),
        }
        let doc: ResultsDoc = serde_json::from_value(raw)?;
        doc.validate()?;
        Ok(doc)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }
}

/// JSON Schema (draft 2020-12) of the results envelope.
pub const RESULTS_SCHEMA: &str = r#"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "emonet results document",
  "type": "object",
  "required": ["format_version", "experiment_id", "dataset", "seed", "config", "results"],
  "additionalProperties": false,
  "properties": {
    "format_version": { "const": 1 },
    "experiment_id": { "type": "string" },
    "dataset": { "type": "string" },
    "seed": { "type": "integer", "minimum": 0 },
    "config": { "type": "object" },
    "results": {
      "type": "object",
      "required": ["kind"],
      "properties": {
        "kind": { "enum": ["clean", "train", "cv", "reliable", "ablation"] }
      }
    }
  }
}"#;
