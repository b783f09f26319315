//! Run configuration shared by every subcommand.

use std::path::{Path, PathBuf};

use emonet::cl::ClConfig;
use emonet::harness::AblationConfig;
use emonet::mlp::NetConfig;
use emonet::spike::N_UNITS;
use emonet::synthetic::{InjectionMode, NoiseModel, SyntheticConfig};
use emonet::weighting::Mode;
use emonet::{Error, Result};
use serde::{Deserialize, Serialize};

/// How `train` evaluates the classifier.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    /// Balanced test set drawn from unflagged, model-agreeing samples.
    #[default]
    Reliable,
    /// Stratified k-fold cross-validation, label cleaning inside each split.
    Cv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NoiseSpec {
    /// Symmetric flip rate; ignored when `transition` is given.
    pub rate: f64,
    pub transition: Option<Vec<Vec<f64>>>,
    pub mode: InjectionMode,
}

impl Default for NoiseSpec {
    fn default() -> Self {
        Self {
            rate: 0.0,
            transition: None,
            mode: InjectionMode::ExactCount,
        }
    }
}

impl NoiseSpec {
    pub fn model(&self, n_classes: usize) -> Result<NoiseModel> {
        let model = match &self.transition {
            Some(t) => NoiseModel { transition: t.clone() },
            None => NoiseModel::symmetric(n_classes, self.rate)?,
        };
        model.validate()?;
        if model.n_classes() != n_classes {
            return Err(Error::Invalid(format!(
                "noise transition has {} classes, generator has {n_classes}",
                model.n_classes()
            )));
        }
        Ok(model)
    }

    pub fn is_identity(&self) -> bool {
        match &self.transition {
            Some(t) => t.iter().enumerate().all(|(i, row)| row[i] == 1.0),
            None => self.rate == 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenerateConfig {
    pub synthetic: SyntheticConfig,
    pub n_per_class: usize,
    pub noise: NoiseSpec,
    /// Emit the noise-free control with the class signal scaled by this factor.
    pub clean_control_boost: Option<f64>,
}

impl Default for GenerateConfig {
    fn default() -> Self {
        Self {
            synthetic: SyntheticConfig::default(),
            n_per_class: 500,
            noise: NoiseSpec::default(),
            clean_control_boost: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    /// Dataset directory read by `clean`, `train` and `ablate`.
    pub data: Option<PathBuf>,
    pub mode: Mode,
    pub generate: GenerateConfig,
    pub classifier: NetConfig,
    pub cl: ClConfig,
    pub renormalize_weights: bool,
    pub protocol: Protocol,
    pub cv_folds: usize,
    /// Reliable test samples per class.
    pub reliable_per_class: usize,
    pub ablation: AblationConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            data: None,
            mode: Mode::Baseline,
            generate: GenerateConfig::default(),
            classifier: NetConfig::classifier(),
            cl: ClConfig::default(),
            renormalize_weights: false,
            protocol: Protocol::Reliable,
            cv_folds: 10,
            reliable_per_class: 100,
            ablation: AblationConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.generate;
        g.synthetic.validate()?;
        if g.n_per_class == 0 {
            return Err(Error::Invalid("generate.n_per_class must be at least 1".into()));
        }
        g.noise.model(g.synthetic.n_classes())?;
        if let Some(b) = g.clean_control_boost {
            if !(b.is_finite() && b > 0.0) {
                return Err(Error::Invalid("clean_control_boost must be positive".into()));
            }
            if !g.noise.is_identity() {
                return Err(Error::Invalid("the clean control cannot carry label noise".into()));
            }
        }
        let dim = N_UNITS * g.synthetic.window.n_bins();
        for net in [&self.classifier, &self.cl.aux, &self.ablation.classifier] {
            net.build(dim, g.synthetic.n_classes().max(2), 0).validate()?;
        }
        if self.cl.k_folds < 2 || self.cv_folds < 2 {
            return Err(Error::Invalid("fold counts must be at least 2".into()));
        }
        if self.reliable_per_class == 0 {
            return Err(Error::Invalid("reliable_per_class must be at least 1".into()));
        }
        self.ablation.validate()
    }

    pub fn echo(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }
}
