//! In-memory labeled dataset and its on-disk directory format.
//!
//! A dataset directory holds:
//!
//! * `manifest.json`: format version, shape, class names, seed and noise
//!   metadata, plus trial and augmentation ids.
//! * `features.f32le`: little-endian `f32`, row-major sample × unit × bin.
//! * `labels.u8`: one byte per sample, the observed (possibly noisy) label.
//! * `true_labels.u8`: optional hidden ground truth (synthetic data only).

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::spike::TrialMatrix;

pub const DATASET_FORMAT_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURES_FILE: &str = "features.f32le";
pub const LABELS_FILE: &str = "labels.u8";
pub const TRUE_LABELS_FILE: &str = "true_labels.u8";

/// How observed labels were derived from true labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseRecord {
    /// Row-stochastic transition matrix `T[true][observed]`.
    pub transition: Vec<Vec<f64>>,
    /// `"stochastic"` or `"exact_count"`.
    pub mode: String,
    pub flipped: usize,
    pub realized_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format_version: u32,
    pub n_samples: usize,
    pub n_units: usize,
    pub n_bins: usize,
    pub class_names: Vec<String>,
    pub seed: Option<u64>,
    pub noise: Option<NoiseRecord>,
    pub has_true_labels: bool,
    #[serde(default)]
    pub trial_ids: Vec<u64>,
    #[serde(default)]
    pub parent_ids: Vec<Option<u64>>,
}

/// Trial matrices with observed labels and, for synthetic data, hidden true
/// labels. Features are stored as `f32` so the on-disk round trip is exact.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    n_units: usize,
    n_bins: usize,
    features: Vec<f32>,
    labels: Vec<usize>,
    true_labels: Option<Vec<usize>>,
    trial_ids: Vec<u64>,
    parent_ids: Vec<Option<u64>>,
    class_names: Vec<String>,
    pub seed: Option<u64>,
    pub noise: Option<NoiseRecord>,
}

impl LabeledDataset {
    pub fn new(n_units: usize, n_bins: usize, class_names: Vec<String>) -> Self {
        Self {
            n_units,
            n_bins,
            features: Vec::new(),
            labels: Vec::new(),
            true_labels: None,
            trial_ids: Vec::new(),
            parent_ids: Vec::new(),
            class_names,
            seed: None,
            noise: None,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    /// Flattened feature length of one sample.
    pub fn dim(&self) -> usize {
        self.n_units * self.n_bins
    }

    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn features(&self) -> &[f32] {
        &self.features
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let d = self.dim();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn sample_mut(&mut self, i: usize) -> &mut [f32] {
        let d = self.dim();
        &mut self.features[i * d..(i + 1) * d]
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn true_labels(&self) -> Option<&[usize]> {
        self.true_labels.as_deref()
    }

    pub fn trial_ids(&self) -> &[u64] {
        &self.trial_ids
    }

    pub fn parent_ids(&self) -> &[Option<u64>] {
        &self.parent_ids
    }

    /// Appends a sample. `true_label` must be given for all samples or none.
    pub fn push(
        &mut self,
        features: &[f32],
        label: usize,
        true_label: Option<usize>,
        trial_id: u64,
        parent_id: Option<u64>,
    ) -> Result<()> {
        if features.len() != self.dim() {
            return Err(Error::shape(self.dim(), features.len()));
        }
        if label >= self.n_classes() {
            return Err(Error::invalid(format!(
                "label {label} out of range for {} classes",
                self.n_classes()
            )));
        }
        match (&mut self.true_labels, true_label) {
            (Some(t), Some(y)) => t.push(y),
            (None, None) => {}
            (None, Some(y)) if self.labels.is_empty() => self.true_labels = Some(vec![y]),
            _ => return Err(Error::invalid("true labels must be given for all samples or none")),
        }
        self.features.extend_from_slice(features);
        self.labels.push(label);
        self.trial_ids.push(trial_id);
        self.parent_ids.push(parent_id);
        Ok(())
    }

    /// Appends a trial matrix, rounding its values to `f32`.
    pub fn push_matrix(&mut self, m: &TrialMatrix, true_label: Option<usize>) -> Result<()> {
        if (m.n_units(), m.n_bins()) != (self.n_units, self.n_bins) {
            return Err(Error::shape(
                format!("{}x{}", self.n_units, self.n_bins),
                format!("{}x{}", m.n_units(), m.n_bins()),
            ));
        }
        let values: Vec<f32> = m.values().iter().map(|&v| v as f32).collect();
        self.push(&values, m.label, true_label, m.trial_id, None)
    }

    /// Replaces observed labels (noise injection, relabeling).
    pub fn set_labels(&mut self, labels: Vec<usize>) -> Result<()> {
        if labels.len() != self.len() {
            return Err(Error::shape(self.len(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= self.n_classes()) {
            return Err(Error::invalid(format!("label {bad} out of range")));
        }
        self.labels = labels;
        Ok(())
    }

    /// Per-class counts of the observed labels.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.n_classes()];
        for &y in &self.labels {
            counts[y] += 1;
        }
        counts
    }

    /// Copies the samples at `rows` (in that order) into a new dataset.
    pub fn subset(&self, rows: &[usize]) -> LabeledDataset {
        let mut out = LabeledDataset::new(self.n_units, self.n_bins, self.class_names.clone());
        out.seed = self.seed;
        out.noise = self.noise.clone();
        out.features.reserve(rows.len() * self.dim());
        for &i in rows {
            out.features.extend_from_slice(self.sample(i));
            out.labels.push(self.labels[i]);
            out.trial_ids.push(self.trial_ids[i]);
            out.parent_ids.push(self.parent_ids[i]);
        }
        out.true_labels = self.true_labels.as_ref().map(|t| rows.iter().map(|&i| t[i]).collect());
        out
    }

    /// Fraction of samples whose observed label differs from the true label.
    pub fn label_error_rate(&self) -> Option<f64> {
        let truth = self.true_labels.as_ref()?;
        if self.is_empty() {
            return Some(0.0);
        }
        let wrong = truth.iter().zip(&self.labels).filter(|(t, y)| t != y).count();
        Some(wrong as f64 / self.len() as f64)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            format_version: DATASET_FORMAT_VERSION,
            n_samples: self.len(),
            n_units: self.n_units,
            n_bins: self.n_bins,
            class_names: self.class_names.clone(),
            seed: self.seed,
            noise: self.noise.clone(),
            has_true_labels: self.true_labels.is_some(),
            trial_ids: self.trial_ids.clone(),
            parent_ids: self.parent_ids.clone(),
        }
    }

    /// Writes the dataset directory, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        if self.n_classes() > 256 {
            return Err(Error::Format("labels.u8 holds at most 256 classes".into()));
        }
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

        let manifest = serde_json::to_string_pretty(&self.manifest())?;
        let path = dir.join(MANIFEST_FILE);
        fs::write(&path, manifest).map_err(|e| Error::io(&path, e))?;

        let path = dir.join(FEATURES_FILE);
        let file = fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for v in &self.features {
            w.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&path, e))?;
        }
        w.flush().map_err(|e| Error::io(&path, e))?;

        write_labels(&dir.join(LABELS_FILE), &self.labels)?;
        if let Some(t) = &self.true_labels {
            write_labels(&dir.join(TRUE_LABELS_FILE), t)?;
        }
        Ok(())
    }

    /// Reads a dataset directory written by [`LabeledDataset::save`].
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text)?;
        if m.format_version != DATASET_FORMAT_VERSION {
            return Err(Error::Format(format!(
                "dataset format version {} (expected {DATASET_FORMAT_VERSION})",
                m.format_version
            )));
        }
        let dim = m.n_units * m.n_bins;

        let path = dir.join(FEATURES_FILE);
        let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
        if bytes.len() != m.n_samples * dim * 4 {
            return Err(Error::Format(format!(
                "{FEATURES_FILE} has {} bytes, expected {}",
                bytes.len(),
                m.n_samples * dim * 4
            )));
        }
        let features: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();

        let labels = read_labels(&dir.join(LABELS_FILE), m.n_samples, m.class_names.len())?;
        let true_labels = if m.has_true_labels {
            Some(read_labels(
                &dir.join(TRUE_LABELS_FILE),
                m.n_samples,
                m.class_names.len(),
            )?)
        } else {
            None
        };

        let trial_ids = if m.trial_ids.is_empty() {
            (0..m.n_samples as u64).collect()
        } else if m.trial_ids.len() == m.n_samples {
            m.trial_ids
        } else {
            return Err(Error::Format("trial_ids length differs from n_samples".into()));
        };
        let parent_ids = if m.parent_ids.is_empty() {
            vec![None; m.n_samples]
        } else if m.parent_ids.len() == m.n_samples {
            m.parent_ids
        } else {
            return Err(Error::Format("parent_ids length differs from n_samples".into()));
        };

        Ok(Self {
            n_units: m.n_units,
            n_bins: m.n_bins,
            features,
            labels,
            true_labels,
            trial_ids,
            parent_ids,
            class_names: m.class_names,
            seed: m.seed,
            noise: m.noise,
        })
    }
}

fn write_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let bytes: Vec<u8> = labels.iter().map(|&y| y as u8).collect();
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_labels(path: &Path, n: usize, n_classes: usize) -> Result<Vec<usize>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() != n {
        return Err(Error::Format(format!(
            "{} has {} entries, expected {n}",
            path.display(),
            bytes.len()
        )));
    }
    let labels: Vec<usize> = bytes.into_iter().map(usize::from).collect();
    if let Some(&bad) = labels.iter().find(|&&y| y >= n_classes) {
        return Err(Error::Format(format!("label {bad} out of range in {}", path.display())));
    }
    Ok(labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledDataset {
        let mut ds = LabeledDataset::new(2, 3, vec!["a".into(), "b".into()]);
        ds.push(&[0.5, -1.0, 2.25, f32::MIN_POSITIVE, 7.0, -0.0], 1, Some(0), 10, None)
            .unwrap();
        ds.push(&[1.0; 6], 0, Some(0), 11, Some(10)).unwrap();
        ds.seed = Some(42);
        ds
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let ds = toy();
        ds.save(dir.path()).unwrap();
        let back = LabeledDataset::load(dir.path()).unwrap();
        assert_eq!(back, ds);
        let bits: Vec<u32> = back.features().iter().map(|v| v.to_bits()).collect();
        let orig: Vec<u32> = ds.features().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, orig);
    }

    #[test]
    fn rejects_truncated_features() {
        let dir = tempfile::tempdir().unwrap();
        toy().save(dir.path()).unwrap();
        let p = dir.path().join(FEATURES_FILE);
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 4]).unwrap();
        assert!(matches!(LabeledDataset::load(dir.path()), Err(Error::Format(_))));
    }

    #[test]
    fn rejects_unknown_manifest_keys() {
        let dir = tempfile::tempdir().unwrap();
        toy().save(dir.path()).unwrap();
        let p = dir.path().join(MANIFEST_FILE);
        let text = fs::read_to_string(&p).unwrap().replacen('{', "{\"bogus\": 1,", 1);
        fs::write(&p, text).unwrap();
        assert!(matches!(LabeledDataset::load(dir.path()), Err(Error::Json(_))));
    }

    #[test]
    fn mixed_true_labels_rejected() {
        let mut ds = LabeledDataset::new(1, 1, vec!["a".into()]);
        ds.push(&[0.0], 0, None, 0, None).unwrap();
        assert!(ds.push(&[0.0], 0, Some(0), 1, None).is_err());
    }

    #[test]
    fn subset_keeps_metadata() {
        let ds = toy();
        let s = ds.subset(&[1]);
        assert_eq!(s.len(), 1);
        assert_eq!(s.trial_ids(), &[11]);
        assert_eq!(s.parent_ids(), &[Some(10)]);
        assert_eq!(s.true_labels(), Some(&[0][..]));
        assert_eq!(ds.label_error_rate(), Some(0.5));
    }
}
