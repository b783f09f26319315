//! Ground-truth-known synthetic datasets with controllable label noise.
//!
//! Each class prototype is a 64×96 mean firing-rate grid: a per-unit baseline
//! rate, an onset response shared by all classes, and a class-specific
//! evoked bump on a subset of tuned units. Trials add Gaussian jitter, are
//! rectified to non-negative rates, then go through the same
//! standardize → noise steps as recorded trials.

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::{LabeledDataset, NoiseRecord};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::spike::{self, GaussianNoise, TrialMatrix, WindowSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ClassPrototype {
    pub class_id: usize,
    pub mean_pattern: Vec<f64>,
    pub jitter_std: f64,
    pub active_units: Vec<usize>,
}

/// Knobs for prototype construction and trial sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticConfig {
    pub class_names: Vec<String>,
    pub n_units: usize,
    pub window: WindowSpec,
    /// Range of per-unit spontaneous rates (Hz).
    pub baseline_rate_hz: (f64, f64),
    /// Tuned units per class.
    pub tuned_units: usize,
    /// Peak amplitude of the class-specific evoked response (Hz).
    pub signal_gain_hz: f64,
    /// Peak amplitude of the onset response common to every class (Hz).
    pub common_gain_hz: f64,
    /// Per-entry trial-to-trial jitter (Hz).
    pub jitter_std_hz: f64,
    /// Fraction of trials drawn between their own class and another one.
    pub ambiguous_fraction: f64,
    /// Post-standardization noise; `None` skips the step.
    pub pipeline_noise: Option<GaussianNoise>,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            class_names: vec!["fear".into(), "neutral".into(), "happy".into()],
            n_units: spike::N_UNITS,
            window: WindowSpec::default(),
            baseline_rate_hz: (2.0, 20.0),
            tuned_units: 12,
            signal_gain_hz: 10.0,
            common_gain_hz: 15.0,
            jitter_std_hz: 20.0,
            ambiguous_fraction: 0.0,
            pipeline_noise: Some(GaussianNoise::default()),
        }
    }
}

impl SyntheticConfig {
    pub fn n_classes(&self) -> usize {
        self.class_names.len()
    }

    pub fn validate(&self) -> Result<()> {
        self.window.validate()?;
        if self.n_classes() < 2 {
            return Err(Error::invalid("need at least two classes"));
        }
        if self.n_classes() > 256 {
            return Err(Error::invalid("at most 256 classes"));
        }
        if self.tuned_units > self.n_units || self.n_units == 0 {
            return Err(Error::invalid("tuned_units must be within 0..=n_units"));
        }
        let (lo, hi) = self.baseline_rate_hz;
        if !(lo >= 0.0 && hi >= lo) {
            return Err(Error::invalid("baseline_rate_hz must satisfy 0 <= lo <= hi"));
        }
        if !(self.jitter_std_hz >= 0.0 && self.signal_gain_hz.is_finite() && self.common_gain_hz.is_finite()) {
            return Err(Error::invalid("gains must be finite and jitter non-negative"));
        }
        if !(0.0..=1.0).contains(&self.ambiguous_fraction) {
            return Err(Error::invalid("ambiguous_fraction must lie in [0, 1]"));
        }
        Ok(())
    }
}

fn bump(t: f64, peak: f64, width: f64) -> f64 {
    let z = (t - peak) / width;
    (-0.5 * z * z).exp()
}

/// Builds one prototype per class from `cfg`, seeded by `seed`.
pub fn build_prototypes(cfg: &SyntheticConfig, seed: u64) -> Result<Vec<ClassPrototype>> {
    cfg.validate()?;
    let m = cfg.n_classes();
    let n_bins = cfg.window.n_bins();
    let mut r = rng::stream(seed, &[tag::PROTOTYPES]);

    let (lo, hi) = cfg.baseline_rate_hz;
    let baseline: Vec<f64> = (0..cfg.n_units)
        .map(|_| if hi > lo { r.random_range(lo..hi) } else { lo })
        .collect();
    let onset_gain: Vec<f64> = (0..cfg.n_units).map(|_| r.random_range(0.2..1.0)).collect();
    let centers: Vec<f64> = (0..n_bins)
        .map(|k| {
            let (a, b) = cfg.window.bin_bounds(k);
            0.5 * (a + b)
        })
        .collect();

    let mut units: Vec<usize> = (0..cfg.n_units).collect();
    let prototypes = (0..m)
        .map(|c| {
            units.shuffle(&mut r);
            let mut active = units[..cfg.tuned_units].to_vec();
            active.sort_unstable();
            // Class-specific latency spread over the stimulus period.
            let peak = 120.0 + 500.0 * c as f64 / m as f64;
            let mut mean = vec![0.0; cfg.n_units * n_bins];
            for u in 0..cfg.n_units {
                for (k, &t) in centers.iter().enumerate() {
                    mean[u * n_bins + k] = baseline[u] + cfg.common_gain_hz * onset_gain[u] * bump(t, 100.0, 60.0);
                }
            }
            for &u in &active {
                let amp = cfg.signal_gain_hz * r.random_range(0.5..1.0);
                let sign = if r.random_bool(0.75) { 1.0 } else { -1.0 };
                for (k, &t) in centers.iter().enumerate() {
                    mean[u * n_bins + k] += sign * amp * bump(t, peak, 120.0);
                }
            }
            ClassPrototype {
                class_id: c,
                mean_pattern: mean,
                jitter_std: cfg.jitter_std_hz,
                active_units: active,
            }
        })
        .collect();
    Ok(prototypes)
}

/// Outcome flags of [`generate`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct GenerateReport {
    /// Two prototypes share a mean pattern and there is no jitter.
    pub degenerate_prototypes: bool,
    /// Trials whose raw matrix had zero variance (standardized to zeros).
    pub degenerate_trials: usize,
}

/// Samples `n_per_class` clean trials per prototype.
///
/// Trial `i` belongs to class `i % m`; its jitter stream is keyed by `i`, so
/// generation order does not affect the output.
pub fn generate(
    prototypes: &[ClassPrototype],
    cfg: &SyntheticConfig,
    n_per_class: usize,
    seed: u64,
) -> Result<(LabeledDataset, GenerateReport)> {
    cfg.validate()?;
    let m = prototypes.len();
    if m < 2 {
        return Err(Error::invalid("need at least two prototypes"));
    }
    if m != cfg.n_classes() {
        return Err(Error::invalid(format!(
            "{m} prototypes for {} class names",
            cfg.n_classes()
        )));
    }
    if n_per_class == 0 {
        return Err(Error::invalid("n_per_class must be at least 1"));
    }
    let n_bins = cfg.window.n_bins();
    let dim = cfg.n_units * n_bins;
    for p in prototypes {
        if p.mean_pattern.len() != dim {
            return Err(Error::shape(dim, p.mean_pattern.len()));
        }
        if !p.jitter_std.is_finite() || p.jitter_std < 0.0 || p.mean_pattern.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("prototype {} is not finite", p.class_id)));
        }
    }

    let mut report = GenerateReport::default();
    for (a, pa) in prototypes.iter().enumerate() {
        for pb in &prototypes[a + 1..] {
            if pa.mean_pattern == pb.mean_pattern && pa.jitter_std == 0.0 && pb.jitter_std == 0.0 {
                report.degenerate_prototypes = true;
            }
        }
    }
    if report.degenerate_prototypes {
        log::warn!("synthetic prototypes are indistinguishable (identical means, zero jitter)");
    }

    let mut ds = LabeledDataset::new(cfg.n_units, n_bins, cfg.class_names.clone());
    ds.seed = Some(seed);
    let mut values = vec![0.0; dim];
    for i in 0..n_per_class * m {
        let class = i % m;
        let proto = &prototypes[class];
        let mut r = rng::stream(seed, &[tag::GENERATE, i as u64]);
        let mix = if cfg.ambiguous_fraction > 0.0 && r.random_bool(cfg.ambiguous_fraction) {
            let other = (class + r.random_range(1..m)) % m;
            Some((&prototypes[other], r.random_range(0.3..0.5)))
        } else {
            None
        };
        for (k, v) in values.iter_mut().enumerate() {
            let mut mean = proto.mean_pattern[k];
            if let Some((other, alpha)) = mix {
                mean = (1.0 - alpha) * mean + alpha * other.mean_pattern[k];
            }
            *v = mean;
        }
        if proto.jitter_std > 0.0 {
            let jitter = Normal::new(0.0, proto.jitter_std).map_err(|e| Error::invalid(e.to_string()))?;
            values.iter_mut().for_each(|v| *v += jitter.sample(&mut r));
        }
        values.iter_mut().for_each(|v| *v = v.max(0.0));

        let raw = TrialMatrix::from_values(cfg.n_units, n_bins, values.clone(), class, i as u64)?;
        let st = spike::standardize(&raw);
        report.degenerate_trials += st.degenerate as usize;
        let mut matrix = st.matrix;
        if let Some(noise) = &cfg.pipeline_noise {
            matrix = spike::add_gaussian_noise(&matrix, noise, &mut r)?;
        }
        ds.push_matrix(&matrix, Some(class))?;
    }
    Ok((ds, report))
}

/// Noise-free dataset with boosted class separability, the analogue of a
/// behaviorally unambiguous (e.g. movement-intention) recording.
pub fn generate_clean_control(
    cfg: &SyntheticConfig,
    separability_boost: f64,
    n_per_class: usize,
    seed: u64,
) -> Result<LabeledDataset> {
    let mut cfg = cfg.clone();
    cfg.signal_gain_hz *= separability_boost;
    let prototypes = build_prototypes(&cfg, seed)?;
    let (mut ds, _) = generate(&prototypes, &cfg, n_per_class, seed)?;
    let k = ds.n_classes();
    ds.noise = Some(NoiseRecord {
        transition: NoiseModel::identity(k).transition,
        mode: "none".into(),
        flipped: 0,
        realized_rate: 0.0,
    });
    Ok(ds)
}

/// Class-conditional label flips: `transition[i][j] = P(observed j | true i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    pub transition: Vec<Vec<f64>>,
}

impl NoiseModel {
    pub fn identity(m: usize) -> Self {
        Self::symmetric(m, 0.0).expect("zero rate is always valid")
    }

    /// Keep the label with probability `1 − rate`, otherwise move uniformly to
    /// another class.
    pub fn symmetric(m: usize, rate: f64) -> Result<Self> {
        if m < 2 || !(0.0..=1.0).contains(&rate) {
            return Err(Error::invalid(format!("bad symmetric noise m={m} rate={rate}")));
        }
        let off = rate / (m - 1) as f64;
        let transition = (0..m)
            .map(|i| (0..m).map(|j| if i == j { 1.0 - rate } else { off }).collect())
            .collect();
        Ok(Self { transition })
    }

    pub fn n_classes(&self) -> usize {
        self.transition.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.transition.len();
        for (i, row) in self.transition.iter().enumerate() {
            if row.len() != m {
                return Err(Error::invalid(format!(
                    "transition row {i} has {} entries, expected {m}",
                    row.len()
                )));
            }
            if row.iter().any(|&p| !(p >= 0.0) || !p.is_finite()) {
                return Err(Error::invalid(format!(
                    "transition row {i} has a negative or non-finite entry"
                )));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-9 {
                return Err(Error::invalid(format!("transition row {i} sums to {s}, not 1")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionMode {
    /// Each label drawn independently from its transition row.
    Stochastic,
    /// Exactly `round(Σ_i n_i (1 − T[i][i]))` labels flipped; targets drawn
    /// from the off-diagonal part of the row.
    ExactCount,
}

/// Replaces observed labels with noisy versions of the true labels.
pub fn inject_noise(ds: &LabeledDataset, noise: &NoiseModel, mode: InjectionMode, seed: u64) -> Result<LabeledDataset> {
    noise.validate()?;
    let truth = ds
        .true_labels()
        .ok_or_else(|| Error::invalid("noise injection needs true labels"))?
        .to_vec();
    let m = ds.n_classes();
    if noise.n_classes() != m {
        return Err(Error::invalid(format!(
            "noise model has {} classes, dataset has {m}",
            noise.n_classes()
        )));
    }
    let t = &noise.transition;
    let mut labels = truth.clone();
    let mut r = rng::stream(seed, &[tag::NOISE_INJECT]);
    match mode {
        InjectionMode::Stochastic => {
            for (y, &truth) in labels.iter_mut().zip(&truth) {
                *y = draw(&t[truth], r.random::<f64>());
            }
        }
        InjectionMode::ExactCount => {
            let expected: f64 = truth.iter().map(|&y| 1.0 - t[y][y]).sum();
            let k = expected.round() as usize;
            // Weighted sampling without replacement, weight = flip probability.
            let mut keyed: Vec<(f64, usize)> = truth
                .iter()
                .enumerate()
                .filter(|(_, &y)| t[y][y] < 1.0)
                .map(|(i, &y)| {
                    let u: f64 = r.random::<f64>().max(f64::MIN_POSITIVE);
                    (u.ln() / (1.0 - t[y][y]), i)
                })
                .collect();
            keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
            for &(_, i) in keyed.iter().take(k) {
                let y = truth[i];
                let off: Vec<f64> = (0..m).map(|j| if j == y { 0.0 } else { t[y][j] }).collect();
                let total: f64 = off.iter().sum();
                labels[i] = draw(&off, r.random::<f64>() * total);
            }
        }
    }
    let flipped = labels.iter().zip(&truth).filter(|(a, b)| a != b).count();
    let mut out = ds.clone();
    out.set_labels(labels)?;
    out.noise = Some(NoiseRecord {
        transition: noise.transition.clone(),
        mode: match mode {
            InjectionMode::Stochastic => "stochastic".into(),
            InjectionMode::ExactCount => "exact_count".into(),
        },
        flipped,
        realized_rate: if ds.is_empty() {
            0.0
        } else {
            flipped as f64 / ds.len() as f64
        },
    });
    Ok(out)
}

/// Inverse-CDF draw from unnormalized weights given `u ∈ [0, Σw)`.
fn draw(weights: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (j, &w) in weights.iter().enumerate() {
        if w > 0.0 {
            acc += w;
            last = j;
            if u < acc {
                return j;
            }
        }
    }
    last
}
