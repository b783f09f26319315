//! Spike-train preprocessing: sliding-window firing rates, trial assembly,
//! per-matrix standardization, additive Gaussian noise and dropout
//! augmentation.
//!
//! Per-trial order is bin → assemble → standardize → noise. Augmentation runs
//! on the finished (standardized and noised) matrices.

use std::collections::BTreeMap;
use std::io::BufRead;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub const N_UNITS: usize = 64;
pub const N_BINS: usize = 96;

/// Spike times of one unit, in ms relative to stimulus onset.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrain {
    pub unit_id: usize,
    timestamps: Vec<f64>,
}

impl SpikeTrain {
    /// Validates ordering and range against `spec`'s extraction window.
    pub fn new(unit_id: usize, timestamps: Vec<f64>, spec: &WindowSpec) -> Result<Self> {
        let train = Self { unit_id, timestamps };
        train.validate(spec)?;
        Ok(train)
    }

    /// Checks strict ordering and that every spike lies in the extraction window.
    pub fn validate(&self, spec: &WindowSpec) -> Result<()> {
        let unit_id = self.unit_id;
        if let Some(w) = self.timestamps.windows(2).find(|w| !(w[0] < w[1])) {
            return Err(Error::invalid(format!(
                "unit {unit_id}: timestamps not strictly ascending ({} then {})",
                w[0], w[1]
            )));
        }
        if let Some(t) = self
            .timestamps
            .iter()
            .find(|&&t| !(t >= spec.t_start_ms && t <= spec.t_end_ms))
        {
            return Err(Error::invalid(format!(
                "unit {unit_id}: timestamp {t} ms outside [{}, {}]",
                spec.t_start_ms, spec.t_end_ms
            )));
        }
        Ok(())
    }

    pub fn empty(unit_id: usize) -> Self {
        Self {
            unit_id,
            timestamps: Vec::new(),
        }
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }
}

/// Sliding-window layout over the extraction window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowSpec {
    pub window_ms: f64,
    pub step_ms: f64,
    pub t_start_ms: f64,
    pub t_end_ms: f64,
}

impl Default for WindowSpec {
    fn default() -> Self {
        Self {
            window_ms: 48.0,
            step_ms: 16.0,
            t_start_ms: -200.0,
            t_end_ms: 1368.0,
        }
    }
}

impl WindowSpec {
    pub fn validate(&self) -> Result<()> {
        let span = self.t_end_ms - self.t_start_ms - self.window_ms;
        if !(self.window_ms > 0.0 && self.step_ms > 0.0 && span >= 0.0) {
            return Err(Error::invalid(format!("degenerate window spec {self:?}")));
        }
        let steps = span / self.step_ms;
        if steps.fract() != 0.0 {
            return Err(Error::invalid(format!(
                "extraction span minus window ({span} ms) is not a multiple of the step ({} ms)",
                self.step_ms
            )));
        }
        Ok(())
    }

    /// `(t_end − t_start − window) / step + 1`.
    pub fn n_bins(&self) -> usize {
        ((self.t_end_ms - self.t_start_ms - self.window_ms) / self.step_ms) as usize + 1
    }

    /// Half-open interval `[lo, hi)` of bin `k`.
    pub fn bin_bounds(&self, k: usize) -> (f64, f64) {
        let lo = self.t_start_ms + k as f64 * self.step_ms;
        (lo, lo + self.window_ms)
    }
}

/// Firing rate (Hz) of `train` in every sliding window of `spec`.
pub fn bin_firing_rates(train: &SpikeTrain, spec: &WindowSpec) -> Result<Vec<f64>> {
    spec.validate()?;
    train.validate(spec)?;
    let window_s = spec.window_ms / 1000.0;
    let ts = &train.timestamps;
    Ok((0..spec.n_bins())
        .map(|k| {
            let (lo, hi) = spec.bin_bounds(k);
            let count = ts.partition_point(|&t| t < hi) - ts.partition_point(|&t| t < lo);
            count as f64 / window_s
        })
        .collect())
}

/// One trial's `n_units × n_bins` grid, row-major by unit.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMatrix {
    n_units: usize,
    n_bins: usize,
    values: Vec<f64>,
    pub label: usize,
    pub trial_id: u64,
}

impl TrialMatrix {
    pub fn from_values(n_units: usize, n_bins: usize, values: Vec<f64>, label: usize, trial_id: u64) -> Result<Self> {
        if values.len() != n_units * n_bins {
            return Err(Error::shape(n_units * n_bins, values.len()));
        }
        Ok(Self {
            n_units,
            n_bins,
            values,
            label,
            trial_id,
        })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_bins(&self) -> usize {
        self.n_bins
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, unit: usize) -> &[f64] {
        &self.values[unit * self.n_bins..(unit + 1) * self.n_bins]
    }

    pub fn get(&self, unit: usize, bin: usize) -> f64 {
        self.values[unit * self.n_bins + bin]
    }
}

/// Stacks one firing-rate row per unit, ordered by `unit_id`.
///
/// Exactly one train per unit `0..n_units` is required; the input order does
/// not matter.
pub fn assemble_trial(
    trains: &[SpikeTrain],
    spec: &WindowSpec,
    n_units: usize,
    label: usize,
    trial_id: u64,
) -> Result<TrialMatrix> {
    if trains.len() != n_units {
        return Err(Error::invalid(format!(
            "expected {n_units} spike trains, got {}",
            trains.len()
        )));
    }
    let n_bins = spec.n_bins();
    let mut rows: Vec<Option<Vec<f64>>> = vec![None; n_units];
    for train in trains {
        let slot = rows
            .get_mut(train.unit_id)
            .ok_or_else(|| Error::invalid(format!("unit id {} out of range 0..{n_units}", train.unit_id)))?;
        if slot.is_some() {
            return Err(Error::invalid(format!("duplicate unit id {}", train.unit_id)));
        }
        *slot = Some(bin_firing_rates(train, spec)?);
    }
    let mut values = Vec::with_capacity(n_units * n_bins);
    for (u, row) in rows.into_iter().enumerate() {
        values.extend(row.ok_or_else(|| Error::invalid(format!("missing unit {u}")))?);
    }
    TrialMatrix::from_values(n_units, n_bins, values, label, trial_id)
}

/// Result of [`standardize`]: `degenerate` marks a zero-variance input, in
/// which case every value is 0.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardized {
    pub matrix: TrialMatrix,
    pub degenerate: bool,
}

/// Z-scores all entries of the matrix jointly (population standard deviation).
pub fn standardize(m: &TrialMatrix) -> Standardized {
    let (mean, std) = mean_std(&m.values);
    let mut out = m.clone();
    if std == 0.0 || !std.is_finite() {
        out.values.iter_mut().for_each(|v| *v = 0.0);
        return Standardized {
            matrix: out,
            degenerate: true,
        };
    }
    out.values.iter_mut().for_each(|v| *v = (*v - mean) / std);
    Standardized {
        matrix: out,
        degenerate: false,
    }
}

/// Mean and population standard deviation (two-pass).
pub(crate) fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    // Summation rounding would leave a constant vector with a tiny spread.
    if xs.iter().all(|&x| x == xs[0]) {
        return (xs[0], 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Additive per-entry Gaussian noise applied after standardization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GaussianNoise {
    pub mean: f64,
    pub variance: f64,
}

impl Default for GaussianNoise {
    fn default() -> Self {
        Self {
            mean: 1.0,
            variance: 0.005,
        }
    }
}

/// Adds an independent `Normal(mean, variance)` draw to every entry.
pub fn add_gaussian_noise<R: rand::Rng + ?Sized>(
    m: &TrialMatrix,
    noise: &GaussianNoise,
    rng: &mut R,
) -> Result<TrialMatrix> {
    if !(noise.variance >= 0.0) || !noise.mean.is_finite() {
        return Err(Error::invalid(format!("bad noise parameters {noise:?}")));
    }
    let mut out = m.clone();
    if noise.variance == 0.0 {
        out.values.iter_mut().for_each(|v| *v += noise.mean);
        return Ok(out);
    }
    let dist = Normal::new(noise.mean, noise.variance.sqrt()).map_err(|e| Error::invalid(e.to_string()))?;
    out.values.iter_mut().for_each(|v| *v += dist.sample(rng));
    Ok(out)
}

/// Full per-trial preprocessing with the noise stream keyed by `trial_id`.
pub fn preprocess_trial(
    trains: &[SpikeTrain],
    spec: &WindowSpec,
    n_units: usize,
    label: usize,
    trial_id: u64,
    noise: Option<&GaussianNoise>,
    seed: u64,
) -> Result<Standardized> {
    let raw = assemble_trial(trains, spec, n_units, label, trial_id)?;
    let mut st = standardize(&raw);
    if let Some(noise) = noise {
        let mut r = rng::stream(seed, &[tag::PIPELINE_NOISE, trial_id]);
        st.matrix = add_gaussian_noise(&st.matrix, noise, &mut r)?;
    }
    Ok(st)
}

/// Appends `copies` dropout-augmented replicas of every sample.
///
/// Each copied entry is zeroed independently with probability `rate`. Copies
/// inherit the label (and true label) and record the parent trial id. The
/// stream of copy `c` of trial `t` is keyed by `(t, c)`.
pub fn dropout_augment(ds: &LabeledDataset, rate: f64, copies: usize, seed: u64) -> Result<LabeledDataset> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::invalid(format!("dropout rate {rate} outside [0, 1)")));
    }
    let mut out = ds.clone();
    let mut next_id = ds.trial_ids().iter().max().map_or(0, |m| m + 1);
    let mut buf = vec![0f32; ds.dim()];
    for i in 0..ds.len() {
        let parent = ds.trial_ids()[i];
        for c in 0..copies {
            let mut r = rng::stream(seed, &[tag::AUGMENT, parent, c as u64]);
            for (dst, &src) in buf.iter_mut().zip(ds.sample(i)) {
                *dst = if rate > 0.0 && r.random::<f64>() < rate {
                    0.0
                } else {
                    src
                };
            }
            let truth = ds.true_labels().map(|t| t[i]);
            out.push(&buf, ds.labels()[i], truth, next_id, Some(parent))?;
            next_id += 1;
        }
    }
    Ok(out)
}

/// Reads `trial_id,unit_id,timestamp_ms` rows (an optional header line is
/// skipped) into per-trial spike trains. Units without spikes get empty
/// trains; timestamps are sorted per unit.
pub fn read_spike_text<R: BufRead>(
    reader: R,
    spec: &WindowSpec,
    n_units: usize,
) -> Result<BTreeMap<u64, Vec<SpikeTrain>>> {
    let mut raw: BTreeMap<u64, Vec<Vec<f64>>> = BTreeMap::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<spike input>", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if lineno == 0 && fields.first().is_some_and(|f| f.parse::<u64>().is_err()) {
            continue;
        }
        let bad = || Error::invalid(format!("line {}: expected trial_id,unit_id,timestamp_ms", lineno + 1));
        if fields.len() != 3 {
            return Err(bad());
        }
        let trial: u64 = fields[0].parse().map_err(|_| bad())?;
        let unit: usize = fields[1].parse().map_err(|_| bad())?;
        let t: f64 = fields[2].parse().map_err(|_| bad())?;
        if unit >= n_units {
            return Err(Error::invalid(format!(
                "line {}: unit {unit} out of range 0..{n_units}",
                lineno + 1
            )));
        }
        raw.entry(trial).or_insert_with(|| vec![Vec::new(); n_units])[unit].push(t);
    }
    raw.into_iter()
        .map(|(trial, units)| {
            let trains = units
                .into_iter()
                .enumerate()
                .map(|(u, mut ts)| {
                    ts.sort_by(f64::total_cmp);
                    SpikeTrain::new(u, ts, spec)
                })
                .collect::<Result<Vec<_>>>()?;
            Ok((trial, trains))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn spec() -> WindowSpec {
        WindowSpec::default()
    }

    /// Direct interval count per window.
    fn brute_force_rates(ts: &[f64], spec: &WindowSpec) -> Vec<f64> {
        let n = ((spec.t_end_ms - spec.t_start_ms - spec.window_ms) / spec.step_ms) as usize + 1;
        (0..n)
            .map(|k| {
                let lo = spec.t_start_ms + k as f64 * spec.step_ms;
                let hi = lo + spec.window_ms;
                let mut c = 0;
                for &t in ts {
                    if t >= lo && t < hi {
                        c += 1;
                    }
                }
                c as f64 / (spec.window_ms / 1000.0)
            })
            .collect()
    }

    #[test]
    fn default_spec_has_96_bins() {
        assert_eq!(spec().n_bins(), 96);
        assert_eq!(spec().n_bins(), N_BINS);
        spec().validate().unwrap();
    }

    #[test]
    fn misaligned_spec_rejected() {
        let s = WindowSpec {
            step_ms: 15.0,
            ..spec()
        };
        assert!(s.validate().is_err());
    }

    #[test]
    fn empty_train_gives_zero_rates() {
        let r = bin_firing_rates(&SpikeTrain::empty(3), &spec()).unwrap();
        assert_eq!(r, vec![0.0; 96]);
    }

    #[test]
    fn hand_counted_first_bin() {
        let t = SpikeTrain::new(0, vec![-190.0, -180.0, -150.0], &spec()).unwrap();
        let r = bin_firing_rates(&t, &spec()).unwrap();
        assert_eq!(r.len(), 96);
        assert_abs_diff_eq!(r[0], 2.0 / 0.048, epsilon = 1e-12);
        assert_abs_diff_eq!(r[0], 41.666_666_666, epsilon = 1e-6);
        // Bin 1 covers [-184, -136): -180 and -150.
        assert_abs_diff_eq!(r[1], 2.0 / 0.048, epsilon = 1e-12);
    }

    #[test]
    fn rejects_unsorted_and_out_of_range() {
        assert!(SpikeTrain::new(0, vec![5.0, 1.0], &spec()).is_err());
        assert!(SpikeTrain::new(0, vec![1.0, 1.0], &spec()).is_err());
        assert!(SpikeTrain::new(0, vec![-201.0], &spec()).is_err());
        assert!(SpikeTrain::new(0, vec![1368.5], &spec()).is_err());
        assert!(SpikeTrain::new(0, vec![-200.0, 1368.0], &spec()).is_ok());
    }

    #[test]
    fn matches_interval_count_oracle_on_random_trains() {
        use rand::{Rng, SeedableRng};
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let s = spec();
        for _ in 0..1000 {
            let n = r.random_range(0..80);
            let mut ts: Vec<f64> = (0..n)
                .map(|_| {
                    // Mix integer-aligned times (hitting bin edges) with continuous ones.
                    if r.random_bool(0.5) {
                        r.random_range(-200i32..=1368) as f64
                    } else {
                        r.random_range(-200.0..=1368.0)
                    }
                })
                .collect();
            ts.sort_by(f64::total_cmp);
            ts.dedup();
            let train = SpikeTrain::new(0, ts.clone(), &s).unwrap();
            assert_eq!(bin_firing_rates(&train, &s).unwrap(), brute_force_rates(&ts, &s));
        }
    }

    fn silent_trains() -> Vec<SpikeTrain> {
        (0..N_UNITS).map(SpikeTrain::empty).collect()
    }

    #[test]
    fn assemble_shapes_and_ordering() {
        let m = assemble_trial(&silent_trains(), &spec(), N_UNITS, 1, 0).unwrap();
        assert_eq!((m.n_units(), m.n_bins()), (64, 96));
        assert!(m.values().iter().all(|&v| v == 0.0));

        let mut trains = silent_trains();
        trains[17] = SpikeTrain::new(17, vec![0.0, 10.0, 500.0], &spec()).unwrap();
        let m = assemble_trial(&trains, &spec(), N_UNITS, 2, 9).unwrap();
        let nonzero: Vec<usize> = (0..64).filter(|&u| m.row(u).iter().any(|&v| v != 0.0)).collect();
        assert_eq!(nonzero, vec![17]);
        assert_eq!(m.label, 2);

        trains.reverse();
        let permuted = assemble_trial(&trains, &spec(), N_UNITS, 2, 9).unwrap();
        assert_eq!(permuted, m);
    }

    #[test]
    fn assemble_rejects_bad_unit_sets() {
        let mut trains = silent_trains();
        trains[5] = SpikeTrain::empty(4);
        assert!(assemble_trial(&trains, &spec(), N_UNITS, 0, 0).is_err());
        trains.pop();
        assert!(assemble_trial(&trains, &spec(), N_UNITS, 0, 0).is_err());
    }

    #[test]
    fn standardize_toy_matrix() {
        let m = TrialMatrix::from_values(2, 2, vec![1.0, 2.0, 3.0, 4.0], 0, 0).unwrap();
        let s = standardize(&m);
        assert!(!s.degenerate);
        let expected = [-1.341_640_786, -0.447_213_595, 0.447_213_595, 1.341_640_786];
        for (a, b) in s.matrix.values().iter().zip(expected) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn standardize_constant_matrix_is_flagged() {
        let m = TrialMatrix::from_values(3, 4, vec![7.5; 12], 0, 0).unwrap();
        let s = standardize(&m);
        assert!(s.degenerate);
        assert!(s.matrix.values().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn zero_variance_noise_shifts_by_mean() {
        let m = TrialMatrix::from_values(2, 3, vec![0.0, -1.0, 2.0, 0.5, 0.25, 3.0], 0, 0).unwrap();
        let cfg = GaussianNoise {
            mean: 1.0,
            variance: 0.0,
        };
        let out = add_gaussian_noise(&m, &cfg, &mut rng::stream(0, &[])).unwrap();
        for (a, b) in out.values().iter().zip(m.values()) {
            assert_eq!(*a, b + 1.0);
        }
    }

    #[test]
    fn noise_statistics_and_determinism() {
        let m = TrialMatrix::from_values(64, 96, vec![0.0; 6144], 0, 0).unwrap();
        let cfg = GaussianNoise::default();
        let a = add_gaussian_noise(&m, &cfg, &mut rng::stream(3, &[1])).unwrap();
        let b = add_gaussian_noise(&m, &cfg, &mut rng::stream(3, &[1])).unwrap();
        assert_eq!(a, b);
        let mean = a.values().iter().sum::<f64>() / 6144.0;
        let tol = 3.0 * cfg.variance.sqrt() / (6144f64).sqrt();
        assert!((mean - 1.0).abs() < tol, "mean {mean} tol {tol}");
        let (_, sd) = mean_std(a.values());
        assert!((sd * sd - 0.005).abs() < 0.0005, "var {}", sd * sd);
    }

    fn toy_dataset(n: usize) -> LabeledDataset {
        let mut ds = LabeledDataset::new(4, 8, vec!["a".into(), "b".into(), "c".into()]);
        for i in 0..n {
            let v: Vec<f32> = (0..32).map(|j| 1.0 + (i * 32 + j) as f32 * 0.01).collect();
            ds.push(&v, i % 3, None, i as u64, None).unwrap();
        }
        ds
    }

    #[test]
    fn dropout_rate_zero_duplicates() {
        let ds = toy_dataset(6);
        let aug = dropout_augment(&ds, 0.0, 2, 1).unwrap();
        assert_eq!(aug.len(), 18);
        for i in 6..18 {
            let parent = aug.parent_ids()[i].unwrap() as usize;
            assert_eq!(aug.sample(i), ds.sample(parent));
            assert_eq!(aug.labels()[i], ds.labels()[parent]);
        }
    }

    #[test]
    fn dropout_copies_zero_is_identity() {
        let ds = toy_dataset(5);
        assert_eq!(dropout_augment(&ds, 0.08, 0, 1).unwrap(), ds);
        assert!(dropout_augment(&ds, 1.0, 1, 1).is_err());
    }

    #[test]
    fn dropout_fraction_near_rate() {
        let ds = toy_dataset(300);
        let aug = dropout_augment(&ds, 0.08, 1, 11).unwrap();
        let total = 300 * 32;
        let zeroed = (300..600)
            .flat_map(|i| aug.sample(i).iter().copied())
            .filter(|&v| v == 0.0)
            .count();
        let p = zeroed as f64 / total as f64;
        let tol = 4.0 * (0.08 * 0.92 / total as f64).sqrt();
        assert!((p - 0.08).abs() < tol, "fraction {p}");
    }

    #[test]
    fn reads_spike_text() {
        let text = "trial_id,unit_id,timestamp_ms\n1,0,5.0\n1,0,-10\n2,3,100\n";
        let trials = read_spike_text(text.as_bytes(), &spec(), 4).unwrap();
        assert_eq!(trials.len(), 2);
        assert_eq!(trials[&1][0].timestamps(), &[-10.0, 5.0]);
        assert!(trials[&2][0].timestamps().is_empty());
        assert!(read_spike_text("1,9,0\n".as_bytes(), &spec(), 4).is_err());
        assert!(read_spike_text("1,0,0\n1,0,0\n".as_bytes(), &spec(), 4).is_err());
    }

    proptest! {
        #[test]
        fn standardize_moments_and_idempotence(
            vals in proptest::collection::vec(0.0f64..200.0, 12)
        ) {
            let m = TrialMatrix::from_values(3, 4, vals, 0, 0).unwrap();
            let s = standardize(&m);
            prop_assume!(!s.degenerate);
            let (mu, sd) = mean_std(s.matrix.values());
            prop_assert!(mu.abs() < 1e-9);
            prop_assert!((sd - 1.0).abs() < 1e-9);
            let twice = standardize(&s.matrix);
            for (a, b) in twice.matrix.values().iter().zip(s.matrix.values()) {
                prop_assert!((a - b).abs() < 1e-9);
            }
        }

        #[test]
        fn augmentation_scales_class_counts(copies in 0usize..4, n in 1usize..20) {
            let ds = toy_dataset(n);
            let aug = dropout_augment(&ds, 0.08, copies, 2).unwrap();
            let expect: Vec<usize> = ds.class_counts().iter().map(|c| c * (1 + copies)).collect();
            prop_assert_eq!(aug.class_counts(), expect);
        }
    }
}
