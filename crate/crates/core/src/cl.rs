//! Confident learning: out-of-fold probabilities from an auxiliary model,
//! per-class self-confidence thresholds, the confident joint and its
//! calibration, label-quality scores and label-error flags.

use std::fmt::Write as _;
use std::str::FromStr;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::mlp::{self, argmax, MlpConfig, NetConfig, ProbOutput};
use crate::rng::{self, tag};

/// Slack on the `p ≥ threshold` test so a probability equal to its class
/// mean is not lost to rounding in the mean.
pub const THRESHOLD_SLACK: f64 = 1e-6;

/// Out-of-fold probabilities, aligned with the rows they were computed for.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbMatrix {
    pub probs: ProbOutput,
    /// Evaluation fold of each row; the model that scored row `i` never saw it.
    pub fold_assignment: Vec<usize>,
}

impl ProbMatrix {
    pub fn n_samples(&self) -> usize {
        self.probs.n_samples()
    }

    pub fn n_classes(&self) -> usize {
        self.probs.n_classes()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.probs.row(i)
    }

    /// CSV with header `sample_id,fold,p0,...`.
    pub fn to_csv(&self, sample_ids: &[u64]) -> String {
        let m = self.n_classes();
        let mut out = String::from("sample_id,fold");
        for j in 0..m {
            write!(out, ",p{j}").unwrap();
        }
        out.push('\n');
        for (i, id) in sample_ids.iter().enumerate() {
            write!(out, "{id},{}", self.fold_assignment[i]).unwrap();
            for p in self.row(i) {
                write!(out, ",{p}").unwrap();
            }
            out.push('\n');
        }
        out
    }
}

/// Stratified fold ids for `labels`: members of each class are shuffled and
/// dealt round-robin, continuing the deal across classes so fold sizes differ
/// by at most one.
pub fn stratified_folds(labels: &[usize], n_classes: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    stratified_folds_named(labels, n_classes, k, seed, |c| format!("class {c}"))
}

pub(crate) fn stratified_folds_named(
    labels: &[usize],
    n_classes: usize,
    k: usize,
    seed: u64,
    name: impl Fn(usize) -> String,
) -> Result<Vec<usize>> {
    if k < 2 {
        return Err(Error::invalid(format!("need at least 2 folds, got {k}")));
    }
    let mut members = vec![Vec::new(); n_classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= n_classes {
            return Err(Error::invalid(format!("label {y} out of range")));
        }
        members[y].push(i);
    }
    for (c, m) in members.iter().enumerate() {
        if m.len() < k {
            return Err(Error::TooFewMembers {
                class: name(c),
                count: m.len(),
                needed: k,
            });
        }
    }
    let mut folds = vec![0; labels.len()];
    let mut dealt = 0usize;
    for (c, mut m) in members.into_iter().enumerate() {
        m.shuffle(&mut rng::stream(seed, &[tag::FOLDS, c as u64]));
        for i in m {
            folds[i] = dealt % k;
            dealt += 1;
        }
    }
    Ok(folds)
}

/// Trains the auxiliary model `k_folds` times, each time on all but one
/// stratified fold of `rows`, and scores the held-out fold.
pub fn out_of_fold_probs(
    ds: &LabeledDataset,
    rows: &[usize],
    aux: &MlpConfig,
    k_folds: usize,
    seed: u64,
) -> Result<ProbMatrix> {
    aux.validate()?;
    aux.check_dataset(ds)?;
    let labels: Vec<usize> = rows.iter().map(|&i| ds.labels()[i]).collect();
    let names = ds.class_names().to_vec();
    let folds = stratified_folds_named(&labels, ds.n_classes(), k_folds, seed, |c| {
        names.get(c).cloned().unwrap_or_else(|| c.to_string())
    })?;

    let per_fold: Vec<(Vec<usize>, ProbOutput)> = (0..k_folds)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..rows.len()).filter(|&p| folds[p] != f).map(|p| rows[p]).collect();
            let eval_pos: Vec<usize> = (0..rows.len()).filter(|&p| folds[p] == f).collect();
            let eval: Vec<usize> = eval_pos.iter().map(|&p| rows[p]).collect();
            let cfg = MlpConfig {
                seed: rng::derive_seed(seed, &[tag::AUX_MODEL, f as u64]),
                ..aux.clone()
            };
            let out = mlp::train_rows(&cfg, ds, &train, &vec![1.0; train.len()])?;
            let (_, probs) = mlp::predict_rows(&out.params, ds, &eval)?;
            Ok((eval_pos, probs))
        })
        .collect::<Result<_>>()?;

    let mut probs = Array2::zeros((rows.len(), ds.n_classes()));
    for (eval_pos, p) in per_fold {
        for (r, &pos) in eval_pos.iter().enumerate() {
            probs.row_mut(pos).assign(&p.0.row(r));
        }
    }
    Ok(ProbMatrix {
        probs: ProbOutput(probs),
        fold_assignment: folds,
    })
}

/// `t[j]` = mean predicted probability of class `j` over samples labeled `j`.
pub fn class_thresholds(pm: &ProbMatrix, labels: &[usize]) -> Result<Vec<f64>> {
    let m = pm.n_classes();
    check_labels(pm, labels)?;
    let mut sum = vec![0.0; m];
    let mut count = vec![0usize; m];
    for (i, &y) in labels.iter().enumerate() {
        sum[y] += pm.row(i)[y];
        count[y] += 1;
    }
    if let Some(c) = count.iter().position(|&c| c == 0) {
        return Err(Error::TooFewMembers {
            class: format!("class {c}"),
            count: 0,
            needed: 1,
        });
    }
    Ok(sum.iter().zip(&count).map(|(s, &c)| s / c as f64).collect())
}

fn check_labels(pm: &ProbMatrix, labels: &[usize]) -> Result<()> {
    if labels.len() != pm.n_samples() {
        return Err(Error::shape(pm.n_samples(), labels.len()));
    }
    if let Some(&y) = labels.iter().find(|&&y| y >= pm.n_classes()) {
        return Err(Error::invalid(format!("label {y} out of range")));
    }
    Ok(())
}

/// Counts of confidently assigned `(given, estimated true)` label pairs and
/// their calibrated joint distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfidentJoint {
    pub counts: Vec<Vec<u64>>,
    /// Row `y` rescaled to the number of samples labeled `y`, then
    /// normalized to total 1.
    pub calibrated: Vec<Vec<f64>>,
    /// Samples with no class above its threshold.
    pub excluded: usize,
}

impl ConfidentJoint {
    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }
}

/// Estimated true class of row `i`: the most probable class among those at or
/// above their threshold, or `None` when no class qualifies.
pub fn confident_class(probs: &[f64], thresholds: &[f64]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (j, (&p, &t)) in probs.iter().zip(thresholds).enumerate() {
        if p >= t - THRESHOLD_SLACK && best.is_none_or(|b| p > probs[b]) {
            best = Some(j);
        }
    }
    best
}

pub fn confident_joint(pm: &ProbMatrix, labels: &[usize], thresholds: &[f64]) -> Result<ConfidentJoint> {
    check_labels(pm, labels)?;
    let m = pm.n_classes();
    if thresholds.len() != m {
        return Err(Error::shape(m, thresholds.len()));
    }
    let mut counts = vec![vec![0u64; m]; m];
    let mut excluded = 0;
    let mut label_counts = vec![0u64; m];
    for (i, &y) in labels.iter().enumerate() {
        label_counts[y] += 1;
        match confident_class(pm.row(i), thresholds) {
            Some(j) => counts[y][j] += 1,
            None => excluded += 1,
        }
    }
    let calibrated = calibrate(&counts, &label_counts);
    Ok(ConfidentJoint {
        counts,
        calibrated,
        excluded,
    })
}

/// Rescales each row of `counts` to its class size and normalizes to a joint
/// distribution. A class with no confident samples keeps its mass on the
/// diagonal.
pub fn calibrate(counts: &[Vec<u64>], label_counts: &[u64]) -> Vec<Vec<f64>> {
    let m = counts.len();
    let mut cal = vec![vec![0.0; m]; m];
    for (y, row) in counts.iter().enumerate() {
        let row_sum: u64 = row.iter().sum();
        if row_sum == 0 {
            cal[y][y] = label_counts[y] as f64;
        } else {
            for (j, &c) in row.iter().enumerate() {
                cal[y][j] = c as f64 / row_sum as f64 * label_counts[y] as f64;
            }
        }
    }
    let total: f64 = cal.iter().flatten().sum();
    if total > 0.0 {
        cal.iter_mut().flatten().for_each(|v| *v /= total);
    }
    cal
}

/// Per-sample label-quality score; higher means the label is more trustworthy.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QualityScore {
    /// `p[y] − max_{j≠y} p[j]`, in `[−1, 1]`.
    #[default]
    NormalizedMargin,
    /// `p[y]`.
    SelfConfidence,
}

impl FromStr for QualityScore {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normalized_margin" | "margin" => Ok(Self::NormalizedMargin),
            "self_confidence" => Ok(Self::SelfConfidence),
            other => Err(Error::invalid(format!("unknown quality score {other:?}"))),
        }
    }
}

pub fn rank_label_quality(pm: &ProbMatrix, labels: &[usize], score: QualityScore) -> Result<Vec<f64>> {
    check_labels(pm, labels)?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let p = pm.row(i);
            match score {
                QualityScore::SelfConfidence => p[y],
                QualityScore::NormalizedMargin => {
                    let other = p
                        .iter()
                        .enumerate()
                        .filter(|&(j, _)| j != y)
                        .map(|(_, &v)| v)
                        .fold(f64::NEG_INFINITY, f64::max);
                    p[y] - other
                }
            }
        })
        .collect())
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum PruneMethod {
    /// For each off-diagonal cell `(i, j)` flag the `round(n · Q̂[i][j])`
    /// lowest-quality samples labeled `i` whose argmax is `j`.
    #[default]
    ByNoiseRate,
    /// Flag the `round(fraction · n)` lowest-quality samples overall.
    ByRankFraction { fraction: f64 },
}

impl FromStr for PruneMethod {
    type Err = Error;
    /// `by_noise_rate` or `by_rank_fraction:<fraction>`.
    fn from_str(s: &str) -> Result<Self> {
        if s == "by_noise_rate" {
            return Ok(Self::ByNoiseRate);
        }
        if let Some(f) = s.strip_prefix("by_rank_fraction:") {
            let fraction = f
                .parse()
                .map_err(|_| Error::invalid(format!("bad rank fraction {f:?}")))?;
            return Ok(Self::ByRankFraction { fraction });
        }
        Err(Error::invalid(format!("unknown prune method {s:?}")))
    }
}

/// Indices sorted by ascending quality, ties by index.
pub fn ascending_quality(q: &[f64], candidates: impl IntoIterator<Item = usize>) -> Vec<usize> {
    let mut idx: Vec<usize> = candidates.into_iter().collect();
    idx.sort_by(|&a, &b| q[a].total_cmp(&q[b]).then(a.cmp(&b)));
    idx
}

pub fn flag_errors(
    cj: &ConfidentJoint,
    pm: &ProbMatrix,
    q: &[f64],
    labels: &[usize],
    method: PruneMethod,
) -> Result<Vec<bool>> {
    check_labels(pm, labels)?;
    let n = labels.len();
    if q.len() != n {
        return Err(Error::shape(n, q.len()));
    }
    let mut flags = vec![false; n];
    match method {
        PruneMethod::ByRankFraction { fraction } => {
            if !(0.0..=1.0).contains(&fraction) {
                return Err(Error::invalid(format!("rank fraction {fraction} outside [0, 1]")));
            }
            let budget = (fraction * n as f64).round() as usize;
            for i in ascending_quality(q, 0..n).into_iter().take(budget) {
                flags[i] = true;
            }
        }
        PruneMethod::ByNoiseRate => {
            let m = pm.n_classes();
            let predicted = pm.probs.argmax();
            for given in 0..m {
                for est in (0..m).filter(|&j| j != given) {
                    let budget = (n as f64 * cj.calibrated[given][est]).round() as usize;
                    if budget == 0 {
                        continue;
                    }
                    let cell = (0..n).filter(|&i| labels[i] == given && predicted[i] == est);
                    for i in ascending_quality(q, cell).into_iter().take(budget) {
                        flags[i] = true;
                    }
                }
            }
        }
    }
    Ok(flags)
}

/// Quality scores plus suspected label errors.
#[derive(Debug, Clone, PartialEq)]
pub struct QualityVector {
    pub q: Vec<f64>,
    pub flags: Vec<bool>,
}

impl QualityVector {
    pub fn n_flagged(&self) -> usize {
        self.flags.iter().filter(|&&f| f).count()
    }

    /// CSV with header `sample_id,q,flag`.
    pub fn to_csv(&self, sample_ids: &[u64]) -> String {
        let mut out = String::from("sample_id,q,flag\n");
        for ((id, q), f) in sample_ids.iter().zip(&self.q).zip(&self.flags) {
            writeln!(out, "{id},{q},{}", *f as u8).unwrap();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClConfig {
    pub k_folds: usize,
    pub score: QualityScore,
    pub method: PruneMethod,
    /// Auxiliary model; input and output widths come from the dataset.
    pub aux: NetConfig,
}

impl Default for ClConfig {
    fn default() -> Self {
        Self {
            k_folds: 5,
            score: QualityScore::default(),
            method: PruneMethod::default(),
            aux: NetConfig::auxiliary(),
        }
    }
}

/// Everything the label-quality stage produces for a set of rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ClReport {
    pub probs: ProbMatrix,
    pub thresholds: Vec<f64>,
    pub joint: ConfidentJoint,
    pub quality: QualityVector,
}

impl ClReport {
    /// Rows whose auxiliary-model argmax equals the given label.
    pub fn agrees(&self, labels: &[usize]) -> Vec<bool> {
        (0..labels.len())
            .map(|i| argmax(self.probs.row(i)) == labels[i])
            .collect()
    }
}

/// Runs the full label-quality stage on `rows` of `ds`. Outputs are aligned
/// with `rows`.
pub fn run(ds: &LabeledDataset, rows: &[usize], cfg: &ClConfig, seed: u64) -> Result<ClReport> {
    let labels: Vec<usize> = rows.iter().map(|&i| ds.labels()[i]).collect();
    let probs = out_of_fold_probs(ds, rows, &cfg.aux.for_dataset(ds, seed), cfg.k_folds, seed)?;
    let thresholds = class_thresholds(&probs, &labels)?;
    let joint = confident_joint(&probs, &labels, &thresholds)?;
    let q = rank_label_quality(&probs, &labels, cfg.score)?;
    let flags = flag_errors(&joint, &probs, &q, &labels, cfg.method)?;
    Ok(ClReport {
        probs,
        thresholds,
        joint,
        quality: QualityVector { q, flags },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;

    fn pm(rows: Array2<f64>) -> ProbMatrix {
        let n = rows.nrows();
        ProbMatrix {
            probs: ProbOutput(rows),
            fold_assignment: vec![0; n],
        }
    }

    fn four() -> (ProbMatrix, Vec<usize>) {
        (
            pm(array![[0.9, 0.1], [0.6, 0.4], [0.2, 0.8], [0.4, 0.6]]),
            vec![0, 0, 1, 1],
        )
    }

    #[test]
    fn hand_thresholds() {
        let (p, y) = four();
        let t = class_thresholds(&p, &y).unwrap();
        assert_abs_diff_eq!(t[0], 0.75, epsilon = 1e-12);
        assert_abs_diff_eq!(t[1], 0.7, epsilon = 1e-12);
    }

    #[test]
    fn thresholds_for_one_hot_and_uniform() {
        let p = pm(array![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);
        assert_eq!(class_thresholds(&p, &[0, 1, 2]).unwrap(), vec![1.0; 3]);
        let u = pm(Array2::from_elem((6, 3), 1.0 / 3.0));
        for t in class_thresholds(&u, &[0, 1, 2, 0, 1, 2]).unwrap() {
            assert_abs_diff_eq!(t, 1.0 / 3.0, epsilon = 1e-15);
        }
        assert!(matches!(
            class_thresholds(&u, &[0, 1, 0, 0, 1, 0]),
            Err(Error::TooFewMembers { .. })
        ));
    }

    #[test]
    fn hand_traced_joint() {
        let (p, y) = four();
        let t = class_thresholds(&p, &y).unwrap();
        let cj = confident_joint(&p, &y, &t).unwrap();
        assert_eq!(cj.counts, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(cj.excluded, 2);

        // A fifth sample labeled 0 but confidently class 1, scored against
        // the same thresholds.
        let p5 = pm(array![[0.9, 0.1], [0.6, 0.4], [0.2, 0.8], [0.4, 0.6], [0.2, 0.8]]);
        let cj = confident_joint(&p5, &[0, 0, 1, 1, 0], &t).unwrap();
        assert_eq!(cj.counts, vec![vec![1, 1], vec![0, 1]]);
    }

    #[test]
    fn clean_predictions_give_diagonal_joint_and_no_flags() {
        let p = pm(array![[0.95, 0.05], [0.9, 0.1], [0.1, 0.9], [0.2, 0.8]]);
        let y = [0, 0, 1, 1];
        let t = class_thresholds(&p, &y).unwrap();
        let cj = confident_joint(&p, &y, &t).unwrap();
        assert_eq!(cj.counts[0][1] + cj.counts[1][0], 0);
        let q = rank_label_quality(&p, &y, QualityScore::NormalizedMargin).unwrap();
        let flags = flag_errors(&cj, &p, &q, &y, PruneMethod::ByNoiseRate).unwrap();
        assert!(flags.iter().all(|f| !f));
    }

    #[test]
    fn quality_scores() {
        let p = pm(array![[1.0, 0.0, 0.0], [1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]]);
        let q = rank_label_quality(&p, &[0, 1], QualityScore::NormalizedMargin).unwrap();
        assert_eq!(q, vec![1.0, 0.0]);
        let p = pm(array![[0.2, 0.8]]);
        let q = rank_label_quality(&p, &[0], QualityScore::NormalizedMargin).unwrap();
        assert_abs_diff_eq!(q[0], -0.6, epsilon = 1e-12);
        let q = rank_label_quality(&p, &[0], QualityScore::SelfConfidence).unwrap();
        assert_eq!(q, vec![0.2]);
    }

    #[test]
    fn rank_fraction_forces_count() {
        let n = 100;
        let rows = Array2::from_shape_fn((n, 2), |(i, j)| {
            let a = (i as f64 + 0.5) / n as f64;
            if j == 0 {
                a
            } else {
                1.0 - a
            }
        });
        let p = pm(rows);
        let y = vec![0; n];
        let q = rank_label_quality(&p, &y, QualityScore::NormalizedMargin).unwrap();
        let cj = ConfidentJoint {
            counts: vec![vec![0; 2]; 2],
            calibrated: vec![vec![1.0, 0.0], vec![0.0, 0.0]],
            excluded: 0,
        };
        let flags = flag_errors(&cj, &p, &q, &y, PruneMethod::ByRankFraction { fraction: 0.1 }).unwrap();
        assert_eq!(flags.iter().filter(|&&f| f).count(), 10);
        assert!(flags[..10].iter().all(|&f| f));
    }

    #[test]
    fn noise_rate_budget_per_cell() {
        // Labels all 0; three samples predicted class 1 with decreasing margin.
        let p = pm(array![[0.9, 0.1], [0.8, 0.2], [0.3, 0.7], [0.1, 0.9], [0.45, 0.55]]);
        let y = [0, 0, 0, 0, 0];
        let q = rank_label_quality(&p, &y, QualityScore::NormalizedMargin).unwrap();
        let cj = ConfidentJoint {
            counts: vec![vec![0; 2]; 2],
            calibrated: vec![vec![0.6, 0.4], vec![0.0, 0.0]],
            excluded: 0,
        };
        let flags = flag_errors(&cj, &p, &q, &y, PruneMethod::ByNoiseRate).unwrap();
        assert_eq!(flags, vec![false, false, true, true, false]);
    }

    #[test]
    fn parses_methods() {
        assert_eq!(
            "by_noise_rate".parse::<PruneMethod>().unwrap(),
            PruneMethod::ByNoiseRate
        );
        assert_eq!(
            "by_rank_fraction:0.25".parse::<PruneMethod>().unwrap(),
            PruneMethod::ByRankFraction { fraction: 0.25 }
        );
        assert!("by_magic".parse::<PruneMethod>().is_err());
        assert!(serde_json::from_str::<PruneMethod>(r#"{"kind":"by_magic"}"#).is_err());
    }

    #[test]
    fn folds_are_stratified_disjoint_cover() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 3).collect();
        let folds = stratified_folds(&labels, 3, 5, 4).unwrap();
        for f in 0..5 {
            let members: Vec<usize> = (0..1000).filter(|&i| folds[i] == f).collect();
            assert_eq!(members.len(), 200);
            for c in 0..3 {
                let k = members.iter().filter(|&&i| labels[i] == c).count();
                assert!((66..=67).contains(&k), "fold {f} class {c}: {k}");
            }
        }
        let short = vec![0, 0, 0, 1, 1, 1, 1, 1, 1];
        let err = stratified_folds(&short, 2, 4, 0).unwrap_err();
        assert!(err.to_string().contains("class 0"), "{err}");
    }

    #[test]
    fn calibration_handles_empty_rows() {
        let cal = calibrate(&[vec![0, 0], vec![1, 3]], &[4, 4]);
        assert_eq!(cal, vec![vec![0.5, 0.0], vec![0.125, 0.375]]);
    }

    fn random_instance() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
        (2usize..=4, 2usize..=20).prop_flat_map(|(m, n)| {
            (
                proptest::collection::vec(proptest::collection::vec(0.01f64..1.0, m), n),
                proptest::collection::vec(0..m, n),
            )
        })
    }

    fn to_pm(raw: &[Vec<f64>]) -> ProbMatrix {
        let m = raw[0].len();
        let mut a = Array2::zeros((raw.len(), m));
        for (i, r) in raw.iter().enumerate() {
            let s: f64 = r.iter().sum();
            for j in 0..m {
                a[[i, j]] = r[j] / s;
            }
        }
        pm(a)
    }

    proptest! {
        #[test]
        fn raising_thresholds_shrinks_joint((raw, labels) in random_instance(), bump in 0.0f64..0.3) {
            let p = to_pm(&raw);
            let m = p.n_classes();
            prop_assume!((0..m).all(|c| labels.contains(&c)));
            let t = class_thresholds(&p, &labels).unwrap();
            let cj = confident_joint(&p, &labels, &t).unwrap();
            let hi: Vec<f64> = t.iter().map(|v| v + bump).collect();
            let cj_hi = confident_joint(&p, &labels, &hi).unwrap();
            prop_assert!(cj_hi.total() <= cj.total());
            prop_assert!(cj.total() as usize + cj.excluded == labels.len());
            let s: f64 = cj.calibrated.iter().flatten().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
            prop_assert!(cj.calibrated.iter().flatten().all(|&v| v >= 0.0));
        }

        #[test]
        fn permutation_equivariance((raw, labels) in random_instance(), seed in any::<u64>()) {
            let p = to_pm(&raw);
            let m = p.n_classes();
            prop_assume!((0..m).all(|c| labels.contains(&c)));
            let n = labels.len();
            let mut perm: Vec<usize> = (0..n).collect();
            perm.shuffle(&mut rng::stream(seed, &[]));

            let run = |p: &ProbMatrix, y: &[usize]| {
                let t = class_thresholds(p, y).unwrap();
                let cj = confident_joint(p, y, &t).unwrap();
                let q = rank_label_quality(p, y, QualityScore::NormalizedMargin).unwrap();
                let f = flag_errors(&cj, p, &q, y, PruneMethod::ByNoiseRate).unwrap();
                (q, f)
            };
            let (q, f) = run(&p, &labels);
            let pp = pm(Array2::from_shape_fn((n, m), |(i, j)| p.row(perm[i])[j]));
            let yp: Vec<usize> = perm.iter().map(|&i| labels[i]).collect();
            let (qp, fp) = run(&pp, &yp);
            // Distinct q values keep the ordering free of index tie-breaks.
            let mut sorted = q.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assume!(sorted.windows(2).all(|w| w[0] != w[1]));
            for i in 0..n {
                prop_assert_eq!(qp[i], q[perm[i]]);
                prop_assert_eq!(fp[i], f[perm[i]]);
            }
        }
    }
}
