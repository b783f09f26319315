//! Experiment protocols: stratified k-fold cross-validation, reliable
//! balanced test sets, mode comparisons and pruning-ratio ablations against a
//! random-removal baseline.
//!
//! Every job derives its own random stream from the master seed and its
//! coordinates (fold, seed index, ratio index), so jobs run in parallel and
//! aggregate to the same numbers regardless of scheduling.

pub mod report;
pub mod results;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cl::{self, ClConfig, ClReport};
use crate::dataset::LabeledDataset;
use crate::error::{Error, Result};
use crate::metrics::{compute_metrics, MeanSd, Metrics};
use crate::mlp::{self, NetConfig, TrainOutput};
use crate::rng::{self, tag};
use crate::weighting::{self, Mode, WeightVector};

/// Something that can be fit on some rows and predict others.
pub trait Decoder: Sync {
    fn fit_predict(&self, ds: &LabeledDataset, train: &[usize], eval: &[usize], seed: u64) -> Result<Vec<usize>>;
}

/// The label-quality stage feeding the main classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub mode: Mode,
    pub classifier: NetConfig,
    pub cl: ClConfig,
    /// Rescale reweighting weights to mean 1.
    pub renormalize_weights: bool,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Baseline,
            classifier: NetConfig::classifier(),
            cl: ClConfig::default(),
            renormalize_weights: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FitOutput {
    pub train: TrainOutput,
    pub weights: WeightVector,
    pub cl: Option<ClReport>,
}

/// Label-quality stage plus weighted classifier training.
#[derive(Debug, Clone, Default)]
pub struct EmoNet {
    pub config: PipelineConfig,
}

impl EmoNet {
    pub fn new(config: PipelineConfig) -> Self {
        Self { config }
    }

    /// Seed of the main classifier; independent of the mode so that modes
    /// share initialization and batch order.
    pub fn classifier_seed(seed: u64) -> u64 {
        rng::derive_seed(seed, &[tag::INIT])
    }

    pub fn cl_seed(seed: u64) -> u64 {
        rng::derive_seed(seed, &[tag::AUX_MODEL])
    }

    /// Runs the label-quality stage on `rows` (unless in baseline mode) and
    /// trains the classifier with the resulting weights.
    pub fn fit(&self, ds: &LabeledDataset, rows: &[usize], seed: u64) -> Result<FitOutput> {
        let (weights, report) = match self.config.mode {
            Mode::Baseline => (WeightVector::baseline(rows.len()), None),
            mode => {
                let report = cl::run(ds, rows, &self.config.cl, Self::cl_seed(seed))?;
                let w = weighting::weights_for(
                    mode,
                    &report.quality.q,
                    &report.quality.flags,
                    self.config.renormalize_weights,
                )?;
                (w, Some(report))
            }
        };
        let cfg = self.config.classifier.for_dataset(ds, Self::classifier_seed(seed));
        let train = mlp::train_rows(&cfg, ds, rows, &weights.weights)?;
        Ok(FitOutput {
            train,
            weights,
            cl: report,
        })
    }
}

impl Decoder for EmoNet {
    fn fit_predict(&self, ds: &LabeledDataset, train: &[usize], eval: &[usize], seed: u64) -> Result<Vec<usize>> {
        let fit = self.fit(ds, train, seed)?;
        Ok(mlp::predict_rows(&fit.train.params, ds, eval)?.0)
    }
}

/// Scores predictions for `rows` against the observed labels and, when the
/// dataset has them, the hidden true labels.
pub fn score_rows(ds: &LabeledDataset, rows: &[usize], predictions: &[usize]) -> Result<(Metrics, Option<Metrics>)> {
    let m = ds.n_classes();
    let given: Vec<usize> = rows.iter().map(|&i| ds.labels()[i]).collect();
    let observed = compute_metrics(predictions, &given, m)?;
    let truth = match ds.true_labels() {
        Some(t) => {
            let t: Vec<usize> = rows.iter().map(|&i| t[i]).collect();
            Some(compute_metrics(predictions, &t, m)?)
        }
        None => None,
    };
    Ok((observed, truth))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub n_train: usize,
    pub n_eval: usize,
    pub metrics: Metrics,
    pub true_label_metrics: Option<Metrics>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    pub accuracy: MeanSd,
    pub macro_f1: MeanSd,
    pub fold_assignment: Vec<usize>,
}

/// Stratified k-fold cross-validation. The decoder only ever sees the
/// training folds, so any label-quality estimate is fit without the
/// evaluation fold.
pub fn k_fold_cv(ds: &LabeledDataset, decoder: &dyn Decoder, k: usize, seed: u64) -> Result<CvReport> {
    let names = ds.class_names().to_vec();
    let folds = cl::stratified_folds_named(
        ds.labels(),
        ds.n_classes(),
        k,
        rng::derive_seed(seed, &[tag::FOLDS]),
        |c| names[c].clone(),
    )?;
    let results: Vec<FoldResult> = (0..k)
        .into_par_iter()
        .map(|f| {
            let (eval, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| folds[i] == f);
            let preds = decoder.fit_predict(ds, &train, &eval, rng::derive_seed(seed, &[f as u64]))?;
            let (metrics, true_label_metrics) = score_rows(ds, &eval, &preds)?;
            Ok(FoldResult {
                fold: f,
                n_train: train.len(),
                n_eval: eval.len(),
                metrics,
                true_label_metrics,
            })
        })
        .collect::<Result<_>>()?;
    let acc: Vec<f64> = results.iter().map(|r| r.metrics.accuracy).collect();
    let f1: Vec<f64> = results.iter().map(|r| r.metrics.macro_f1).collect();
    Ok(CvReport {
        accuracy: MeanSd::of(&acc),
        macro_f1: MeanSd::of(&f1),
        folds: results,
        fold_assignment: folds,
    })
}

/// Ten-fold cross-validation.
pub fn ten_fold_cv(ds: &LabeledDataset, decoder: &dyn Decoder, seed: u64) -> Result<CvReport> {
    k_fold_cv(ds, decoder, 10, seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestSplit {
    pub test: Vec<usize>,
    pub train: Vec<usize>,
}

/// Samples a class-balanced test set from the "relatively reliable" samples:
/// not flagged, and the auxiliary model's argmax agrees with the label.
/// `report` must cover every row of `ds` in order.
pub fn build_reliable_test_set(
    ds: &LabeledDataset,
    report: &ClReport,
    per_class: usize,
    seed: u64,
) -> Result<TestSplit> {
    if report.quality.flags.len() != ds.len() {
        return Err(Error::shape(ds.len(), report.quality.flags.len()));
    }
    let labels = ds.labels();
    let agrees = report.agrees(labels);
    let mut in_test = vec![false; ds.len()];
    for c in 0..ds.n_classes() {
        let mut pool: Vec<usize> = (0..ds.len())
            .filter(|&i| labels[i] == c && agrees[i] && !report.quality.flags[i])
            .collect();
        if pool.len() < per_class {
            return Err(Error::TooFewMembers {
                class: ds.class_names()[c].clone(),
                count: pool.len(),
                needed: per_class,
            });
        }
        pool.shuffle(&mut rng::stream(seed, &[tag::TEST_SET, c as u64]));
        for &i in &pool[..per_class] {
            in_test[i] = true;
        }
    }
    let (test, train) = (0..ds.len()).partition(|&i| in_test[i]);
    Ok(TestSplit { test, train })
}

/// Label-quality stage on the full dataset followed by a reliable split.
pub fn prepare_reliable_split(
    ds: &LabeledDataset,
    cl_cfg: &ClConfig,
    per_class: usize,
    seed: u64,
) -> Result<(ClReport, TestSplit)> {
    let rows: Vec<usize> = (0..ds.len()).collect();
    let report = cl::run(ds, &rows, cl_cfg, EmoNet::cl_seed(seed))?;
    let split = build_reliable_test_set(ds, &report, per_class, seed)?;
    Ok((report, split))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeResult {
    pub mode: Mode,
    pub n_effective: usize,
    pub metrics: Metrics,
    pub true_label_metrics: Option<Metrics>,
}

/// Trains the classifier in one mode on `split.train` and scores it on
/// `split.test`. Quality scores and flags come from `report` (covering all
/// rows of `ds`), restricted to the training rows.
pub fn fit_mode(
    ds: &LabeledDataset,
    report: &ClReport,
    split: &TestSplit,
    mode: Mode,
    classifier: &NetConfig,
    renormalize: bool,
    seed: u64,
) -> Result<(TrainOutput, WeightVector, ModeResult)> {
    if report.quality.q.len() != ds.len() {
        return Err(Error::shape(ds.len(), report.quality.q.len()));
    }
    let q: Vec<f64> = split.train.iter().map(|&i| report.quality.q[i]).collect();
    let flags: Vec<bool> = split.train.iter().map(|&i| report.quality.flags[i]).collect();
    let w = weighting::weights_for(mode, &q, &flags, renormalize)?;
    let cfg = classifier.for_dataset(ds, EmoNet::classifier_seed(seed));
    let out = mlp::train_rows(&cfg, ds, &split.train, &w.weights)?;
    let (preds, _) = mlp::predict_rows(&out.params, ds, &split.test)?;
    let (metrics, true_label_metrics) = score_rows(ds, &split.test, &preds)?;
    let result = ModeResult {
        mode,
        n_effective: w.n_effective(),
        metrics,
        true_label_metrics,
    };
    Ok((out, w, result))
}

/// [`fit_mode`] for each of `modes`, in parallel. All modes share
/// initialization and batch order.
pub fn compare_modes(
    ds: &LabeledDataset,
    report: &ClReport,
    split: &TestSplit,
    modes: &[Mode],
    classifier: &NetConfig,
    renormalize: bool,
    seed: u64,
) -> Result<Vec<ModeResult>> {
    modes
        .par_iter()
        .map(|&mode| Ok(fit_mode(ds, report, split, mode, classifier, renormalize, seed)?.2))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AblationConfig {
    pub ratios: Vec<f64>,
    pub seeds: usize,
    pub classifier: NetConfig,
    /// Train once when both arms remove the same set (ratio 0).
    pub share_identical_arms: bool,
}

impl Default for AblationConfig {
    fn default() -> Self {
        Self {
            ratios: (0..=10).map(|i| i as f64 * 0.05).collect(),
            seeds: 5,
            classifier: NetConfig::classifier(),
            share_identical_arms: true,
        }
    }
}

impl AblationConfig {
    pub const MAX_RATIO: f64 = 0.6;

    pub fn validate(&self) -> Result<()> {
        if self.seeds == 0 {
            return Err(Error::invalid("ablation needs at least one seed"));
        }
        if self.ratios.is_empty() {
            return Err(Error::invalid("ablation needs at least one ratio"));
        }
        if let Some(r) = self.ratios.iter().find(|r| !(0.0..=Self::MAX_RATIO).contains(*r)) {
            return Err(Error::invalid(format!(
                "pruning ratio {r} outside [0, {}]",
                Self::MAX_RATIO
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmResult {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub true_accuracy: Option<f64>,
    /// Removed samples whose observed label was wrong (synthetic data only).
    pub removed_label_errors: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedPair {
    pub seed_index: usize,
    pub cl: ArmResult,
    pub random: ArmResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationPoint {
    pub ratio: f64,
    pub n_removed: usize,
    pub acc_cl: MeanSd,
    pub acc_random: MeanSd,
    pub f1_cl: MeanSd,
    pub f1_random: MeanSd,
    pub seed_count: usize,
    pub per_seed: Vec<SeedPair>,
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Arm {
    Cl,
    Random,
}

/// For every ratio `r` and seed: removes the `round(r·n)` lowest-quality
/// training rows (CL arm) or as many uniformly random rows (random arm),
/// trains identically configured classifiers and scores both on `test`.
///
/// `quality` is aligned with `train`. Within a seed both arms and all ratios
/// share classifier initialization and batch order; only the removed set
/// differs. Removed rows are masked with weight 0.
pub fn ablation_sweep(
    ds: &LabeledDataset,
    train: &[usize],
    quality: &[f64],
    test: &[usize],
    cfg: &AblationConfig,
    seed: u64,
) -> Result<Vec<AblationPoint>> {
    cfg.validate()?;
    if quality.len() != train.len() {
        return Err(Error::shape(train.len(), quality.len()));
    }
    let n = train.len();
    let by_quality = cl::ascending_quality(quality, 0..n);

    // Removal masks per (seed, ratio, arm), validated up front.
    let mut masks: Vec<Vec<(Vec<bool>, Vec<bool>)>> = Vec::with_capacity(cfg.seeds);
    for s in 0..cfg.seeds {
        let mut per_ratio = Vec::with_capacity(cfg.ratios.len());
        for (ri, &r) in cfg.ratios.iter().enumerate() {
            let k = (r * n as f64).round() as usize;
            let mut cl_mask = vec![false; n];
            by_quality[..k].iter().for_each(|&p| cl_mask[p] = true);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut rng::stream(seed, &[tag::RANDOM_PRUNE, s as u64, ri as u64]));
            let mut rand_mask = vec![false; n];
            order[..k].iter().for_each(|&p| rand_mask[p] = true);
            for mask in [&cl_mask, &rand_mask] {
                check_classes_survive(ds, train, mask, r)?;
            }
            per_ratio.push((cl_mask, rand_mask));
        }
        masks.push(per_ratio);
    }

    let mut jobs = Vec::new();
    for s in 0..cfg.seeds {
        for ri in 0..cfg.ratios.len() {
            jobs.push((s, ri, Arm::Cl));
            let (a, b) = &masks[s][ri];
            if !(cfg.share_identical_arms && a == b) {
                jobs.push((s, ri, Arm::Random));
            }
        }
    }
    let results: Vec<ArmResult> = jobs
        .par_iter()
        .map(|&(s, ri, arm)| {
            let (cl_mask, rand_mask) = &masks[s][ri];
            let mask = if arm == Arm::Cl { cl_mask } else { rand_mask };
            let weights: Vec<f64> = mask.iter().map(|&gone| if gone { 0.0 } else { 1.0 }).collect();
            let mcfg = cfg
                .classifier
                .for_dataset(ds, rng::derive_seed(seed, &[tag::INIT, s as u64]));
            let out = mlp::train_rows(&mcfg, ds, train, &weights)?;
            let (preds, _) = mlp::predict_rows(&out.params, ds, test)?;
            let (metrics, truth) = score_rows(ds, test, &preds)?;
            let removed_label_errors = ds.true_labels().map(|t| {
                (0..n)
                    .filter(|&p| mask[p] && t[train[p]] != ds.labels()[train[p]])
                    .count()
            });
            Ok(ArmResult {
                accuracy: metrics.accuracy,
                macro_f1: metrics.macro_f1,
                true_accuracy: truth.map(|m| m.accuracy),
                removed_label_errors,
            })
        })
        .collect::<Result<_>>()?;

    let mut lookup = std::collections::HashMap::new();
    for (job, res) in jobs.iter().zip(results) {
        lookup.insert(*job, res);
    }
    let points = cfg
        .ratios
        .iter()
        .enumerate()
        .map(|(ri, &ratio)| {
            let per_seed: Vec<SeedPair> = (0..cfg.seeds)
                .map(|s| {
                    let cl = lookup[&(s, ri, Arm::Cl)].clone();
                    let random = lookup.get(&(s, ri, Arm::Random)).cloned().unwrap_or_else(|| cl.clone());
                    SeedPair {
                        seed_index: s,
                        cl,
                        random,
                    }
                })
                .collect();
            let pick = |f: &dyn Fn(&SeedPair) -> f64| MeanSd::of(&per_seed.iter().map(f).collect::<Vec<_>>());
            AblationPoint {
                ratio,
                n_removed: (ratio * n as f64).round() as usize,
                acc_cl: pick(&|p| p.cl.accuracy),
                acc_random: pick(&|p| p.random.accuracy),
                f1_cl: pick(&|p| p.cl.macro_f1),
                f1_random: pick(&|p| p.random.macro_f1),
                seed_count: cfg.seeds,
                per_seed,
            }
        })
        .collect();
    Ok(points)
}

fn check_classes_survive(ds: &LabeledDataset, train: &[usize], removed: &[bool], ratio: f64) -> Result<()> {
    let mut left = vec![0usize; ds.n_classes()];
    for (p, &i) in train.iter().enumerate() {
        if !removed[p] {
            left[ds.labels()[i]] += 1;
        }
    }
    if let Some(c) = left.iter().position(|&k| k == 0) {
        return Err(Error::invalid(format!(
            "pruning ratio {ratio} removes every training sample of class {}",
            ds.class_names()[c]
        )));
    }
    Ok(())
}

/// Plot data with header `ratio,mean_cl,sd_cl,mean_rand,sd_rand`.
pub fn ablation_csv(points: &[AblationPoint]) -> String {
    let mut out = String::from("ratio,mean_cl,sd_cl,mean_rand,sd_rand\n");
    for p in points {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            p.ratio, p.acc_cl.mean, p.acc_cl.sd, p.acc_random.mean, p.acc_random.sd
        ));
    }
    out
}
