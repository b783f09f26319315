//! Library-level runs of the full pipeline on small synthetic data.

use emonet::cl::ClConfig;
use emonet::dataset::LabeledDataset;
use emonet::harness::{k_fold_cv, EmoNet, PipelineConfig};
use emonet::mlp::{load_checkpoint, predict, save_checkpoint, NetConfig};
use emonet::synthetic::{build_prototypes, generate, inject_noise, InjectionMode, NoiseModel, SyntheticConfig};
use emonet::weighting::Mode;

fn narrow(hidden: usize, epochs: usize) -> NetConfig {
    NetConfig {
        hidden: vec![hidden],
        epochs,
        learning_rate: 1e-4,
        batch_size: 32,
        ..NetConfig::classifier()
    }
}

fn noisy(n_per_class: usize, rate: f64, seed: u64) -> LabeledDataset {
    let cfg = SyntheticConfig {
        signal_gain_hz: 30.0,
        ..SyntheticConfig::default()
    };
    let (ds, _) = generate(&build_prototypes(&cfg, seed).unwrap(), &cfg, n_per_class, seed).unwrap();
    inject_noise(
        &ds,
        &NoiseModel::symmetric(3, rate).unwrap(),
        InjectionMode::ExactCount,
        seed,
    )
    .unwrap()
}

fn pipeline(mode: Mode) -> EmoNet {
    pipeline_with(mode, 10)
}

fn pipeline_with(mode: Mode, epochs: usize) -> EmoNet {
    EmoNet::new(PipelineConfig {
        mode,
        classifier: narrow(8, epochs),
        cl: ClConfig {
            k_folds: 3,
            aux: narrow(8, 20),
            ..ClConfig::default()
        },
        renormalize_weights: false,
    })
}

#[test]
fn flags_concentrate_on_flipped_labels() {
    let ds = noisy(60, 0.2, 5);
    let rows: Vec<usize> = (0..ds.len()).collect();
    let fit = pipeline(Mode::Prune).fit(&ds, &rows, 5).unwrap();
    let report = fit.cl.unwrap();
    let truth = ds.true_labels().unwrap();
    let flipped: Vec<bool> = ds.labels().iter().zip(truth).map(|(a, b)| a != b).collect();
    let n_flipped = flipped.iter().filter(|&&f| f).count();
    assert_eq!(n_flipped, 36);

    let flagged = report.quality.n_flagged();
    let hits = report
        .quality
        .flags
        .iter()
        .zip(&flipped)
        .filter(|(f, t)| **f && **t)
        .count();
    assert!(flagged > 0);
    // Random flagging would hit about 20%.
    assert!(hits as f64 / flagged as f64 > 0.4, "{hits}/{flagged}");
    assert_eq!(fit.weights.n_effective(), ds.len() - flagged);
    let total: f64 = report.joint.calibrated.iter().flatten().sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn modes_share_initialization_and_are_reproducible() {
    let ds = noisy(30, 0.2, 8);
    let rows: Vec<usize> = (0..ds.len()).collect();
    let a = pipeline(Mode::Reweight).fit(&ds, &rows, 3).unwrap();
    let b = pipeline(Mode::Reweight).fit(&ds, &rows, 3).unwrap();
    assert_eq!(a.train.params, b.train.params);
    assert!(a.weights.weights.iter().all(|&w| w > 0.0 && w < 1.0));

    let base = pipeline(Mode::Baseline).fit(&ds, &rows, 3).unwrap();
    assert!(base.cl.is_none());
    assert_ne!(base.train.params, a.train.params);
}

#[test]
fn dataset_and_checkpoint_survive_disk() {
    let ds = noisy(20, 0.3, 2);
    let dir = tempfile::tempdir().unwrap();
    ds.save(dir.path()).unwrap();
    let back = LabeledDataset::load(dir.path()).unwrap();
    assert_eq!(back.features(), ds.features());
    assert_eq!(back.labels(), ds.labels());
    assert_eq!(back.true_labels(), ds.true_labels());
    assert_eq!(back.noise, ds.noise);

    let rows: Vec<usize> = (0..ds.len()).collect();
    let fit = pipeline(Mode::Baseline).fit(&ds, &rows, 1).unwrap();
    let path = dir.path().join("m.ckpt");
    save_checkpoint(&fit.train.params, &path).unwrap();
    let params = load_checkpoint(&path).unwrap();
    assert_eq!(
        predict(&params, &back).unwrap(),
        predict(&fit.train.params, &ds).unwrap()
    );
}

#[test]
fn cross_validated_pipeline_beats_chance() {
    let ds = noisy(30, 0.1, 4);
    let cv = k_fold_cv(&ds, &pipeline_with(Mode::Prune, 40), 3, 4).unwrap();
    assert_eq!(cv.folds.len(), 3);
    assert!(cv.accuracy.mean > 0.5, "{}", cv.accuracy.mean);
    assert!(cv.folds.iter().all(|f| f.true_label_metrics.is_some()));
}
