use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use emonet::harness::results::{ResultBody, ResultsDoc};
use emonet::LabeledDataset;

const TINY: &str = r#"{
  "generate": { "n_per_class": 30, "noise": { "rate": 0.2 },
                "synthetic": { "signal_gain_hz": 25.0 } },
  "classifier": { "hidden": [4], "epochs": 3, "learning_rate": 0.0001 },
  "cl": { "k_folds": 3, "aux": { "hidden": [8], "epochs": 30, "learning_rate": 0.0001 } },
  "cv_folds": 3,
  "reliable_per_class": 3,
  "ablation": { "ratios": [0.0, 0.1], "seeds": 1,
                "classifier": { "hidden": [4], "epochs": 3, "learning_rate": 0.0001 } }
}"#;

fn emonet(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_emonet"))
        .args(args)
        .current_dir(dir)
        .env_remove("EMONET_OUT")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = emonet(dir, args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn chain(dir: &Path, threads: &str) {
    fs::write(dir.join("run.json"), TINY).unwrap();
    ok(
        dir,
        &["generate", "--config", "run.json", "--seed", "9", "--out", "data"],
    );
    let c = [
        "--config",
        "run.json",
        "--seed",
        "9",
        "--data",
        "data",
        "--out",
        "res",
        "--threads",
        threads,
    ];
    ok(dir, &[&["clean"][..], &c].concat());
    for mode in ["baseline", "emo_p", "emo_r"] {
        ok(dir, &[&["train", "--mode", mode][..], &c].concat());
    }
    ok(dir, &[&["ablate"][..], &c].concat());
    ok(dir, &["report", "--out", "res"]);
}

#[test]
fn full_chain_writes_valid_documents() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    chain(dir, "2");
    let ds = LabeledDataset::load(&dir.join("data")).unwrap();
    assert_eq!((ds.len(), ds.n_units(), ds.n_bins()), (90, 64, 96));
    assert_eq!(ds.noise.as_ref().unwrap().flipped, 18);

    let res = dir.join("res");
    for f in [
        "quality.csv",
        "probs.csv",
        "ablation.csv",
        "report.md",
        "report.csv",
        "model-emo_p.ckpt",
        "train-log-emo_r.csv",
    ] {
        assert!(res.join(f).exists(), "missing {f}");
    }
    assert_eq!(fs::read_to_string(res.join("quality.csv")).unwrap().lines().count(), 91);
    let clean = ResultsDoc::load(&res.join("results-clean.json")).unwrap();
    assert_eq!(clean.seed, 9);
    assert_eq!(clean.config["generate"]["n_per_class"], 30);
    assert!(matches!(clean.results, ResultBody::Clean { n_samples: 90, .. }));
    let train = ResultsDoc::load(&res.join("results-train-emo_p.json")).unwrap();
    assert_eq!(train.config["mode"], "emo_p");
    assert!(matches!(train.results, ResultBody::Train { n_eval: 9, .. }));
    assert!(!res.join(".emonet.lock").exists());

    let md = fs::read_to_string(res.join("report.md")).unwrap();
    assert!(md.contains("| data | reliable |"), "{md}");
    assert!(md.contains("emo_p acc"));
    ok(dir, &["report", "--out", "res"]);
    assert_eq!(fs::read_to_string(res.join("report.md")).unwrap(), md);
}

#[test]
fn chain_is_bit_reproducible_across_thread_counts() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    chain(a.path(), "1");
    chain(b.path(), "3");
    for f in [
        "results-clean.json",
        "results-train-baseline.json",
        "results-train-emo_r.json",
        "results-ablation.json",
        "model-emo_p.ckpt",
        "quality.csv",
    ] {
        let (x, y) = (
            fs::read(a.path().join("res").join(f)).unwrap(),
            fs::read(b.path().join("res").join(f)).unwrap(),
        );
        assert!(x == y, "{f} differs between runs");
    }
    for f in ["features.f32le", "labels.u8", "true_labels.u8", "manifest.json"] {
        assert_eq!(
            fs::read(a.path().join("data").join(f)).unwrap(),
            fs::read(b.path().join("data").join(f)).unwrap()
        );
    }
}

#[test]
fn cross_validation_protocol() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = TINY.replacen('{', r#"{ "protocol": "cv", "#, 1);
    fs::write(dir.join("cv.json"), cfg).unwrap();
    ok(dir, &["generate", "--config", "cv.json", "--out", "data"]);
    ok(
        dir,
        &[
            "train",
            "--config",
            "cv.json",
            "--data",
            "data",
            "--out",
            "res",
            "--mode",
            "emo_r",
            "--threads",
            "1",
        ],
    );
    let doc = ResultsDoc::load(&dir.join("res/results-cv-emo_r.json")).unwrap();
    match doc.results {
        ResultBody::Cv { report, .. } => assert_eq!(report.folds.len(), 3),
        other => panic!("unexpected body {other:?}"),
    }
}

#[test]
fn config_errors_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("typo.json"), r#"{ "classifer": {} }"#).unwrap();
    assert_eq!(
        code(&emonet(dir, &["generate", "--config", "typo.json", "--out", "x"])),
        2
    );
    fs::write(dir.join("bad.json"), r#"{ "generate": { "noise": { "rate": 1.5 } } }"#).unwrap();
    assert_eq!(
        code(&emonet(dir, &["generate", "--config", "bad.json", "--out", "x"])),
        2
    );
    assert_eq!(code(&emonet(dir, &["train", "--out", "x"])), 2);
    assert_eq!(code(&emonet(dir, &["train", "--mode", "emo_x", "--out", "x"])), 2);
    fs::create_dir(dir.join("empty")).unwrap();
    assert_eq!(code(&emonet(dir, &["report", "--input", "empty", "--out", "x"])), 2);
}

#[test]
fn io_errors_and_locks_exit_4() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    assert_eq!(
        code(&emonet(dir, &["generate", "--config", "missing.json", "--out", "x"])),
        4
    );
    assert_eq!(code(&emonet(dir, &["clean", "--data", "nowhere", "--out", "x"])), 4);
    fs::create_dir(dir.join("busy")).unwrap();
    fs::write(dir.join("busy/.emonet.lock"), "").unwrap();
    let out = emonet(dir, &["generate", "--out", "busy"]);
    assert_eq!(code(&out), 4);
    assert!(String::from_utf8_lossy(&out.stderr).contains("locked"));
}

#[test]
fn divergent_training_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    let cfg = TINY
        .replace(
            r#""classifier": { "hidden": [4], "epochs": 3, "learning_rate": 0.0001 }"#,
            r#""classifier": { "hidden": [4], "epochs": 3, "learning_rate": 1e300 }"#,
        )
        .replacen('{', r#"{ "protocol": "cv", "#, 1);
    fs::write(dir.join("nan.json"), cfg).unwrap();
    ok(dir, &["generate", "--config", "nan.json", "--out", "data"]);
    let out = emonet(
        dir,
        &["train", "--config", "nan.json", "--data", "data", "--out", "res"],
    );
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn identity_noise_records_zero_flips() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    fs::write(dir.join("c.json"), r#"{ "generate": { "n_per_class": 4 } }"#).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_emonet"))
        .args(["generate", "--config", "c.json"])
        .current_dir(dir)
        .env("EMONET_OUT", "from-env")
        .output()
        .unwrap();
    assert!(out.status.success());
    let ds = LabeledDataset::load(&dir.join("from-env")).unwrap();
    assert_eq!(ds.noise.as_ref().unwrap().flipped, 0);
    assert_eq!(ds.labels(), ds.true_labels().unwrap());
}
