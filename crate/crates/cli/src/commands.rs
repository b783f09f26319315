//! Subcommand implementations.

use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};

use emonet::cl;
use emonet::harness::report::{comparison_table, load_dir, render_csv, render_markdown};
use emonet::harness::results::{ResultBody, ResultsDoc};
use emonet::harness::{self, EmoNet, PipelineConfig};
use emonet::mlp;
use emonet::synthetic::{build_prototypes, generate as synth, generate_clean_control, inject_noise};
use emonet::weighting::Mode;
use emonet::{Error, LabeledDataset};

use crate::config::{Protocol, RunConfig};
use crate::{Common, DataArg};

pub const LOCK_FILE: &str = ".emonet.lock";

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Locked(PathBuf),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(Error::Numeric(_)) => 3,
            CliError::Core(Error::Io { .. } | Error::Format(_)) | CliError::Locked(_) => 4,
            CliError::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Locked(p) => write!(
                f,
                "{} is locked by another run (remove the lock file if stale)",
                p.display()
            ),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

/// Exclusive claim on an output directory, released on drop.
struct OutputLock {
    path: PathBuf,
    _file: File,
}

impl OutputLock {
    fn acquire(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::Io {
            path: dir.to_path_buf(),
            source: e,
        })?;
        let path = dir.join(LOCK_FILE);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(file) => Ok(Self { path, _file: file }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(CliError::Locked(dir.to_path_buf())),
            Err(source) => Err(Error::Io { path, source }.into()),
        }
    }
}

impl Drop for OutputLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|source| {
        Error::Io {
            path: path.to_path_buf(),
            source,
        }
        .into()
    })
}

struct Session {
    cfg: RunConfig,
    out: PathBuf,
    _lock: OutputLock,
}

fn start(common: &Common, data: Option<&DataArg>) -> Result<Session> {
    let mut cfg = match &common.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(d) = data.and_then(|d| d.data.clone()) {
        cfg.data = Some(d);
    }
    cfg.validate()?;
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(Error::Invalid("--threads must be at least 1".into()).into());
        }
        // Fails only if a pool already exists, in which case it is kept.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    let lock = OutputLock::acquire(&common.out)?;
    Ok(Session {
        cfg,
        out: common.out.clone(),
        _lock: lock,
    })
}

impl Session {
    fn dataset(&self) -> Result<(LabeledDataset, String)> {
        let dir = self
            .cfg
            .data
            .as_ref()
            .ok_or_else(|| Error::Invalid("no dataset: pass --data or set `data` in the config".into()))?;
        let ds = LabeledDataset::load(dir)?;
        let name = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into());
        Ok((ds, name))
    }

    fn save(&self, file: &str, doc: &ResultsDoc) -> Result<()> {
        doc.save(&self.out.join(file))?;
        log::info!("wrote {}", self.out.join(file).display());
        Ok(())
    }
}

pub fn generate(common: &Common) -> Result<()> {
    let s = start(common, None)?;
    let (g, seed) = (&s.cfg.generate, s.cfg.seed);
    let ds = match g.clean_control_boost {
        Some(boost) => generate_clean_control(&g.synthetic, boost, g.n_per_class, seed)?,
        None => {
            let prototypes = build_prototypes(&g.synthetic, seed)?;
            let (clean, report) = synth(&prototypes, &g.synthetic, g.n_per_class, seed)?;
            if report.degenerate_trials > 0 {
                log::warn!("{} trials had zero variance", report.degenerate_trials);
            }
            let model = g.noise.model(g.synthetic.n_classes())?;
            inject_noise(&clean, &model, g.noise.mode, seed)?
        }
    };
    ds.save(&s.out)?;
    let flipped = ds.noise.as_ref().map_or(0, |n| n.flipped);
    log::info!(
        "wrote {} samples ({flipped} flipped labels) to {}",
        ds.len(),
        s.out.display()
    );
    Ok(())
}

pub fn clean(common: &Common, data: &DataArg) -> Result<()> {
    let s = start(common, Some(data))?;
    let (ds, name) = s.dataset()?;
    let rows: Vec<usize> = (0..ds.len()).collect();
    let report = cl::run(&ds, &rows, &s.cfg.cl, EmoNet::cl_seed(s.cfg.seed))?;
    let flags = &report.quality.flags;
    let (precision, recall) = match ds.true_labels() {
        Some(t) => {
            let wrong: Vec<bool> = (0..ds.len()).map(|i| t[i] != ds.labels()[i]).collect();
            let hits = (0..ds.len()).filter(|&i| flags[i] && wrong[i]).count() as f64;
            let n_flag = report.quality.n_flagged() as f64;
            let n_wrong = wrong.iter().filter(|&&w| w).count() as f64;
            (
                (n_flag > 0.0).then(|| hits / n_flag),
                (n_wrong > 0.0).then(|| hits / n_wrong),
            )
        }
        None => (None, None),
    };
    write(&s.out.join("quality.csv"), &report.quality.to_csv(ds.trial_ids()))?;
    write(&s.out.join("probs.csv"), &report.probs.to_csv(ds.trial_ids()))?;
    let body = ResultBody::Clean {
        n_samples: ds.len(),
        n_flagged: report.quality.n_flagged(),
        excluded: report.joint.excluded,
        thresholds: report.thresholds.clone(),
        joint: report.joint.clone(),
        flag_precision: precision,
        flag_recall: recall,
    };
    s.save(
        "results-clean.json",
        &ResultsDoc::new("clean", name, s.cfg.seed, s.cfg.echo(), body),
    )?;
    log::info!("flagged {} of {} samples", report.quality.n_flagged(), ds.len());
    Ok(())
}

pub fn train(common: &Common, data: &DataArg, mode: Option<Mode>) -> Result<()> {
    let mut s = start(common, Some(data))?;
    if let Some(m) = mode {
        s.cfg.mode = m;
    }
    let (ds, name) = s.dataset()?;
    let (cfg, seed) = (&s.cfg, s.cfg.seed);
    let tag = cfg.mode.as_str();
    let doc = match cfg.protocol {
        Protocol::Reliable => {
            let (report, split) = harness::prepare_reliable_split(&ds, &cfg.cl, cfg.reliable_per_class, seed)?;
            let (out, weights, result) = harness::fit_mode(
                &ds,
                &report,
                &split,
                cfg.mode,
                &cfg.classifier,
                cfg.renormalize_weights,
                seed,
            )?;
            mlp::save_checkpoint(&out.params, &s.out.join(format!("model-{tag}.ckpt")))?;
            write(&s.out.join(format!("train-log-{tag}.csv")), &out.log_csv())?;
            let ids: Vec<u64> = split.train.iter().map(|&i| ds.trial_ids()[i]).collect();
            write(&s.out.join(format!("weights-{tag}.csv")), &weights.to_csv(&ids))?;
            log::info!("{tag}: reliable-test accuracy {:.4}", result.metrics.accuracy);
            let body = ResultBody::Train {
                mode: cfg.mode,
                n_train: split.train.len(),
                n_eval: split.test.len(),
                n_effective: result.n_effective,
                final_loss: out.log.last().map_or(f64::NAN, |l| l.loss),
                metrics: result.metrics,
                true_label_metrics: result.true_label_metrics,
            };
            ResultsDoc::new(format!("train-{tag}"), name, seed, cfg.echo(), body)
        }
        Protocol::Cv => {
            let decoder = EmoNet::new(PipelineConfig {
                mode: cfg.mode,
                classifier: cfg.classifier.clone(),
                cl: cfg.cl.clone(),
                renormalize_weights: cfg.renormalize_weights,
            });
            let report = harness::k_fold_cv(&ds, &decoder, cfg.cv_folds, seed)?;
            log::info!(
                "{tag}: {}-fold accuracy {:.4} ± {:.4}",
                cfg.cv_folds,
                report.accuracy.mean,
                report.accuracy.sd
            );
            ResultsDoc::new(
                format!("cv-{tag}"),
                name,
                seed,
                cfg.echo(),
                ResultBody::Cv { mode: cfg.mode, report },
            )
        }
    };
    let file = match cfg.protocol {
        Protocol::Reliable => format!("results-train-{tag}.json"),
        Protocol::Cv => format!("results-cv-{tag}.json"),
    };
    s.save(&file, &doc)
}

pub fn ablate(common: &Common, data: &DataArg) -> Result<()> {
    let s = start(common, Some(data))?;
    let (ds, name) = s.dataset()?;
    let (cfg, seed) = (&s.cfg, s.cfg.seed);
    let (report, split) = harness::prepare_reliable_split(&ds, &cfg.cl, cfg.reliable_per_class, seed)?;
    let q: Vec<f64> = split.train.iter().map(|&i| report.quality.q[i]).collect();
    let points = harness::ablation_sweep(&ds, &split.train, &q, &split.test, &cfg.ablation, seed)?;
    write(&s.out.join("ablation.csv"), &harness::ablation_csv(&points))?;
    for p in &points {
        log::info!(
            "ratio {:.2}: cl {:.4} random {:.4}",
            p.ratio,
            p.acc_cl.mean,
            p.acc_random.mean
        );
    }
    let body = ResultBody::Ablation {
        n_train: split.train.len(),
        n_test: split.test.len(),
        points,
    };
    s.save(
        "results-ablation.json",
        &ResultsDoc::new("ablate", name, seed, cfg.echo(), body),
    )
}

pub fn report(common: &Common, inputs: &[PathBuf]) -> Result<()> {
    let s = start(common, None)?;
    let dirs = if inputs.is_empty() {
        vec![s.out.clone()]
    } else {
        inputs.to_vec()
    };
    let mut docs = Vec::new();
    for d in &dirs {
        docs.extend(load_dir(d)?);
    }
    let rows = comparison_table(&docs)?;
    let md = render_markdown(&rows);
    write(&s.out.join("report.md"), &md)?;
    write(&s.out.join("report.csv"), &render_csv(&rows))?;
    print!("{md}");
    Ok(())
}
