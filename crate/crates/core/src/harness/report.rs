//! Aggregates results documents into a baseline / pruning / reweighting
//! comparison table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use super::results::{ResultBody, ResultsDoc};
use crate::error::{Error, Result};
use crate::weighting::Mode;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cell {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub f1_sd: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub dataset: String,
    pub protocol: String,
    pub cells: BTreeMap<&'static str, Cell>,
}

const MODES: [Mode; 3] = [Mode::Baseline, Mode::Prune, Mode::Reweight];

/// Reads every `results*.json` file in `dir`, sorted by name.
pub fn load_dir(dir: &Path) -> Result<Vec<ResultsDoc>> {
    let entries = std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let mut paths: Vec<_> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("results") && n.ends_with(".json"))
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::invalid(format!("no results documents in {}", dir.display())));
    }
    paths.iter().map(|p| ResultsDoc::load(p)).collect()
}

/// One row per (dataset, protocol); later documents override earlier ones
/// for the same mode.
pub fn comparison_table(docs: &[ResultsDoc]) -> Result<Vec<Row>> {
    if docs.is_empty() {
        return Err(Error::invalid("nothing to report"));
    }
    if let Some(d) = docs.iter().find(|d| d.format_version != docs[0].format_version) {
        return Err(Error::Format(format!(
            "mixed results format versions ({} and {})",
            docs[0].format_version, d.format_version
        )));
    }
    let mut rows: BTreeMap<(String, String), BTreeMap<&'static str, Cell>> = BTreeMap::new();
    for d in docs {
        let mut put = |protocol: &str, mode: Mode, cell: Cell| {
            rows.entry((d.dataset.clone(), protocol.to_string()))
                .or_default()
                .insert(mode.as_str(), cell);
        };
        match &d.results {
            ResultBody::Train { mode, metrics, .. } => put(
                "reliable",
                *mode,
                Cell {
                    accuracy: metrics.accuracy,
                    macro_f1: metrics.macro_f1,
                    f1_sd: None,
                },
            ),
            ResultBody::Cv { mode, report } => put(
                "cv",
                *mode,
                Cell {
                    accuracy: report.accuracy.mean,
                    macro_f1: report.macro_f1.mean,
                    f1_sd: Some(report.macro_f1.sd),
                },
            ),
            ResultBody::Reliable { modes, .. } => {
                for m in modes {
                    put(
                        "reliable",
                        m.mode,
                        Cell {
                            accuracy: m.metrics.accuracy,
                            macro_f1: m.metrics.macro_f1,
                            f1_sd: None,
                        },
                    );
                }
            }
            ResultBody::Ablation { .. } | ResultBody::Clean { .. } => {}
        }
    }
    Ok(rows
        .into_iter()
        .map(|((dataset, protocol), cells)| Row {
            dataset,
            protocol,
            cells,
        })
        .collect())
}

fn fmt_cell(cell: &Cell, baseline: Option<&Cell>, is_baseline: bool) -> (String, String) {
    let bold = |s: String, better: bool| if better { format!("**{s}**") } else { s };
    let acc = format!("{:.2}%", cell.accuracy * 100.0);
    let f1 = match cell.f1_sd {
        Some(sd) => format!("{:.4} ({:.4})", cell.macro_f1, sd),
        None => format!("{:.4}", cell.macro_f1),
    };
    match (baseline, is_baseline) {
        (Some(b), false) => (
            bold(acc, cell.accuracy > b.accuracy),
            bold(f1, cell.macro_f1 > b.macro_f1),
        ),
        _ => (acc, f1),
    }
}

/// Markdown table; a variant cell is bold when its mean beats the baseline's.
pub fn render_markdown(rows: &[Row]) -> String {
    let mut out = String::from("| dataset | protocol |");
    for m in MODES {
        write!(out, " {} acc | {} F1 |", m.as_str(), m.as_str()).unwrap();
    }
    out.push_str("\n|---|---|");
    out.push_str(&"---|---|".repeat(MODES.len()));
    out.push('\n');
    for r in rows {
        write!(out, "| {} | {} |", r.dataset, r.protocol).unwrap();
        let base = r.cells.get(Mode::Baseline.as_str());
        for m in MODES {
            match r.cells.get(m.as_str()) {
                Some(c) => {
                    let (a, f) = fmt_cell(c, base, m == Mode::Baseline);
                    write!(out, " {a} | {f} |").unwrap();
                }
                None => out.push_str(" - | - |"),
            }
        }
        out.push('\n');
    }
    out
}

/// Flat CSV: `dataset,protocol,mode,accuracy,macro_f1,f1_sd,beats_baseline`.
pub fn render_csv(rows: &[Row]) -> String {
    let mut out = String::from("dataset,protocol,mode,accuracy,macro_f1,f1_sd,beats_baseline\n");
    for r in rows {
        let base = r.cells.get(Mode::Baseline.as_str());
        for m in MODES {
            if let Some(c) = r.cells.get(m.as_str()) {
                let beats = m != Mode::Baseline && base.is_some_and(|b| c.accuracy > b.accuracy);
                writeln!(
                    out,
                    "{},{},{},{},{},{},{}",
                    r.dataset,
                    r.protocol,
                    m.as_str(),
                    c.accuracy,
                    c.macro_f1,
                    c.f1_sd.map(|v| v.to_string()).unwrap_or_default(),
                    beats
                )
                .unwrap();
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::compute_metrics;

    fn train_doc(mode: Mode, preds: &[usize]) -> ResultsDoc {
        ResultsDoc::new(
            "x",
            "toy",
            1,
            serde_json::json!({}),
            ResultBody::Train {
                mode,
                n_train: 4,
                n_eval: 4,
                n_effective: 4,
                final_loss: 0.1,
                metrics: compute_metrics(preds, &[0, 1, 0, 1], 2).unwrap(),
                true_label_metrics: None,
            },
        )
    }

    #[test]
    fn bolds_only_improvements() {
        let docs = vec![
            train_doc(Mode::Baseline, &[0, 1, 1, 1]),
            train_doc(Mode::Prune, &[0, 1, 0, 1]),
            train_doc(Mode::Reweight, &[1, 1, 1, 1]),
        ];
        let rows = comparison_table(&docs).unwrap();
        assert_eq!(rows.len(), 1);
        let md = render_markdown(&rows);
        assert!(md.contains("**100.00%**"), "{md}");
        assert!(!md.contains("**50.00%**"), "{md}");
        assert!(md.contains("| 75.00% |"), "{md}");
        let csv = render_csv(&rows);
        assert!(csv.contains("toy,reliable,emo_p,1,1,,true"), "{csv}");
        assert_eq!(render_markdown(&comparison_table(&docs).unwrap()), md);
    }

    #[test]
    fn mixed_versions_refused() {
        let mut docs = vec![
            train_doc(Mode::Baseline, &[0, 1, 0, 1]),
            train_doc(Mode::Prune, &[0, 1, 0, 1]),
        ];
        docs[1].format_version = 7;
        assert!(matches!(comparison_table(&docs), Err(Error::Format(_))));
        assert!(comparison_table(&[]).is_err());
    }

    #[test]
    fn empty_dir_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(load_dir(dir.path()).is_err());
    }
}
