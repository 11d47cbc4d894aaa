use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use graph_ttt::analysis::CkaRow;
use graph_ttt::graphdata::SplitSpec;
use graph_ttt::ttt::{EpochRecord, EvalMode, EvalReport};
use serde::Serialize;

pub fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// File-name form of a mode, e.g. `GT3-wo-local`.
pub fn mode_slug(mode: EvalMode) -> String {
    mode.as_str().replace('/', "")
}

pub fn predictions_path(dir: &Path, mode: EvalMode) -> PathBuf {
    dir.join(format!("predictions-{}.csv", mode_slug(mode)))
}

pub fn summary_path(dir: &Path, mode: EvalMode) -> PathBuf {
    dir.join(format!("summary-{}.json", mode_slug(mode)))
}

/// One row per sample; the class probabilities share a column, separated
/// by `;`.
pub fn write_predictions(path: &Path, report: &EvalReport) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(["id", "true_label", "predicted_label", "scores", "ttt_steps_used"])?;
    for r in &report.records {
        let scores: Vec<String> = r.scores.iter().map(|s| s.to_string()).collect();
        w.write_record([
            r.id.to_string(),
            r.true_label.to_string(),
            r.predicted_label.to_string(),
            scores.join(";"),
            r.ttt_steps_used.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_cka(path: &Path, rows: &[CkaRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_history(path: &Path, history: &[EpochRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for r in history {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
pub struct SplitSizes {
    pub kind: graph_ttt::graphdata::SplitKind,
    pub seed: u64,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

impl From<&SplitSpec> for SplitSizes {
    fn from(s: &SplitSpec) -> Self {
        Self {
            kind: s.kind,
            seed: s.seed,
            train: s.train.len(),
            val: s.val.len(),
            test: s.test.len(),
        }
    }
}

#[derive(Debug, Serialize)]
pub struct Metrics {
    pub accuracy: f64,
    pub roc_auc: Option<f64>,
    pub fallbacks: usize,
}

/// JSON summary of one evaluation.
#[derive(Debug, Serialize)]
pub struct EvalSummary {
    pub mode: EvalMode,
    pub config_hash: String,
    pub dataset: String,
    pub split: SplitSizes,
    pub num_samples: usize,
    pub metrics: Metrics,
}

impl EvalSummary {
    pub fn new(report: &EvalReport, config_hash: &str, dataset: &str, split: &SplitSpec) -> Self {
        Self {
            mode: report.mode,
            config_hash: config_hash.to_string(),
            dataset: dataset.to_string(),
            split: split.into(),
            num_samples: report.num_samples,
            metrics: Metrics {
                accuracy: report.accuracy,
                roc_auc: report.roc_auc,
                fallbacks: report.fallbacks,
            },
        }
    }
}
