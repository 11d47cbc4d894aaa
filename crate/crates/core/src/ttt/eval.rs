use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ttt_adapt, TttConfig, TttError};
use crate::analysis::{accuracy, roc_auc_binary};
use crate::augment::ViewSpec;
use crate::graphdata::Dataset;
use crate::models::{classify, predict, ModelParams, ParamSnapshot};
use crate::ssl::SslWeights;
use crate::tensor::row_softmax;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EvalMode {
    #[serde(rename = "RAW")]
    Raw,
    #[serde(rename = "JOINT")]
    Joint,
    #[serde(rename = "GT3")]
    Gt3,
    #[serde(rename = "GT3-w/o-constraint")]
    Gt3NoConstraint,
    #[serde(rename = "GT3-w/o-global")]
    Gt3NoGlobal,
    #[serde(rename = "GT3-w/o-local")]
    Gt3NoLocal,
}

impl EvalMode {
    pub const ALL: [EvalMode; 6] = [
        EvalMode::Raw,
        EvalMode::Joint,
        EvalMode::Gt3,
        EvalMode::Gt3NoConstraint,
        EvalMode::Gt3NoGlobal,
        EvalMode::Gt3NoLocal,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::Raw => "RAW",
            EvalMode::Joint => "JOINT",
            EvalMode::Gt3 => "GT3",
            EvalMode::Gt3NoConstraint => "GT3-w/o-constraint",
            EvalMode::Gt3NoGlobal => "GT3-w/o-global",
            EvalMode::Gt3NoLocal => "GT3-w/o-local",
        }
    }

    /// Whether test-time adaptation runs before prediction.
    pub fn adapts(self) -> bool {
        !matches!(self, EvalMode::Raw | EvalMode::Joint)
    }

    /// The loss weights with this mode's ablated term zeroed.
    pub fn weights(self, base: &SslWeights) -> SslWeights {
        let mut w = *base;
        match self {
            EvalMode::Gt3NoConstraint => w.lambda_c = 0.0,
            EvalMode::Gt3NoGlobal => w.global_weight = 0.0,
            EvalMode::Gt3NoLocal => w.alpha = 0.0,
            _ => {}
        }
        w
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                let known: Vec<&str> = EvalMode::ALL.iter().map(|m| m.as_str()).collect();
                format!("unknown mode '{s}' (known: {})", known.join(", "))
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    /// Index of the graph in its dataset.
    pub id: usize,
    pub true_label: usize,
    pub predicted_label: usize,
    /// Class probabilities.
    pub scores: Vec<f64>,
    pub ttt_steps_used: usize,
    pub fell_back: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: EvalMode,
    pub num_samples: usize,
    pub accuracy: f64,
    /// Binary ROC-AUC on the class-1 probability, when defined.
    pub roc_auc: Option<f64>,
    pub fallbacks: usize,
    pub records: Vec<SampleRecord>,
}

#[derive(Debug, Clone)]
pub struct EvalSettings {
    pub ttt: TttConfig,
    pub weights: SslWeights,
    pub spec: ViewSpec,
    /// Worker threads for per-sample adaptation; `None` uses all cores.
    pub jobs: Option<usize>,
}

fn record(
    data: &Dataset,
    id: usize,
    params: &ModelParams,
    snap: &ParamSnapshot,
    steps: usize,
    fell_back: bool,
) -> Result<SampleRecord, TttError> {
    let g = data.graph(id);
    let logits = classify(g, params, &snap.config)?;
    Ok(SampleRecord {
        id,
        true_label: g.label().ok_or(TttError::Unlabelled(id))?,
        predicted_label: predict(&logits),
        scores: row_softmax(&logits).row(0).to_vec(),
        ttt_steps_used: steps,
        fell_back,
    })
}

/// Predicts every graph in `indices`, adapting per sample first in the GT3
/// modes. Records are ordered as `indices`.
pub fn evaluate(
    data: &Dataset,
    indices: &[usize],
    snap: &ParamSnapshot,
    mode: EvalMode,
    settings: &EvalSettings,
) -> Result<EvalReport, TttError> {
    if indices.is_empty() {
        return Err(TttError::Input("evaluation split is empty".into()));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(TttError::Input(format!("sample index {bad} outside dataset of {}", data.len())));
    }
    if mode == EvalMode::Raw && snap.meta.gamma != 0.0 {
        return Err(TttError::Input(format!(
            "RAW evaluation needs a model trained with gamma = 0, this one used {}",
            snap.meta.gamma
        )));
    }
    let weights = mode.weights(&settings.weights);
    let one = |id: usize, start: &ModelParams| -> Result<(SampleRecord, ModelParams), TttError> {
        if !mode.adapts() {
            return Ok((record(data, id, start, snap, 0, false)?, start.clone()));
        }
        let out = ttt_adapt(data.graph(id), snap, start, &settings.ttt, &weights, &settings.spec, id as u64)?;
        let rec = record(data, id, &out.params, snap, out.steps_used, out.fell_back)?;
        Ok((rec, out.params))
    };

    let records: Vec<SampleRecord> = if settings.ttt.restore_per_sample || !mode.adapts() {
        let work = || -> Result<Vec<SampleRecord>, TttError> {
            indices
                .par_iter()
                .map(|&id| one(id, &snap.params).map(|(r, _)| r))
                .collect()
        };
        match settings.jobs {
            Some(n) => rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| TttError::Input(e.to_string()))?
                .install(work)?,
            None => work()?,
        }
    } else {
        // adaptation carries over from one sample to the next
        let mut params = snap.params.clone();
        let mut out = Vec::with_capacity(indices.len());
        for &id in indices {
            let (rec, next) = one(id, &params)?;
            params = next;
            out.push(rec);
        }
        out
    };

    let preds: Vec<usize> = records.iter().map(|r| r.predicted_label).collect();
    let labels: Vec<usize> = records.iter().map(|r| r.true_label).collect();
    let roc_auc = if snap.config.num_classes == 2 {
        let scores: Vec<f64> = records.iter().map(|r| r.scores[1]).collect();
        roc_auc_binary(&scores, &labels).ok()
    } else {
        None
    };
    Ok(EvalReport {
        mode,
        num_samples: records.len(),
        accuracy: accuracy(&preds, &labels)?,
        roc_auc,
        fallbacks: records.iter().filter(|r| r.fell_back).count(),
        records,
    })
}
