//! Representation similarity (linear CKA) and classification metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphdata::Graph;
use crate::models::{gnn_layer_embeddings, GnnConfig, Head, ModelError, ModelParams};
use crate::tensor::DenseMatrix;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("{what}: lengths differ ({left} vs {right})")]
    Mismatch {
        what: &'static str,
        left: usize,
        right: usize,
    },
    #[error("metric undefined: {0}")]
    Undefined(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Centered columns below this Frobenius norm count as all-zero.
const ZERO_TOL: f64 = 1e-12;

/// Linear CKA `‖Y_cᵀ X_c‖²_F / (‖X_cᵀ X_c‖_F ‖Y_cᵀ Y_c‖_F)` with column
/// centering. Returns 0 when either centered matrix vanishes.
pub fn linear_cka(x: &DenseMatrix, y: &DenseMatrix) -> Result<f64, AnalysisError> {
    if x.rows() != y.rows() {
        return Err(AnalysisError::Mismatch {
            what: "linear_cka rows",
            left: x.rows(),
            right: y.rows(),
        });
    }
    if x.rows() < 2 {
        return Err(AnalysisError::Undefined("linear CKA needs at least 2 samples".into()));
    }
    let xc = x.center_columns();
    let yc = y.center_columns();
    let negligible = |c: &DenseMatrix, raw: &DenseMatrix| c.frobenius_norm() <= ZERO_TOL * (1.0 + raw.frobenius_norm());
    if negligible(&xc, x) || negligible(&yc, y) {
        return Ok(0.0);
    }
    let xt = xc.transpose();
    let yt = yc.transpose();
    let cross = yt.matmul(&xc).expect("rows match").frobenius_sq();
    let xx = xt.matmul(&xc).expect("square").frobenius_norm();
    let yy = yt.matmul(&yc).expect("square").frobenius_norm();
    Ok(cross / (xx * yy))
}

pub fn accuracy(preds: &[usize], labels: &[usize]) -> Result<f64, AnalysisError> {
    if preds.len() != labels.len() {
        return Err(AnalysisError::Mismatch {
            what: "accuracy",
            left: preds.len(),
            right: labels.len(),
        });
    }
    if preds.is_empty() {
        return Err(AnalysisError::Undefined("accuracy of an empty set".into()));
    }
    let hits = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
    Ok(hits as f64 / preds.len() as f64)
}

/// Ranks starting at 1; tied values share the mean of their ranks.
pub fn midranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// ROC-AUC from the rank-sum statistic; label 1 is the positive class.
pub fn roc_auc_binary(scores: &[f64], labels: &[usize]) -> Result<f64, AnalysisError> {
    if scores.len() != labels.len() {
        return Err(AnalysisError::Mismatch {
            what: "roc_auc_binary",
            left: scores.len(),
            right: labels.len(),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 1) {
        return Err(AnalysisError::Undefined(format!("binary AUC given label {bad}")));
    }
    let n_pos = labels.iter().filter(|&&l| l == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(AnalysisError::Undefined("ROC-AUC needs both classes".into()));
    }
    let ranks = midranks(scores);
    let rank_sum: f64 = ranks.iter().zip(labels).filter(|(_, &l)| l == 1).map(|(r, _)| r).sum();
    let (p, n) = (n_pos as f64, n_neg as f64);
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * n))
}

/// A trained model and the head whose layers are probed.
#[derive(Debug, Clone, Copy)]
pub struct TaggedModel<'a> {
    pub tag: &'a str,
    pub params: &'a ModelParams,
    pub head: Head,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaRow {
    pub pair: String,
    pub layer: usize,
    pub value: f64,
}

/// Per-layer node embeddings of every model, rows concatenated over the
/// probe graphs.
fn stacked_layers(probe: &[&Graph], model: &TaggedModel, cfg: &GnnConfig) -> Result<Vec<DenseMatrix>, AnalysisError> {
    let mut per_graph = Vec::with_capacity(probe.len());
    for g in probe {
        per_graph.push(gnn_layer_embeddings(g, model.params, cfg, model.head)?);
    }
    Ok((0..cfg.num_layers)
        .map(|l| {
            let parts: Vec<&DenseMatrix> = per_graph.iter().map(|layers| &layers[l]).collect();
            DenseMatrix::vstack(&parts).expect("same hidden width")
        })
        .collect())
}

/// Linear CKA for every model pair `(i, j)`, `i < j` in input order, at
/// every layer `1..=L`.
pub fn layerwise_cka(probe: &[&Graph], models: &[TaggedModel], cfg: &GnnConfig) -> Result<Vec<CkaRow>, AnalysisError> {
    if probe.is_empty() {
        return Err(AnalysisError::Undefined("empty probe set".into()));
    }
    let layers: Vec<Vec<DenseMatrix>> = models
        .iter()
        .map(|m| stacked_layers(probe, m, cfg))
        .collect::<Result<_, _>>()?;
    let mut rows = Vec::new();
    for i in 0..models.len() {
        for j in i + 1..models.len() {
            let pair = format!("{}-{}", models[i].tag, models[j].tag);
            for l in 0..cfg.num_layers {
                rows.push(CkaRow {
                    pair: pair.clone(),
                    layer: l + 1,
                    value: linear_cka(&layers[i][l], &layers[j][l])?,
                });
            }
        }
    }
    Ok(rows)
}
