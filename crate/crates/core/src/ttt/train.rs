use log::{debug, info};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adapt::{readout_constraint, stat_inputs};
use super::{bad, check_weights, TrainConfig, TttError};
use crate::augment::ViewSpec;
use crate::graphdata::Graph;
use crate::models::{
    classify, cross_entropy, graph_embedding, init_params, logits, main_loss, predict, Dropout, GnnConfig,
    GraphInput, Groups, ModelParams, ParamSnapshot, SnapshotMeta,
};
use crate::optim;
use crate::seed;
use crate::ssl::{embedding_stats, ssl_loss_var, SslSeeds, SslViews, SslWeights, TrainStats};
use crate::tensor::{DenseMatrix, Tape};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean per-graph training objective over the epoch.
    pub train_loss: f64,
    pub val_accuracy: Option<f64>,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub snapshot: ParamSnapshot,
    pub history: Vec<EpochRecord>,
}

fn labels(graphs: &[&Graph], cfg: &GnnConfig) -> Result<Vec<usize>, TttError> {
    graphs
        .iter()
        .enumerate()
        .map(|(i, g)| match g.label() {
            Some(y) if y < cfg.num_classes => Ok(y),
            Some(y) => Err(TttError::Input(format!("graph {i} has label {y} >= {}", cfg.num_classes))),
            None => Err(TttError::Unlabelled(i)),
        })
        .collect()
}

/// Extractor-readout statistics of `graphs` under `params`.
pub(crate) fn readout_stats(graphs: &[&Graph], params: &ModelParams, cfg: &GnnConfig) -> Result<TrainStats, TttError> {
    let rows: Vec<DenseMatrix> = graphs
        .par_iter()
        .map(|g| graph_embedding(g, params, cfg))
        .collect::<Result<_, _>>()?;
    Ok(embedding_stats(&rows)?)
}

struct Objective<'a> {
    graphs: &'a [&'a Graph],
    inputs: &'a [GraphInput],
    labels: &'a [usize],
    cfg: &'a GnnConfig,
    tcfg: &'a TrainConfig,
    weights: &'a SslWeights,
    spec: &'a ViewSpec,
}

impl Objective<'_> {
    /// Objective and gradient of training graph `i` in `epoch`.
    fn eval(
        &self,
        params: &ModelParams,
        stats: Option<&TrainStats>,
        epoch: usize,
        i: usize,
    ) -> Result<(f64, ModelParams), TttError> {
        let (cfg, tcfg, w) = (self.cfg, self.tcfg, self.weights);
        let tape = Tape::new();
        let bound = params.bind(&tape, Groups::ALL);
        let mut total = tape.constant(DenseMatrix::zeros(1, 1));
        if tcfg.main_weight > 0.0 {
            let (adj, x) = self.inputs[i].bind(&tape);
            let dropout = (cfg.dropout > 0.0).then(|| Dropout {
                rate: cfg.dropout,
                seed: seed::derive(tcfg.seed, &[2, epoch as u64, i as u64]),
            });
            let ce = cross_entropy(logits(cfg, &bound, adj, x, dropout)?, self.labels[i])?;
            total = total.add(ce.scale(tcfg.main_weight))?;
        }
        if w.gamma > 0.0 {
            let base = seed::derive(tcfg.seed, &[3, epoch as u64, i as u64]);
            let seeds = SslSeeds {
                shuffle: seed::derive(base, &[0]),
                view_a: seed::derive(base, &[1]),
                view_b: seed::derive(base, &[2]),
            };
            let views = SslViews::new(self.graphs[i], cfg, self.spec, w, seeds)?;
            let ssl = ssl_loss_var(cfg, &bound, &views, w, &tape)?;
            total = total.add(ssl.total.scale(w.gamma))?;
            if let Some(stats) = stats {
                let inputs = stat_inputs(self.graphs[i], cfg, self.spec, super::DEFAULT_STAT_VIEWS, seed::derive(base, &[3]))?;
                let lc = readout_constraint(cfg, &bound, &inputs, stats, &tape)?;
                total = total.add(lc.scale(w.gamma * w.lambda_c))?;
            }
        }
        let grads = bound.gradients(&tape.backward(total)?);
        Ok((total.scalar(), grads))
    }
}

fn validation(val: &[&Graph], val_labels: &[usize], params: &ModelParams, cfg: &GnnConfig) -> Result<(f64, f64), TttError> {
    let logits: Vec<DenseMatrix> = val
        .par_iter()
        .map(|g| classify(g, params, cfg))
        .collect::<Result<_, _>>()?;
    let hits = logits.iter().zip(val_labels).filter(|(l, &y)| predict(l) == y).count();
    let loss = logits.iter().zip(val_labels).map(|(l, &y)| main_loss(l, y)).sum::<f64>();
    Ok((hits as f64 / val.len() as f64, loss / val.len() as f64))
}

/// Minimises `(1/n) Σ [main_weight · L_m + γ · L_s]` over `train` by
/// mini-batch first-order steps, keeping the epoch with the best validation
/// accuracy (lower validation loss breaks ties, then the earlier epoch).
/// Without validation graphs the final epoch is kept. The snapshot's
/// statistics cover the extractor readouts of every training graph.
pub fn train_joint(
    train: &[&Graph],
    val: &[&Graph],
    cfg: &GnnConfig,
    tcfg: &TrainConfig,
    weights: &SslWeights,
    spec: &ViewSpec,
) -> Result<TrainOutcome, TttError> {
    cfg.validate()?;
    tcfg.validate()?;
    check_weights(weights)?;
    spec.validate().map_err(crate::ssl::SslError::from)?;
    if tcfg.main_weight == 0.0 && weights.gamma == 0.0 {
        return Err(bad("train.main_weight", 0, "and ssl.gamma are both zero; nothing to train"));
    }
    if train.len() < 2 {
        return Err(TttError::Input(format!("training needs at least 2 graphs, got {}", train.len())));
    }
    let train_labels = labels(train, cfg)?;
    let val_labels = labels(val, cfg)?;
    let inputs: Vec<GraphInput> = train.iter().map(|g| GraphInput::new(g, cfg)).collect::<Result<_, _>>()?;
    let objective = Objective {
        graphs: train,
        inputs: &inputs,
        labels: &train_labels,
        cfg,
        tcfg,
        weights,
        spec,
    };

    let mut params = init_params(cfg, seed::derive(tcfg.seed, &[0]))?;
    let mut opt = optim::build(&tcfg.optimizer, tcfg.learning_rate)?;
    let mut order: Vec<usize> = (0..train.len()).collect();
    let mut history = Vec::with_capacity(tcfg.epochs);
    let mut best: Option<(f64, f64, usize, ModelParams)> = None;

    for epoch in 1..=tcfg.epochs {
        let stats = if tcfg.constraint_in_training && weights.gamma > 0.0 && weights.lambda_c > 0.0 {
            Some(readout_stats(train, &params, cfg)?)
        } else {
            None
        };
        order.shuffle(&mut seed::rng(seed::derive(tcfg.seed, &[1, epoch as u64])));
        let mut epoch_loss = 0.0;
        for (batch, chunk) in order.chunks(tcfg.batch_size).enumerate() {
            let results: Vec<(f64, ModelParams)> = chunk
                .par_iter()
                .map(|&i| objective.eval(&params, stats.as_ref(), epoch, i))
                .collect::<Result<_, _>>()?;
            let mut loss = 0.0;
            let mut grad = params.zeros_like();
            for (l, g) in &results {
                loss += l;
                grad.add_scaled(g, 1.0 / chunk.len() as f64);
            }
            if !loss.is_finite() || !grad.is_finite() {
                return Err(TttError::Divergence { epoch, batch, loss });
            }
            epoch_loss += loss;
            opt.step(&mut params, &grad, Groups::ALL);
        }
        let train_loss = epoch_loss / train.len() as f64;
        let (val_accuracy, val_loss) = if val.is_empty() {
            (None, None)
        } else {
            let (a, l) = validation(val, &val_labels, &params, cfg)?;
            (Some(a), Some(l))
        };
        debug!("epoch {epoch}: loss {train_loss:.5} val_acc {val_accuracy:?} val_loss {val_loss:?}");
        history.push(EpochRecord { epoch, train_loss, val_accuracy, val_loss });
        let better = match (&best, val_accuracy, val_loss) {
            (_, None, _) => true,
            (None, _, _) => true,
            (Some((ba, bl, _, _)), Some(a), Some(l)) => a > *ba || (a == *ba && l < *bl),
            _ => false,
        };
        if better {
            best = Some((val_accuracy.unwrap_or(0.0), val_loss.unwrap_or(0.0), epoch, params.clone()));
        }
    }

    let (_, _, epoch, params) = best.expect("at least one epoch");
    let stats = readout_stats(train, &params, cfg)?;
    let val_accuracy = history[epoch - 1].val_accuracy;
    info!("kept epoch {epoch} (val accuracy {val_accuracy:?})");
    Ok(TrainOutcome {
        snapshot: ParamSnapshot {
            config: cfg.clone(),
            params,
            stats,
            meta: SnapshotMeta { gamma: weights.gamma, epoch, val_accuracy },
        },
        history,
    })
}
