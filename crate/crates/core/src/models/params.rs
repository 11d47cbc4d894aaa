use rand::Rng;
use serde::{Deserialize, Serialize};

use super::arch::{ParamKind, ParamShape};
use super::{GnnConfig, ModelError};
use crate::seed;
use crate::tensor::{DenseMatrix, Tape, Var};

/// The three parameter groups of the two-headed model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamGroup {
    /// Layers `1..=K`, shared by both heads.
    Extractor,
    /// Layers `K+1..=L` of the classification path and the prediction layer.
    Main,
    /// Layers `K+1..=L` of the self-supervised path, the graph-summary layer
    /// and the two-layer projection.
    Ssl,
}

/// A subset of parameter groups.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Groups {
    pub extractor: bool,
    pub main: bool,
    pub ssl: bool,
}

impl Groups {
    pub const ALL: Groups = Groups { extractor: true, main: true, ssl: true };
    pub const NONE: Groups = Groups { extractor: false, main: false, ssl: false };
    /// What test-time adaptation may touch.
    pub const ADAPT: Groups = Groups { extractor: true, main: false, ssl: true };

    pub fn contains(&self, g: ParamGroup) -> bool {
        match g {
            ParamGroup::Extractor => self.extractor,
            ParamGroup::Main => self.main,
            ParamGroup::Ssl => self.ssl,
        }
    }
}

/// Model parameters laid out by role. `T` is a [`DenseMatrix`] for stored
/// parameters, a [`Var`] once bound to a tape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamTree<T> {
    pub extractor: Vec<Vec<T>>,
    pub main_layers: Vec<Vec<T>>,
    /// `[W (hidden×C), b (1×C)]`
    pub main_pred: Vec<T>,
    pub ssl_layers: Vec<Vec<T>>,
    /// `[W (hidden×hidden), b]`, graph summary for the global task.
    pub summary: Vec<T>,
    /// `[W1, b1, W2, b2]`, projection for the local task.
    pub projection: Vec<T>,
}

pub type ModelParams = ParamTree<DenseMatrix>;

impl<T> ParamTree<T> {
    /// Entries in canonical order: extractor, main layers, prediction layer,
    /// SSL layers, summary, projection.
    pub fn iter(&self) -> impl Iterator<Item = (ParamGroup, &T)> {
        let ext = self.extractor.iter().flatten().map(|t| (ParamGroup::Extractor, t));
        let main = self
            .main_layers
            .iter()
            .flatten()
            .chain(&self.main_pred)
            .map(|t| (ParamGroup::Main, t));
        let ssl = self
            .ssl_layers
            .iter()
            .flatten()
            .chain(&self.summary)
            .chain(&self.projection)
            .map(|t| (ParamGroup::Ssl, t));
        ext.chain(main).chain(ssl)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (ParamGroup, &mut T)> {
        let ext = self.extractor.iter_mut().flatten().map(|t| (ParamGroup::Extractor, t));
        let main = self
            .main_layers
            .iter_mut()
            .flatten()
            .chain(self.main_pred.iter_mut())
            .map(|t| (ParamGroup::Main, t));
        let ssl = self
            .ssl_layers
            .iter_mut()
            .flatten()
            .chain(self.summary.iter_mut())
            .chain(self.projection.iter_mut())
            .map(|t| (ParamGroup::Ssl, t));
        ext.chain(main).chain(ssl)
    }

    pub fn map<U>(&self, mut f: impl FnMut(ParamGroup, &T) -> U) -> ParamTree<U> {
        let mut layers = |g: ParamGroup, ls: &Vec<Vec<T>>| -> Vec<Vec<U>> {
            ls.iter().map(|l| l.iter().map(|t| f(g, t)).collect()).collect()
        };
        let extractor = layers(ParamGroup::Extractor, &self.extractor);
        let main_layers = layers(ParamGroup::Main, &self.main_layers);
        let ssl_layers = layers(ParamGroup::Ssl, &self.ssl_layers);
        ParamTree {
            extractor,
            main_layers,
            main_pred: self.main_pred.iter().map(|t| f(ParamGroup::Main, t)).collect(),
            ssl_layers,
            summary: self.summary.iter().map(|t| f(ParamGroup::Ssl, t)).collect(),
            projection: self.projection.iter().map(|t| f(ParamGroup::Ssl, t)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.iter().count()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

impl ModelParams {
    /// Records every parameter on `tape`; groups in `trainable` become
    /// differentiable leaves, the rest constants.
    pub fn bind<'t>(&self, tape: &'t Tape, trainable: Groups) -> ParamTree<Var<'t>> {
        self.map(|g, m| {
            if trainable.contains(g) {
                tape.param(m.clone())
            } else {
                tape.constant(m.clone())
            }
        })
    }

    /// Zero matrices of matching shapes.
    pub fn zeros_like(&self) -> ModelParams {
        self.map(|_, m| DenseMatrix::zeros(m.rows(), m.cols()))
    }

    pub fn is_finite(&self) -> bool {
        self.iter().all(|(_, m)| m.is_finite())
    }

    /// Entrywise `self += c * other` over matching trees.
    pub fn add_scaled(&mut self, other: &ModelParams, c: f64) {
        for ((_, a), (_, b)) in self.iter_mut().zip(other.iter()) {
            a.add_scaled_assign(b, c);
        }
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.iter().map(|(_, m)| m.values().len()).sum()
    }
}

impl<'t> ParamTree<Var<'t>> {
    /// Gradient tree after a backward pass; untouched entries are zero.
    pub fn gradients(&self, grads: &crate::tensor::Gradients) -> ModelParams {
        self.map(|_, v| grads.wrt(*v))
    }
}

fn glorot(rng: &mut seed::Rng, shape: ParamShape) -> DenseMatrix {
    match shape.kind {
        ParamKind::Bias => DenseMatrix::zeros(shape.rows, shape.cols),
        ParamKind::Weight => {
            let bound = (6.0 / (shape.rows + shape.cols) as f64).sqrt();
            DenseMatrix::from_fn(shape.rows, shape.cols, |_, _| rng.random_range(-bound..=bound))
        }
    }
}

/// Glorot-uniform weights and zero biases, deterministic in `seed`.
pub fn init_params(cfg: &GnnConfig, seed: u64) -> Result<ModelParams, ModelError> {
    cfg.validate()?;
    let arch = cfg.architecture()?;
    let mut rng = seed::rng(seed::derive(seed, &[0x1417]));
    let (l, k, h) = (cfg.num_layers, cfg.shared_layers, cfg.hidden_dim);
    let in_dim = |layer: usize| if layer == 1 { cfg.attr_dim } else { h };
    let layer = |rng: &mut seed::Rng, idx: usize| -> Vec<DenseMatrix> {
        arch.layer_shapes(in_dim(idx), h)
            .into_iter()
            .map(|s| glorot(rng, s))
            .collect()
    };
    let extractor = (1..=k).map(|i| layer(&mut rng, i)).collect();
    let main_layers = (k + 1..=l).map(|i| layer(&mut rng, i)).collect();
    let ssl_layers = (k + 1..=l).map(|i| layer(&mut rng, i)).collect();
    let weight = |rng: &mut seed::Rng, r, c| glorot(rng, ParamShape { rows: r, cols: c, kind: ParamKind::Weight });
    let bias = |c| DenseMatrix::zeros(1, c);
    let main_pred = vec![weight(&mut rng, h, cfg.num_classes), bias(cfg.num_classes)];
    let summary = vec![weight(&mut rng, h, h), bias(h)];
    let projection = vec![weight(&mut rng, h, h), bias(h), weight(&mut rng, h, h), bias(h)];
    Ok(ParamTree {
        extractor,
        main_layers,
        main_pred,
        ssl_layers,
        summary,
        projection,
    })
}
