//! GNN graph classifiers with a shared extractor and two heads.
//!
//! Layers `1..=K` form the extractor shared by the classification head and
//! the self-supervised head; each head owns its own copy of layers
//! `K+1..=L` plus its output layers.

pub mod arch;
mod checkpoint;
mod params;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphdata::{normalize_adjacency, AdjacencyScheme, Graph};
use crate::seed;
use crate::ssl::TrainStats;
use crate::tensor::{DenseMatrix, Tape, TensorError, Var};

pub use arch::Architecture;
pub use checkpoint::{load_checkpoint, save_checkpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use params::{init_params, Groups, ModelParams, ParamGroup, ParamTree};

/// Variance floor inside layer normalisation.
pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid model config: {field} {message}")]
    Config { field: &'static str, message: String },
    #[error("unknown architecture '{0}'")]
    UnknownArchitecture(String),
    #[error("parameters do not match config: {0}")]
    Shape(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    Sum,
    Mean,
    Max,
}

impl Readout {
    pub fn apply<'t>(self, h: Var<'t>) -> Var<'t> {
        match self {
            Readout::Sum => h.sum_rows(),
            Readout::Mean => h.mean_rows(),
            Readout::Max => h.max_rows(),
        }
    }
}

impl std::str::FromStr for Readout {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sum" => Ok(Self::Sum),
            "mean" => Ok(Self::Mean),
            "max" => Ok(Self::Max),
            other => Err(format!("unknown readout '{other}'")),
        }
    }
}

/// Which head's layers `K+1..` a forward pass reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Main,
    Ssl,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GnnConfig {
    pub arch: String,
    pub num_layers: usize,
    pub hidden_dim: usize,
    /// Number of extractor layers `K`, `0 ≤ K ≤ L`.
    pub shared_layers: usize,
    pub readout: Readout,
    pub dropout: f64,
    pub layer_norm: bool,
    pub num_classes: usize,
    pub attr_dim: usize,
    /// Overrides the architecture's adjacency normalisation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub adjacency: Option<AdjacencyScheme>,
}

impl GnnConfig {
    /// A config with the architecture's default readout, no dropout and no
    /// layer normalisation.
    pub fn new(
        arch: &str,
        num_layers: usize,
        hidden_dim: usize,
        shared_layers: usize,
        num_classes: usize,
        attr_dim: usize,
    ) -> Result<Self, ModelError> {
        let a = arch::lookup(arch).ok_or_else(|| ModelError::UnknownArchitecture(arch.to_string()))?;
        let cfg = Self {
            arch: a.name().to_string(),
            num_layers,
            hidden_dim,
            shared_layers,
            readout: a.default_readout(),
            dropout: 0.0,
            layer_norm: false,
            num_classes,
            attr_dim,
            adjacency: None,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |field, message: String| Err(ModelError::Config { field, message });
        self.architecture()?;
        if self.num_layers == 0 {
            return bad("num_layers", "must be at least 1".into());
        }
        if self.shared_layers > self.num_layers {
            return bad(
                "shared_layers",
                format!("= {} exceeds num_layers = {}", self.shared_layers, self.num_layers),
            );
        }
        if self.hidden_dim == 0 {
            return bad("hidden_dim", "must be at least 1".into());
        }
        if !(0.0..=0.5).contains(&self.dropout) {
            return bad("dropout", format!("= {} outside [0, 0.5]", self.dropout));
        }
        if self.num_classes == 0 {
            return bad("num_classes", "must be at least 1".into());
        }
        if self.attr_dim == 0 {
            return bad("attr_dim", "must be at least 1".into());
        }
        Ok(())
    }

    pub fn architecture(&self) -> Result<&'static dyn Architecture, ModelError> {
        arch::lookup(&self.arch).ok_or_else(|| ModelError::UnknownArchitecture(self.arch.clone()))
    }

    pub fn adjacency_scheme(&self) -> Result<AdjacencyScheme, ModelError> {
        Ok(self.adjacency.unwrap_or(self.architecture()?.adjacency()))
    }
}

/// Dropout applied in training mode; masks are a pure function of
/// `(seed, layer)`.
#[derive(Debug, Clone, Copy)]
pub struct Dropout {
    pub rate: f64,
    pub seed: u64,
}

/// Precomputed propagation matrix and attributes of one graph (or view).
#[derive(Debug, Clone)]
pub struct GraphInput {
    pub adjacency: DenseMatrix,
    pub attributes: DenseMatrix,
}

impl GraphInput {
    pub fn new(g: &Graph, cfg: &GnnConfig) -> Result<Self, ModelError> {
        if g.attr_dim() != cfg.attr_dim {
            return Err(ModelError::Shape(format!(
                "graph has {} attributes, config expects {}",
                g.attr_dim(),
                cfg.attr_dim
            )));
        }
        Ok(Self {
            adjacency: normalize_adjacency(g, cfg.adjacency_scheme()?),
            attributes: g.attributes().clone(),
        })
    }

    pub fn bind<'t>(&self, tape: &'t Tape) -> (Var<'t>, Var<'t>) {
        (tape.constant(self.adjacency.clone()), tape.constant(self.attributes.clone()))
    }
}

fn layer_params<'a, T>(params: &'a ParamTree<T>, cfg: &GnnConfig, head: Head, layer: usize) -> Result<&'a [T], ModelError> {
    let k = cfg.shared_layers;
    let found = if layer <= k {
        params.extractor.get(layer - 1)
    } else {
        match head {
            Head::Main => params.main_layers.get(layer - k - 1),
            Head::Ssl => params.ssl_layers.get(layer - k - 1),
        }
    };
    found
        .map(|v| v.as_slice())
        .ok_or_else(|| ModelError::Shape(format!("no parameters for layer {layer} ({head:?} head)")))
}

/// Node embeddings after each of layers `1..=upto`.
pub fn layer_outputs<'t>(
    cfg: &GnnConfig,
    params: &ParamTree<Var<'t>>,
    adj: Var<'t>,
    x: Var<'t>,
    head: Head,
    upto: usize,
    dropout: Option<Dropout>,
) -> Result<Vec<Var<'t>>, ModelError> {
    if upto > cfg.num_layers {
        return Err(ModelError::Shape(format!("layer {upto} beyond num_layers {}", cfg.num_layers)));
    }
    if x.shape().1 != cfg.attr_dim {
        return Err(ModelError::Shape(format!(
            "input has {} attributes, config expects {}",
            x.shape().1,
            cfg.attr_dim
        )));
    }
    let arch = cfg.architecture()?;
    let tape = x.tape();
    let mut h = x;
    let mut outputs = Vec::with_capacity(upto);
    for layer in 1..=upto {
        let p = layer_params(params, cfg, head, layer)?;
        h = arch.propagate(adj, h, p)?;
        if arch.nonlinear() {
            h = h.relu();
        }
        if cfg.layer_norm {
            h = h.layer_norm(LAYER_NORM_EPS);
        }
        if let Some(d) = dropout.filter(|d| d.rate > 0.0) {
            let (r, c) = h.shape();
            let mut rng = seed::rng(seed::derive(d.seed, &[layer as u64]));
            let keep = 1.0 / (1.0 - d.rate);
            let mask = DenseMatrix::from_fn(r, c, |_, _| {
                use rand::Rng;
                if rng.random::<f64>() < d.rate { 0.0 } else { keep }
            });
            h = h.mul(tape.constant(mask))?;
        }
        outputs.push(h);
    }
    Ok(outputs)
}

/// Node embeddings after layer `upto` (the raw attributes when `upto == 0`).
pub fn node_embeddings<'t>(
    cfg: &GnnConfig,
    params: &ParamTree<Var<'t>>,
    adj: Var<'t>,
    x: Var<'t>,
    head: Head,
    upto: usize,
    dropout: Option<Dropout>,
) -> Result<Var<'t>, ModelError> {
    let outs = layer_outputs(cfg, params, adj, x, head, upto, dropout)?;
    Ok(outs.last().copied().unwrap_or(x))
}

/// Main-head logits (1×C): full forward pass, readout, prediction layer.
pub fn logits<'t>(
    cfg: &GnnConfig,
    params: &ParamTree<Var<'t>>,
    adj: Var<'t>,
    x: Var<'t>,
    dropout: Option<Dropout>,
) -> Result<Var<'t>, ModelError> {
    let h = node_embeddings(cfg, params, adj, x, Head::Main, cfg.num_layers, dropout)?;
    let pooled = cfg.readout.apply(h);
    Ok(pooled.matmul(params.main_pred[0])?.add(params.main_pred[1])?)
}

/// Extractor readout `READOUT(H^K)`, the graph embedding whose statistics
/// the adaptation constraint tracks.
pub fn extractor_readout<'t>(
    cfg: &GnnConfig,
    params: &ParamTree<Var<'t>>,
    adj: Var<'t>,
    x: Var<'t>,
) -> Result<Var<'t>, ModelError> {
    let h = node_embeddings(cfg, params, adj, x, Head::Main, cfg.shared_layers, None)?;
    Ok(cfg.readout.apply(h))
}

/// Cross-entropy `−log softmax(logits)[y]` for a 1×C row, built from
/// primitive operations.
pub fn cross_entropy<'t>(logits: Var<'t>, y: usize) -> Result<Var<'t>, ModelError> {
    let (_, c) = logits.shape();
    if y >= c {
        return Err(ModelError::Shape(format!("label {y} outside [0, {c})")));
    }
    let mut onehot = DenseMatrix::zeros(1, c);
    onehot.set(0, y, 1.0);
    let p_y = logits.row_softmax().mul(logits.tape().constant(onehot))?.row_sums();
    Ok(p_y.clamp(f64::MIN_POSITIVE, f64::INFINITY).log()?.scale(-1.0))
}

/// Eval-mode node embeddings of `g` after layer `upto`.
pub fn gnn_forward(
    g: &Graph,
    params: &ModelParams,
    cfg: &GnnConfig,
    head: Head,
    upto: usize,
) -> Result<DenseMatrix, ModelError> {
    let tape = Tape::new();
    let (adj, x) = GraphInput::new(g, cfg)?.bind(&tape);
    let bound = params.bind(&tape, Groups::NONE);
    let out = node_embeddings(cfg, &bound, adj, x, head, upto, None)?;
    Ok(out.value().as_ref().clone())
}

/// Eval-mode embeddings after every layer `1..=L` of the given head.
pub fn gnn_layer_embeddings(
    g: &Graph,
    params: &ModelParams,
    cfg: &GnnConfig,
    head: Head,
) -> Result<Vec<DenseMatrix>, ModelError> {
    let tape = Tape::new();
    let (adj, x) = GraphInput::new(g, cfg)?.bind(&tape);
    let bound = params.bind(&tape, Groups::NONE);
    let outs = layer_outputs(cfg, &bound, adj, x, head, cfg.num_layers, None)?;
    Ok(outs.iter().map(|v| v.value().as_ref().clone()).collect())
}

/// Eval-mode logits of `g`.
pub fn classify(g: &Graph, params: &ModelParams, cfg: &GnnConfig) -> Result<DenseMatrix, ModelError> {
    let tape = Tape::new();
    let (adj, x) = GraphInput::new(g, cfg)?.bind(&tape);
    let bound = params.bind(&tape, Groups::NONE);
    Ok(logits(cfg, &bound, adj, x, None)?.value().as_ref().clone())
}

/// Eval-mode extractor readout of `g` as a plain 1×d matrix.
pub fn graph_embedding(g: &Graph, params: &ModelParams, cfg: &GnnConfig) -> Result<DenseMatrix, ModelError> {
    let tape = Tape::new();
    let (adj, x) = GraphInput::new(g, cfg)?.bind(&tape);
    let bound = params.bind(&tape, Groups::NONE);
    Ok(extractor_readout(cfg, &bound, adj, x)?.value().as_ref().clone())
}

/// Arg-max class of a 1×C logit row; the lowest index wins ties.
pub fn predict(logits: &DenseMatrix) -> usize {
    let row = logits.row(0);
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// `−log softmax(logits)[y]`, evaluated with a log-sum-exp shift.
pub fn main_loss(logits: &DenseMatrix, y: usize) -> f64 {
    let row = logits.row(0);
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
    lse - row[y]
}

/// Simplified graph convolution with sum pooling: `1ᵀ Â^L X θ` (1×C).
pub fn sgc_forward(
    g: &Graph,
    theta: &DenseMatrix,
    hops: usize,
    scheme: AdjacencyScheme,
) -> Result<DenseMatrix, ModelError> {
    Ok(sgc_features(g, hops, scheme).matmul(theta)?)
}

/// The pooled propagated features `1ᵀ Â^L X` (1×F).
pub fn sgc_features(g: &Graph, hops: usize, scheme: AdjacencyScheme) -> DenseMatrix {
    let a = normalize_adjacency(g, scheme);
    let mut h = g.attributes().clone();
    for _ in 0..hops {
        h = a.matmul_unchecked(&h);
    }
    h.column_sums()
}

/// A trained model frozen for test-time use.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSnapshot {
    pub config: GnnConfig,
    pub params: ModelParams,
    pub stats: TrainStats,
    #[serde(default)]
    pub meta: SnapshotMeta,
}

/// Training provenance stored alongside a snapshot.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SnapshotMeta {
    /// Weight of the self-supervised term during training (0 for RAW).
    pub gamma: f64,
    pub epoch: usize,
    pub val_accuracy: Option<f64>,
}
