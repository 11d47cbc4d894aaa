//! Message-passing layer families, looked up by name at runtime.

use std::fmt;

use super::Readout;
use crate::graphdata::AdjacencyScheme;
use crate::tensor::{TensorError, Var};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Weight,
    Bias,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamShape {
    pub rows: usize,
    pub cols: usize,
    pub kind: ParamKind,
}

impl ParamShape {
    fn weight(rows: usize, cols: usize) -> Self {
        Self { rows, cols, kind: ParamKind::Weight }
    }

    fn bias(cols: usize) -> Self {
        Self { rows: 1, cols, kind: ParamKind::Bias }
    }
}

/// One GNN layer family: how a layer's parameters are shaped and how it
/// turns `(Â, H)` into the pre-activation of the next layer.
pub trait Architecture: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;

    fn aliases(&self) -> &'static [&'static str] {
        &[]
    }

    /// Adjacency normalisation fed to [`Architecture::propagate`].
    fn adjacency(&self) -> AdjacencyScheme;

    fn default_readout(&self) -> Readout;

    /// Whether a ReLU follows every layer.
    fn nonlinear(&self) -> bool {
        true
    }

    fn layer_shapes(&self, in_dim: usize, out_dim: usize) -> Vec<ParamShape>;

    fn propagate<'t>(&self, adj: Var<'t>, h: Var<'t>, layer: &[Var<'t>]) -> Result<Var<'t>, TensorError>;
}

/// `Â H W + b`
#[derive(Debug)]
pub struct Gcn;

impl Architecture for Gcn {
    fn name(&self) -> &'static str {
        "gcn"
    }

    fn adjacency(&self) -> AdjacencyScheme {
        AdjacencyScheme::SymSelfloop
    }

    fn default_readout(&self) -> Readout {
        Readout::Sum
    }

    fn layer_shapes(&self, in_dim: usize, out_dim: usize) -> Vec<ParamShape> {
        vec![ParamShape::weight(in_dim, out_dim), ParamShape::bias(out_dim)]
    }

    fn propagate<'t>(&self, adj: Var<'t>, h: Var<'t>, layer: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        adj.matmul(h)?.matmul(layer[0])?.add(layer[1])
    }
}

/// GIN with ε = 0: `MLP((A + I) H)` where the MLP is linear, ReLU, linear.
#[derive(Debug)]
pub struct Gin;

impl Architecture for Gin {
    fn name(&self) -> &'static str {
        "gin"
    }

    fn aliases(&self) -> &'static [&'static str] {
        &["gin0"]
    }

    fn adjacency(&self) -> AdjacencyScheme {
        AdjacencyScheme::RawSelfloop
    }

    fn default_readout(&self) -> Readout {
        Readout::Max
    }

    fn layer_shapes(&self, in_dim: usize, out_dim: usize) -> Vec<ParamShape> {
        vec![
            ParamShape::weight(in_dim, out_dim),
            ParamShape::bias(out_dim),
            ParamShape::weight(out_dim, out_dim),
            ParamShape::bias(out_dim),
        ]
    }

    fn propagate<'t>(&self, adj: Var<'t>, h: Var<'t>, layer: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        let agg = adj.matmul(h)?;
        let hidden = agg.matmul(layer[0])?.add(layer[1])?.relu();
        hidden.matmul(layer[2])?.add(layer[3])
    }
}

/// Linear propagation without activation, `Â H W + b`.
#[derive(Debug)]
pub struct Sgc;

impl Architecture for Sgc {
    fn name(&self) -> &'static str {
        "sgc"
    }

    fn adjacency(&self) -> AdjacencyScheme {
        AdjacencyScheme::SymSelfloop
    }

    fn default_readout(&self) -> Readout {
        Readout::Sum
    }

    fn nonlinear(&self) -> bool {
        false
    }

    fn layer_shapes(&self, in_dim: usize, out_dim: usize) -> Vec<ParamShape> {
        vec![ParamShape::weight(in_dim, out_dim), ParamShape::bias(out_dim)]
    }

    fn propagate<'t>(&self, adj: Var<'t>, h: Var<'t>, layer: &[Var<'t>]) -> Result<Var<'t>, TensorError> {
        adj.matmul(h)?.matmul(layer[0])?.add(layer[1])
    }
}

static REGISTRY: &[&dyn Architecture] = &[&Gcn, &Gin, &Sgc];

/// Resolves an architecture by name or alias, case-insensitively.
pub fn lookup(name: &str) -> Option<&'static dyn Architecture> {
    let key = name.to_ascii_lowercase();
    REGISTRY
        .iter()
        .copied()
        .find(|a| a.name() == key || a.aliases().contains(&key.as_str()))
}

/// Registered architecture names.
pub fn names() -> Vec<&'static str> {
    REGISTRY.iter().map(|a| a.name()).collect()
}
