//! Graphs, labelled datasets, TUDataset ingestion and split protocols.

mod split;
mod tudataset;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::tensor::DenseMatrix;

pub use split::{median_node_count, ood_split, random_split, SplitKind, SplitSpec};
pub use tudataset::{parse_tudataset, write_tudataset};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("missing required file {}", path.display())]
    MissingFile { path: PathBuf },
    #[error("failed to read {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}:{line}: {message}")]
    Parse {
        file: String,
        line: usize,
        message: String,
    },
    #[error("{file}: {message}")]
    Inconsistent { file: String, message: String },
    #[error("invalid graph: {0}")]
    InvalidGraph(String),
    #[error("invalid dataset: {0}")]
    InvalidDataset(String),
    #[error("split failed: {0}")]
    Split(String),
}

/// An undirected graph with node attributes and an optional class label.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted, without
/// self-loops.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Graph {
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    attributes: DenseMatrix,
    label: Option<usize>,
}

impl Graph {
    /// Builds a graph, collapsing duplicate and reversed edges and dropping
    /// self-loops.
    pub fn new(
        num_nodes: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        attributes: DenseMatrix,
        label: Option<usize>,
    ) -> Result<Self, DataError> {
        if num_nodes == 0 {
            return Err(DataError::InvalidGraph("graph has no nodes".into()));
        }
        if attributes.rows() != num_nodes {
            return Err(DataError::InvalidGraph(format!(
                "attribute matrix has {} rows for {} nodes",
                attributes.rows(),
                num_nodes
            )));
        }
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= num_nodes || v >= num_nodes {
                return Err(DataError::InvalidGraph(format!(
                    "edge ({u}, {v}) out of range for {num_nodes} nodes"
                )));
            }
            if u != v {
                canon.push((u.min(v), u.max(v)));
            }
        }
        canon.sort_unstable();
        canon.dedup();
        Ok(Self {
            num_nodes,
            edges: canon,
            attributes,
            label,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn attributes(&self) -> &DenseMatrix {
        &self.attributes
    }

    pub fn attr_dim(&self) -> usize {
        self.attributes.cols()
    }

    pub fn label(&self) -> Option<usize> {
        self.label
    }

    /// Degrees in the stored graph (self-loops never counted).
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_nodes];
        for &(u, v) in &self.edges {
            deg[u] += 1;
            deg[v] += 1;
        }
        deg
    }

    /// Same graph with a different attribute matrix of the same row count.
    pub fn with_attributes(&self, attributes: DenseMatrix) -> Result<Self, DataError> {
        Graph::new(self.num_nodes, self.edges.iter().copied(), attributes, self.label)
    }

    /// Same nodes and attributes, edge set replaced.
    pub fn with_edges(&self, edges: Vec<(usize, usize)>) -> Result<Self, DataError> {
        Graph::new(self.num_nodes, edges, self.attributes.clone(), self.label)
    }

    /// Relabels node `i` as `perm[i]`.
    pub fn permute_nodes(&self, perm: &[usize]) -> Result<Self, DataError> {
        if perm.len() != self.num_nodes {
            return Err(DataError::InvalidGraph("permutation length mismatch".into()));
        }
        let mut inverse = vec![0; perm.len()];
        for (i, &p) in perm.iter().enumerate() {
            inverse[p] = i;
        }
        let attrs = self.attributes.select_rows(&inverse);
        let edges = self.edges.iter().map(|&(u, v)| (perm[u], perm[v]));
        Graph::new(self.num_nodes, edges, attrs, self.label)
    }
}

/// A labelled collection of graphs sharing one attribute dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    graphs: Vec<Graph>,
    num_classes: usize,
    attr_dim: usize,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, graphs: Vec<Graph>, num_classes: usize) -> Result<Self, DataError> {
        let first = graphs
            .first()
            .ok_or_else(|| DataError::InvalidDataset("no graphs".into()))?;
        if num_classes == 0 {
            return Err(DataError::InvalidDataset("num_classes must be positive".into()));
        }
        let attr_dim = first.attr_dim();
        let mut seen = vec![false; num_classes];
        for (i, g) in graphs.iter().enumerate() {
            if g.attr_dim() != attr_dim {
                return Err(DataError::InvalidDataset(format!(
                    "graph {i} has attribute dimension {}, expected {attr_dim}",
                    g.attr_dim()
                )));
            }
            if let Some(y) = g.label() {
                if y >= num_classes {
                    return Err(DataError::InvalidDataset(format!(
                        "graph {i} label {y} outside [0, {num_classes})"
                    )));
                }
                seen[y] = true;
            }
        }
        let warnings = seen
            .iter()
            .enumerate()
            .filter(|(_, s)| !**s)
            .map(|(c, _)| format!("class {c} has no graphs"))
            .collect();
        Ok(Self {
            name: name.into(),
            graphs,
            num_classes,
            attr_dim,
            warnings,
        })
    }

    pub fn graphs(&self) -> &[Graph] {
        &self.graphs
    }

    pub fn graph(&self, i: usize) -> &Graph {
        &self.graphs[i]
    }

    pub fn len(&self) -> usize {
        self.graphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.graphs.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn attr_dim(&self) -> usize {
        self.attr_dim
    }

    /// Number of graphs per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for y in self.graphs.iter().filter_map(|g| g.label()) {
            counts[y] += 1;
        }
        counts
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyScheme {
    /// `D̃^{-1/2} (A + I) D̃^{-1/2}`
    #[default]
    SymSelfloop,
    /// `D̃^{-1} (A + I)`
    Row,
    /// `A + I`
    RawSelfloop,
}

impl std::str::FromStr for AdjacencyScheme {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "sym_selfloop" => Ok(Self::SymSelfloop),
            "row" => Ok(Self::Row),
            "raw_selfloop" => Ok(Self::RawSelfloop),
            other => Err(format!("unknown adjacency scheme '{other}'")),
        }
    }
}

/// Dense propagation matrix of `g` under `scheme`.
pub fn normalize_adjacency(g: &Graph, scheme: AdjacencyScheme) -> DenseMatrix {
    let n = g.num_nodes();
    let mut a = DenseMatrix::identity(n);
    for &(u, v) in g.edges() {
        a.set(u, v, 1.0);
        a.set(v, u, 1.0);
    }
    // degree of A + I
    let deg: Vec<f64> = g.degrees().iter().map(|&d| d as f64 + 1.0).collect();
    match scheme {
        AdjacencyScheme::RawSelfloop => a,
        AdjacencyScheme::Row => DenseMatrix::from_fn(n, n, |r, c| a.get(r, c) / deg[r]),
        AdjacencyScheme::SymSelfloop => {
            let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
            DenseMatrix::from_fn(n, n, |r, c| a.get(r, c) * inv_sqrt[r] * inv_sqrt[c])
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn ones(n: usize) -> DenseMatrix {
        DenseMatrix::filled(n, 1, 1.0)
    }

    #[test]
    fn graph_canonicalises_edges() {
        let g = Graph::new(3, [(1, 0), (0, 1), (2, 2), (2, 1)], ones(3), None).unwrap();
        assert_eq!(g.edges(), &[(0, 1), (1, 2)]);
        assert_eq!(g.degrees(), vec![1, 2, 1]);
    }

    #[test]
    fn graph_rejects_bad_input() {
        assert!(Graph::new(2, [(0, 2)], ones(2), None).is_err());
        assert!(Graph::new(2, [], ones(3), None).is_err());
        assert!(Graph::new(0, [], ones(1), None).is_err());
    }

    #[test]
    fn dataset_checks_labels_and_dims() {
        let g0 = Graph::new(2, [(0, 1)], ones(2), Some(0)).unwrap();
        let g1 = Graph::new(1, [], ones(1), Some(2)).unwrap();
        assert!(Dataset::new("x", vec![g0.clone(), g1.clone()], 2).is_err());
        let d = Dataset::new("x", vec![g0.clone(), g1], 3).unwrap();
        assert_eq!(d.warnings, vec!["class 1 has no graphs".to_string()]);
        let wide = Graph::new(1, [], DenseMatrix::zeros(1, 2), Some(0)).unwrap();
        assert!(Dataset::new("x", vec![g0, wide], 2).is_err());
    }

    #[test]
    fn isolated_node_selfloop() {
        let g = Graph::new(1, [], ones(1), None).unwrap();
        assert_eq!(normalize_adjacency(&g, AdjacencyScheme::SymSelfloop).values(), &[1.0]);
    }

    #[test]
    fn two_node_sym_normalisation() {
        let g = Graph::new(2, [(0, 1)], ones(2), None).unwrap();
        let a = normalize_adjacency(&g, AdjacencyScheme::SymSelfloop);
        for v in a.values() {
            assert!((v - 0.5).abs() < 1e-15);
        }
        let raw = normalize_adjacency(&g, AdjacencyScheme::RawSelfloop);
        assert_eq!(raw.values(), &[1.0, 1.0, 1.0, 1.0]);
    }

    fn random_graph(rng: &mut crate::seed::Rng, n: usize, p: f64) -> Graph {
        let mut edges = Vec::new();
        for u in 0..n {
            for v in u + 1..n {
                if rng.random::<f64>() < p {
                    edges.push((u, v));
                }
            }
        }
        Graph::new(n, edges, ones(n), None).unwrap()
    }

    #[test]
    fn row_scheme_rows_sum_to_one() {
        let mut rng = crate::seed::rng(3);
        for _ in 0..20 {
            let n = rng.random_range(1..12);
            let g = random_graph(&mut rng, n, 0.3);
            let a = normalize_adjacency(&g, AdjacencyScheme::Row);
            for r in 0..n {
                assert!((a.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn sym_scheme_is_symmetric_with_unit_spectral_radius() {
        let mut rng = crate::seed::rng(4);
        for _ in 0..20 {
            let n = rng.random_range(1..12);
            let g = random_graph(&mut rng, n, 0.4);
            let a = normalize_adjacency(&g, AdjacencyScheme::SymSelfloop);
            assert!(a.is_symmetric(1e-12));
            // power iteration on A²  (PSD, so the dominant eigenvalue is ρ(A)²)
            let a2 = a.matmul(&a).unwrap();
            let mut v = DenseMatrix::from_fn(n, 1, |r, _| 1.0 + r as f64 * 0.1);
            let mut lambda = 0.0;
            for _ in 0..500 {
                let w = a2.matmul(&v).unwrap();
                lambda = w.frobenius_norm() / v.frobenius_norm();
                v = w.scale(1.0 / w.frobenius_norm());
            }
            assert!(lambda.sqrt() <= 1.0 + 1e-9, "spectral radius {}", lambda.sqrt());
        }
    }

    #[test]
    fn permutation_relabels_consistently() {
        let x = DenseMatrix::from_fn(3, 2, |r, c| (r * 2 + c) as f64);
        let g = Graph::new(3, [(0, 1), (1, 2)], x, Some(0)).unwrap();
        let p = g.permute_nodes(&[2, 0, 1]).unwrap();
        assert_eq!(p.edges(), &[(0, 1), (0, 2)]);
        assert_eq!(p.attributes().row(2), g.attributes().row(0));
        assert_eq!(p.attributes().row(0), g.attributes().row(1));
    }
}
