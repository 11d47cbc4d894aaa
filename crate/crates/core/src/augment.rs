//! Graph views for the contrastive tasks: attribute shuffling, and
//! importance-aware edge dropping plus attribute masking.
//!
//! No view ever deletes nodes, so node `i` of a view is node `i` of the
//! input graph.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graphdata::{DataError, Graph};
use crate::seed;
use crate::tensor::DenseMatrix;

/// Added to the score spread so equal maxima and means never divide by zero.
pub const SCORE_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("graph has no edges to score")]
    EmptyScores,
    #[error("invalid view spec: {field} = {value} outside {range}")]
    InvalidSpec {
        field: &'static str,
        value: f64,
        range: &'static str,
    },
    #[error(transparent)]
    Data(#[from] DataError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewKind {
    Raw,
    AttrShuffle,
    Adaptive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ViewSpec {
    pub kind: ViewKind,
    pub p_edge_base: f64,
    pub p_attr_base: f64,
    pub p_cut: f64,
    pub seed: u64,
}

impl Default for ViewSpec {
    fn default() -> Self {
        Self {
            kind: ViewKind::Adaptive,
            p_edge_base: 0.2,
            p_attr_base: 0.2,
            p_cut: 0.5,
            seed: 0,
        }
    }
}

impl ViewSpec {
    pub fn validate(&self) -> Result<(), AugmentError> {
        for (field, value) in [("p_edge_base", self.p_edge_base), ("p_attr_base", self.p_attr_base)] {
            if !(0.0..=1.0).contains(&value) {
                return Err(AugmentError::InvalidSpec { field, value, range: "[0, 1]" });
            }
        }
        if !(self.p_cut > 0.0 && self.p_cut <= 1.0) {
            return Err(AugmentError::InvalidSpec {
                field: "p_cut",
                value: self.p_cut,
                range: "(0, 1]",
            });
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Permutes attribute rows uniformly at random; topology is unchanged.
pub fn shuffle_attributes(g: &Graph, seed: u64) -> Graph {
    let mut perm: Vec<usize> = (0..g.num_nodes()).collect();
    perm.shuffle(&mut seed::rng(seed));
    let attrs = g.attributes().select_rows(&perm);
    g.with_attributes(attrs).expect("row count preserved")
}

/// Mean endpoint degree of every stored edge.
pub fn edge_importance(g: &Graph) -> Result<Vec<f64>, AugmentError> {
    if g.num_edges() == 0 {
        return Err(AugmentError::EmptyScores);
    }
    let deg = g.degrees();
    Ok(g.edges()
        .iter()
        .map(|&(u, v)| (deg[u] + deg[v]) as f64 / 2.0)
        .collect())
}

/// `s_d = (1/N) Σ_v |X[v, d]| · deg(v)` for every attribute dimension.
pub fn attribute_importance(g: &Graph) -> Vec<f64> {
    let deg = g.degrees();
    let x = g.attributes();
    let n = g.num_nodes() as f64;
    (0..x.cols())
        .map(|d| (0..x.rows()).map(|v| x.get(v, d).abs() * deg[v] as f64).sum::<f64>() / n)
        .collect()
}

/// Maps importance scores to removal probabilities:
/// `min((s_max − s) / (s_max − s_mean + ε) · base, cut)`.
/// Higher scores never get higher probabilities. When all scores are equal,
/// every entry gets `base`.
pub fn drop_probabilities(scores: &[f64], base: f64, cut: f64) -> Vec<f64> {
    if scores.is_empty() {
        return Vec::new();
    }
    let max = scores.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = scores.iter().cloned().fold(f64::INFINITY, f64::min);
    if max == min {
        return vec![base; scores.len()];
    }
    let mean = scores.iter().sum::<f64>() / scores.len() as f64;
    let spread = max - mean + SCORE_EPS;
    scores
        .iter()
        .map(|s| ((max - s) / spread * base).min(cut))
        .collect()
}

/// Importance-aware edge dropping and attribute masking.
///
/// Each edge is dropped independently with its mapped probability; if every
/// edge would go, the most important one (lowest index on ties) is kept.
/// Masked attribute dimensions are zeroed for every node.
pub fn adaptive_view(g: &Graph, spec: &ViewSpec) -> Result<Graph, AugmentError> {
    spec.validate()?;
    let edge_scores = edge_importance(g)?;
    let p_edge = drop_probabilities(&edge_scores, spec.p_edge_base, spec.p_cut);
    let p_attr = drop_probabilities(&attribute_importance(g), spec.p_attr_base, spec.p_cut);
    let mut rng = seed::rng(spec.seed);

    let mut kept: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .zip(&p_edge)
        .filter(|(_, &p)| rng.random::<f64>() >= p)
        .map(|(&e, _)| e)
        .collect();
    if kept.is_empty() {
        let mut best = 0;
        for (i, &s) in edge_scores.iter().enumerate() {
            if s > edge_scores[best] {
                best = i;
            }
        }
        kept.push(g.edges()[best]);
    }

    let masked: Vec<bool> = p_attr.iter().map(|&p| rng.random::<f64>() < p).collect();
    let x = g.attributes();
    let attrs = if masked.iter().any(|&m| m) {
        DenseMatrix::from_fn(x.rows(), x.cols(), |r, c| if masked[c] { 0.0 } else { x.get(r, c) })
    } else {
        x.clone()
    };
    Ok(Graph::new(g.num_nodes(), kept, attrs, g.label())?)
}

/// Builds the view described by `spec`.
pub fn make_view(g: &Graph, spec: &ViewSpec) -> Result<Graph, AugmentError> {
    match spec.kind {
        ViewKind::Raw => Ok(g.clone()),
        ViewKind::AttrShuffle => Ok(shuffle_attributes(g, spec.seed)),
        ViewKind::Adaptive => adaptive_view(g, spec),
    }
}

/// [`adaptive_view`], falling back to the unchanged graph when it has no
/// edges to score.
pub fn adaptive_view_or_raw(g: &Graph, spec: &ViewSpec) -> Result<Graph, AugmentError> {
    match adaptive_view(g, spec) {
        Err(AugmentError::EmptyScores) => Ok(g.clone()),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn graph(n: usize, edges: &[(usize, usize)]) -> Graph {
        let x = DenseMatrix::from_fn(n, 3, |r, c| (r * 3 + c) as f64 - 2.0);
        Graph::new(n, edges.iter().copied(), x, Some(0)).unwrap()
    }

    fn spec(p_edge: f64, p_attr: f64, cut: f64, seed: u64) -> ViewSpec {
        ViewSpec {
            kind: ViewKind::Adaptive,
            p_edge_base: p_edge,
            p_attr_base: p_attr,
            p_cut: cut,
            seed,
        }
    }

    #[test]
    fn shuffle_single_node_is_identity() {
        let g = graph(1, &[]);
        assert_eq!(shuffle_attributes(&g, 9), g);
    }

    #[test]
    fn shuffle_preserves_row_multiset_and_topology() {
        let g = graph(6, &[(0, 1), (1, 2), (4, 5)]);
        let s = shuffle_attributes(&g, 3);
        assert_eq!(s.edges(), g.edges());
        let sorted = |m: &DenseMatrix| {
            let mut rows: Vec<Vec<f64>> = (0..m.rows()).map(|r| m.row(r).to_vec()).collect();
            rows.sort_by(|a, b| a.partial_cmp(b).unwrap());
            rows
        };
        assert_eq!(sorted(s.attributes()), sorted(g.attributes()));
        assert_eq!(shuffle_attributes(&g, 3), s);
    }

    #[test]
    fn edge_scores() {
        assert_eq!(edge_importance(&graph(3, &[(0, 1), (1, 2)])).unwrap(), vec![1.5, 1.5]);
        assert_eq!(edge_importance(&graph(3, &[(0, 1), (1, 2), (0, 2)])).unwrap(), vec![2.0; 3]);
        assert_eq!(edge_importance(&graph(4, &[(0, 1), (0, 2), (0, 3)])).unwrap(), vec![2.0; 3]);
        assert!(matches!(edge_importance(&graph(2, &[])), Err(AugmentError::EmptyScores)));
    }

    #[test]
    fn attribute_scores() {
        let tri = Graph::new(3, [(0, 1), (1, 2), (0, 2)], DenseMatrix::filled(3, 1, 1.0), None).unwrap();
        assert_eq!(attribute_importance(&tri), vec![2.0]);
        let x = DenseMatrix::from_rows(&[[0.0, 1.0], [0.0, -2.0], [0.0, 0.5]]).unwrap();
        let g = Graph::new(3, [(0, 1), (1, 2)], x.clone(), None).unwrap();
        let s = attribute_importance(&g);
        assert_eq!(s[0], 0.0);
        let scaled = g.with_attributes(DenseMatrix::from_fn(3, 2, |r, c| x.get(r, c) * if c == 1 { -3.0 } else { 1.0 })).unwrap();
        assert!((attribute_importance(&scaled)[1] - 3.0 * s[1]).abs() < 1e-12);
    }

    #[test]
    fn zero_probabilities_give_identical_view() {
        let g = graph(5, &[(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]);
        for seed in 0..10 {
            assert_eq!(adaptive_view(&g, &spec(0.0, 0.0, 0.5, seed)).unwrap(), g);
        }
    }

    #[test]
    fn certain_drop_keeps_one_edge() {
        let g = graph(3, &[(0, 1), (1, 2), (0, 2)]);
        let probs = drop_probabilities(&edge_importance(&g).unwrap(), 1.0, 1.0);
        assert_eq!(probs, vec![1.0; 3]);
        let v = adaptive_view(&g, &spec(1.0, 0.0, 1.0, 4)).unwrap();
        assert_eq!(v.num_edges(), 1);
        assert_eq!(v.edges(), &[(0, 1)]);
        assert_eq!(v.num_nodes(), 3);
    }

    #[test]
    fn monotone_mapping() {
        let scores = [1.0, 4.0, 2.5, 2.5, 9.0, 0.5];
        let p = drop_probabilities(&scores, 0.3, 0.6);
        for i in 0..scores.len() {
            for j in 0..scores.len() {
                if scores[i] > scores[j] {
                    assert!(p[i] <= p[j]);
                }
            }
            assert!((0.0..=0.6).contains(&p[i]));
        }
    }

    #[test]
    fn expected_kept_edges_matches_probabilities() {
        // a "lollipop": star hub plus a tail, so scores differ
        let g = graph(7, &[(0, 1), (0, 2), (0, 3), (0, 4), (4, 5), (5, 6), (1, 2)]);
        let s = spec(0.4, 0.0, 0.7, 0);
        let p = drop_probabilities(&edge_importance(&g).unwrap(), 0.4, 0.7);
        let expected: f64 = p.iter().map(|p| 1.0 - p).sum();
        let var: f64 = p.iter().map(|p| p * (1.0 - p)).sum();
        let trials = 10_000;
        let total: usize = (0..trials)
            .map(|t| adaptive_view(&g, &s.with_seed(t)).unwrap().num_edges())
            .sum();
        let mean = total as f64 / trials as f64;
        let sigma = (var / trials as f64).sqrt();
        assert!((mean - expected).abs() < 3.0 * sigma, "mean {mean} expected {expected} σ {sigma}");
    }

    #[test]
    fn views_never_add_structure() {
        let g = graph(6, &[(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 5), (1, 4)]);
        for seed in 0..50 {
            let v = adaptive_view(&g, &spec(0.5, 0.5, 0.9, seed)).unwrap();
            assert_eq!(v.num_nodes(), g.num_nodes());
            assert_eq!(v.attr_dim(), g.attr_dim());
            assert!(v.edges().iter().all(|e| g.edges().contains(e)));
            for r in 0..6 {
                for c in 0..3 {
                    let a = v.attributes().get(r, c);
                    assert!(a == 0.0 || a == g.attributes().get(r, c));
                }
            }
            assert_eq!(adaptive_view(&g, &spec(0.5, 0.5, 0.9, seed)).unwrap(), v);
        }
    }

    #[test]
    fn spec_validation() {
        assert!(spec(1.5, 0.0, 0.5, 0).validate().is_err());
        assert!(spec(0.1, -0.1, 0.5, 0).validate().is_err());
        assert!(spec(0.1, 0.1, 0.0, 0).validate().is_err());
        assert!(ViewSpec::default().validate().is_ok());
    }

    #[test]
    fn edgeless_graph_falls_back() {
        let g = graph(3, &[]);
        assert!(adaptive_view(&g, &ViewSpec::default()).is_err());
        assert_eq!(adaptive_view_or_raw(&g, &ViewSpec::default()).unwrap(), g);
    }
}
