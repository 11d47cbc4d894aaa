//! Synthetic graph-classification datasets with class-specific motifs.
//!
//! Every graph is a chain of copies of its class motif (cycle, star, clique
//! or path, cycling through that list by class index), joined by single
//! bridge edges, plus a few random noise edges. Sizes are drawn uniformly,
//! so a split by size produces a size-shifted test set.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::graphdata::{DataError, Dataset, Graph};
use crate::seed;
use crate::tensor::DenseMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Motif {
    Cycle,
    Star,
    Clique,
    Path,
}

impl Motif {
    pub fn for_class(c: usize) -> Motif {
        [Motif::Cycle, Motif::Star, Motif::Clique, Motif::Path][c % 4]
    }

    fn edges(self, offset: usize, size: usize, out: &mut Vec<(usize, usize)>) {
        let v = |i: usize| offset + i;
        match self {
            Motif::Cycle => {
                for i in 0..size {
                    out.push((v(i), v((i + 1) % size)));
                }
            }
            Motif::Star => (1..size).for_each(|i| out.push((v(0), v(i)))),
            Motif::Clique => {
                for i in 0..size {
                    for j in i + 1..size {
                        out.push((v(i), v(j)));
                    }
                }
            }
            Motif::Path => (1..size).for_each(|i| out.push((v(i - 1), v(i)))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub num_graphs: usize,
    pub num_classes: usize,
    pub min_nodes: usize,
    pub max_nodes: usize,
    /// Nodes per motif copy.
    pub motif_size: usize,
    /// Random extra edges per node.
    pub noise: f64,
    /// Attribute columns: a constant 1 followed by Gaussian noise columns.
    pub attr_dim: usize,
    pub attr_noise: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            num_graphs: 120,
            num_classes: 2,
            min_nodes: 10,
            max_nodes: 40,
            motif_size: 5,
            noise: 0.05,
            attr_dim: 3,
            attr_noise: 0.1,
            seed: 0,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        let bad = |m: String| Err(DataError::InvalidDataset(m));
        if self.num_graphs == 0 || self.num_classes == 0 {
            return bad("synthetic dataset needs at least one graph and one class".into());
        }
        if self.motif_size < 3 {
            return bad(format!("motif_size = {} must be at least 3", self.motif_size));
        }
        if self.min_nodes < self.motif_size || self.max_nodes < self.min_nodes {
            return bad(format!(
                "need motif_size <= min_nodes <= max_nodes, got {} / {} / {}",
                self.motif_size, self.min_nodes, self.max_nodes
            ));
        }
        if self.attr_dim == 0 {
            return bad("attr_dim must be at least 1".into());
        }
        if !(self.noise >= 0.0 && self.attr_noise >= 0.0) {
            return bad("noise levels must be non-negative".into());
        }
        Ok(())
    }
}

fn synth_graph(spec: &SynthSpec, label: usize, rng: &mut seed::Rng) -> Result<Graph, DataError> {
    let n = rng.random_range(spec.min_nodes..=spec.max_nodes);
    let motif = Motif::for_class(label);
    let m = spec.motif_size;
    let mut edges = Vec::new();
    let copies = n / m;
    for k in 0..copies {
        motif.edges(k * m, m, &mut edges);
        if k > 0 {
            edges.push(((k - 1) * m, k * m));
        }
    }
    // leftover nodes hang off the last copy as a tail
    for v in copies * m..n {
        edges.push((v - 1, v));
    }
    let extra = (spec.noise * n as f64).round() as usize;
    for _ in 0..extra {
        let u = rng.random_range(0..n);
        let v = rng.random_range(0..n);
        edges.push((u, v));
    }
    let normal = Normal::new(0.0, spec.attr_noise.max(f64::MIN_POSITIVE)).expect("valid deviation");
    let attrs = DenseMatrix::from_fn(n, spec.attr_dim, |_, c| if c == 0 { 1.0 } else { normal.sample(rng) });
    Graph::new(n, edges, attrs, Some(label))
}

/// Generates `num_graphs` graphs with labels `i mod C`, deterministic in
/// `spec.seed`.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Dataset, DataError> {
    spec.validate()?;
    let mut rng = seed::rng(seed::derive(spec.seed, &[0x5e]));
    let graphs = (0..spec.num_graphs)
        .map(|i| synth_graph(spec, i % spec.num_classes, &mut rng))
        .collect::<Result<Vec<_>, _>>()?;
    Dataset::new(format!("synth-{}", spec.seed), graphs, spec.num_classes)
}
