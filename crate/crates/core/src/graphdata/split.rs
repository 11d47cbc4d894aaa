use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{DataError, Dataset};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitKind {
    /// Train/val from the smaller graphs, test from the larger ones.
    Ood,
    /// Shuffled 80/10/10.
    Random,
}

impl std::str::FromStr for SplitKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ood" => Ok(Self::Ood),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown split kind '{other}' (expected ood or random)")),
        }
    }
}

/// Disjoint train/validation/test index lists into a dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub kind: SplitKind,
    pub seed: u64,
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl SplitSpec {
    /// Checks disjointness and range against a dataset of `len` graphs.
    pub fn validate(&self, len: usize) -> Result<(), DataError> {
        let mut seen = vec![false; len];
        for (part, idx) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in idx {
                if i >= len {
                    return Err(DataError::Split(format!("{part} index {i} out of range for {len} graphs")));
                }
                if seen[i] {
                    return Err(DataError::Split(format!("index {i} appears twice")));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

/// Median of node counts; mean of the two middle values for even counts.
pub(crate) fn median_size(sizes: &[usize]) -> f64 {
    let mut s = sizes.to_vec();
    s.sort_unstable();
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2] as f64
    } else {
        (s[n / 2 - 1] + s[n / 2]) as f64 / 2.0
    }
}

/// Median node count over the dataset, the size threshold of [`ood_split`].
pub fn median_node_count(d: &Dataset) -> f64 {
    let sizes: Vec<usize> = d.graphs().iter().map(|g| g.num_nodes()).collect();
    median_size(&sizes)
}

/// Size-shift split: graphs with at most the median node count form the
/// small group (80% train, 20% validation); the test set is drawn from the
/// larger graphs with as many members as the validation set.
pub fn ood_split(d: &Dataset, seed: u64) -> Result<SplitSpec, DataError> {
    if d.len() < 5 {
        return Err(DataError::Split(format!("ood split needs at least 5 graphs, got {}", d.len())));
    }
    let sizes: Vec<usize> = d.graphs().iter().map(|g| g.num_nodes()).collect();
    let median = median_size(&sizes);
    let (mut small, mut large): (Vec<usize>, Vec<usize>) =
        (0..d.len()).partition(|&i| sizes[i] as f64 <= median);
    if small.is_empty() || large.is_empty() {
        return Err(DataError::Split(format!(
            "size groups around median {median} are not both populated ({} small, {} large)",
            small.len(),
            large.len()
        )));
    }
    let mut rng = seed::rng(seed::derive(seed, &[0x00d]));
    small.shuffle(&mut rng);
    large.shuffle(&mut rng);

    let n_small = small.len();
    let n_train = ((0.8 * n_small as f64).round() as usize).clamp(1, n_small.saturating_sub(1).max(1));
    let mut train = small[..n_train].to_vec();
    let mut val = small[n_train..].to_vec();
    let mut warnings = Vec::new();
    let n_test = if large.len() < val.len() {
        warnings.push(format!(
            "large group has {} graphs, fewer than the {} validation graphs; using all of it",
            large.len(),
            val.len()
        ));
        large.len()
    } else {
        val.len()
    };
    let mut test = large[..n_test].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        kind: SplitKind::Ood,
        seed,
        train,
        val,
        test,
        warnings,
    })
}

/// Shuffled 80/10/10 split; validation and test sizes are floored, the
/// remainder goes to training.
pub fn random_split(d: &Dataset, seed: u64) -> Result<SplitSpec, DataError> {
    let n = d.len();
    if n < 10 {
        return Err(DataError::Split(format!("random split needs at least 10 graphs, got {n}")));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut seed::rng(seed::derive(seed, &[0x0a2d])));
    let n_val = n / 10;
    let n_test = n / 10;
    let n_train = n - n_val - n_test;
    let mut train = idx[..n_train].to_vec();
    let mut val = idx[n_train..n_train + n_val].to_vec();
    let mut test = idx[n_train + n_val..].to_vec();
    train.sort_unstable();
    val.sort_unstable();
    test.sort_unstable();
    Ok(SplitSpec {
        kind: SplitKind::Random,
        seed,
        train,
        val,
        test,
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphdata::Graph;
    use crate::tensor::DenseMatrix;

    fn dataset(sizes: &[usize]) -> Dataset {
        let graphs = sizes
            .iter()
            .enumerate()
            .map(|(i, &n)| {
                let edges: Vec<_> = (1..n).map(|v| (v - 1, v)).collect();
                Graph::new(n, edges, DenseMatrix::filled(n, 1, 1.0), Some(i % 2)).unwrap()
            })
            .collect();
        Dataset::new("sizes", graphs, 2).unwrap()
    }

    #[test]
    fn ood_split_follows_median_rule() {
        let d = dataset(&[2, 2, 3, 3, 10, 11, 12, 13, 14, 15]);
        for seed in 0..10 {
            let s = ood_split(&d, seed).unwrap();
            assert_eq!(s.train.len(), 4);
            assert_eq!(s.val.len(), 1);
            assert_eq!(s.test.len(), 1);
            let small: Vec<usize> = vec![0, 1, 2, 3, 4];
            for i in s.train.iter().chain(&s.val) {
                assert!(small.contains(i));
            }
            assert!(d.graph(s.test[0]).num_nodes() > 10);
            s.validate(d.len()).unwrap();
        }
    }

    #[test]
    fn ood_split_is_deterministic() {
        let d = dataset(&[2, 5, 3, 8, 10, 11, 4, 13, 9, 15, 6, 7]);
        assert_eq!(ood_split(&d, 42).unwrap(), ood_split(&d, 42).unwrap());
        let splits: Vec<_> = (0..8).map(|s| ood_split(&d, s).unwrap().train).collect();
        assert!(splits.windows(2).any(|w| w[0] != w[1]));
    }

    #[test]
    fn ood_split_errors_and_warnings() {
        assert!(ood_split(&dataset(&[3, 3, 3, 3, 3]), 0).is_err());
        assert!(ood_split(&dataset(&[1, 2, 3]), 0).is_err());
        // one large graph but two validation graphs
        let s = ood_split(&dataset(&[2, 2, 2, 2, 2, 2, 2, 2, 2, 2, 9]), 0).unwrap();
        assert_eq!(s.val.len(), 2);
        assert_eq!(s.test.len(), 1);
        assert_eq!(s.warnings.len(), 1);
    }

    #[test]
    fn random_split_sizes_and_coverage() {
        let d = dataset(&[3; 10]);
        let s = random_split(&d, 1).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (8, 1, 1));
        let d = dataset(&[3; 37]);
        let s = random_split(&d, 9).unwrap();
        assert_eq!((s.train.len(), s.val.len(), s.test.len()), (31, 3, 3));
        let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_eq!(s, random_split(&d, 9).unwrap());
        assert!(random_split(&dataset(&[3; 9]), 0).is_err());
    }

    #[test]
    fn validate_catches_overlap() {
        let mut s = random_split(&dataset(&[3; 10]), 1).unwrap();
        s.test.push(s.train[0]);
        assert!(s.validate(10).is_err());
    }
}
