//! Uniform vertex sampling of mini-batches and the per-batch hypergraphs
//! built from their induced sub-adjacencies.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Hypergraph;
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Mini-batch = `batch_size` vertices drawn uniformly without replacement,
/// together with the subgraph they induce.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniBatchSpec {
    pub batch_size: usize,
}

impl MiniBatchSpec {
    pub fn new(batch_size: usize) -> Self {
        Self { batch_size }
    }
}

/// Seeded stream of sorted vertex batches.
#[derive(Debug, Clone)]
pub struct BatchSampler {
    spec: MiniBatchSpec,
    n_vertices: usize,
    rng: ChaCha8Rng,
}

impl BatchSampler {
    pub fn new(spec: MiniBatchSpec, n_vertices: usize, seed: u64) -> Result<Self> {
        if spec.batch_size == 0 {
            return Err(Error::EmptySample("batch size is zero".into()));
        }
        if spec.batch_size > n_vertices {
            return Err(Error::InvalidArgument(format!(
                "batch size {} exceeds {} vertices",
                spec.batch_size, n_vertices
            )));
        }
        Ok(Self {
            spec,
            n_vertices,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn next_batch(&mut self) -> Vec<usize> {
        let mut batch = index::sample(&mut self.rng, self.n_vertices, self.spec.batch_size).into_vec();
        batch.sort_unstable();
        batch
    }
}

/// Row nonzero counts of `pattern(a) ∪ I`.
pub(crate) fn self_looped_row_weights(a: &SparseMatrix) -> Vec<u64> {
    (0..a.n_rows())
        .map(|i| {
            let cols = a.row_cols(i);
            cols.len() as u64 + u64::from(cols.binary_search(&i).is_err())
        })
        .collect()
}

/// Sub-matrix of `a` on the sorted vertex set `batch`, reindexed to
/// `0..batch.len()`.
pub fn induced_subgraph(a: &SparseMatrix, batch: &[usize]) -> Result<SparseMatrix> {
    if batch.is_empty() {
        return Err(Error::EmptySample("batch has no vertices".into()));
    }
    if batch.windows(2).any(|w| w[0] >= w[1]) || *batch.last().unwrap() >= a.n_rows() {
        return Err(Error::InvalidArgument("batch must be sorted, distinct and in range".into()));
    }
    let mut local = vec![usize::MAX; a.n_cols()];
    for (pos, &v) in batch.iter().enumerate() {
        local[v] = pos;
    }
    Ok(a.select(batch, batch.len(), |c| (local[c] != usize::MAX).then(|| local[c])))
}

/// Column-net hypergraph of the self-looped induced sub-adjacency of `batch`,
/// expressed over the global vertex set: one net per batch vertex `j`,
/// pinning `j` and every batch vertex `i` with `a(i, j) != 0`.
pub fn batch_hypergraph(a: &SparseMatrix, batch: &[usize], vertex_weight: Vec<u64>) -> Result<Hypergraph> {
    let sub = induced_subgraph(a, batch)?;
    let mut nets: Vec<Vec<usize>> = batch.iter().map(|&j| vec![j]).collect();
    for (r, c, _) in sub.iter() {
        nets[c].push(batch[r]);
    }
    Hypergraph::new(a.n_rows(), nets, vertex_weight)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sampler_is_deterministic_and_sorted() {
        let spec = MiniBatchSpec::new(5);
        let mut s1 = BatchSampler::new(spec, 20, 9).unwrap();
        let mut s2 = BatchSampler::new(spec, 20, 9).unwrap();
        for _ in 0..10 {
            let b = s1.next_batch();
            assert_eq!(b, s2.next_batch());
            assert_eq!(b.len(), 5);
            assert!(b.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn sampler_rejects_bad_sizes() {
        assert!(matches!(
            BatchSampler::new(MiniBatchSpec::new(0), 4, 0),
            Err(Error::EmptySample(_))
        ));
        assert!(BatchSampler::new(MiniBatchSpec::new(5), 4, 0).is_err());
    }

    #[test]
    fn full_batch_is_every_vertex() {
        let mut s = BatchSampler::new(MiniBatchSpec::new(6), 6, 1).unwrap();
        assert_eq!(s.next_batch(), vec![0, 1, 2, 3, 4, 5]);
    }

    #[test]
    fn induced_subgraph_keeps_internal_edges() {
        let a = SparseMatrix::from_pattern(4, 4, &[(0, 1), (1, 0), (1, 2), (2, 3), (3, 0)]).unwrap();
        let sub = induced_subgraph(&a, &[0, 1, 3]).unwrap();
        assert_eq!(sub.n_rows(), 3);
        let entries: Vec<_> = sub.iter().map(|(r, c, _)| (r, c)).collect();
        assert_eq!(entries, vec![(0, 1), (1, 0), (2, 0)]);
        assert!(induced_subgraph(&a, &[]).is_err());
        assert!(induced_subgraph(&a, &[2, 1]).is_err());
    }

    #[test]
    fn batch_hypergraph_uses_global_ids() {
        let a = SparseMatrix::from_pattern(4, 4, &[(0, 1), (1, 0), (1, 2), (2, 3), (3, 0)]).unwrap();
        let h = batch_hypergraph(&a, &[0, 1, 3], vec![1; 4]).unwrap();
        assert_eq!(h.n_vertices(), 4);
        assert_eq!(h.nets(), &[vec![0, 1, 3], vec![0, 1], vec![3]]);
    }

    #[test]
    fn self_looped_weights_count_diagonal_once() {
        let a = SparseMatrix::from_pattern(2, 2, &[(0, 0), (0, 1)]).unwrap();
        assert_eq!(self_looped_row_weights(&a), vec![2, 1]);
    }
}
