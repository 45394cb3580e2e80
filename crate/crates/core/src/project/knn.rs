use rayon::prelude::*;

use super::Metric;
use crate::error::{Error, Result};

/// Exact k-nearest-neighbor lists, sorted by (distance, index). No self edges.
#[derive(Debug, Clone, PartialEq)]
pub struct KnnGraph {
    pub k: usize,
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
}

impl KnnGraph {
    pub fn n_points(&self) -> usize {
        self.indices.len()
    }
}

pub fn distance(a: &[f64], b: &[f64], metric: Metric) -> f64 {
    match metric {
        Metric::Euclidean => a
            .iter()
            .zip(b)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt(),
        Metric::Cosine => {
            let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
            for (x, y) in a.iter().zip(b) {
                dot += x * y;
                na += x * x;
                nb += y * y;
            }
            match (na > 0.0, nb > 0.0) {
                (true, true) => (1.0 - dot / (na.sqrt() * nb.sqrt())).max(0.0),
                (false, false) => 0.0,
                _ => 1.0,
            }
        }
    }
}

/// Brute-force kNN over all pairs, parallel over query points.
pub fn knn_graph<V: AsRef<[f64]> + Sync>(vectors: &[V], k: usize, metric: Metric) -> Result<KnnGraph> {
    let n = vectors.len();
    if k == 0 || n < k + 1 {
        return Err(Error::Precondition(format!(
            "kNN with k={k} needs at least {} points, got {n}",
            k + 1
        )));
    }
    let rows: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = vectors[i].as_ref();
            let mut cand: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| (distance(a, vectors[j].as_ref(), metric), j))
                .collect();
            let cmp = |x: &(f64, usize), y: &(f64, usize)| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1));
            cand.select_nth_unstable_by(k - 1, cmp);
            cand.truncate(k);
            cand.sort_by(cmp);
            cand.into_iter().map(|(d, j)| (j, d)).unzip()
        })
        .collect();
    let (indices, distances) = rows.into_iter().unzip();
    Ok(KnnGraph {
        k,
        indices,
        distances,
    })
}
