use rayon::prelude::*;

use super::knn::KnnGraph;

/// Symmetric membership graph produced from a kNN graph.
#[derive(Debug, Clone, PartialEq)]
pub struct FuzzyGraph {
    pub n_points: usize,
    /// Undirected edges `(i, j, w)` with `i < j`, sorted, `w` in (0, 1].
    pub edges: Vec<(usize, usize, f64)>,
    pub rho: Vec<f64>,
    pub sigma: Vec<f64>,
}

const SIGMA_ITERS: usize = 200;
const SIGMA_TOL: f64 = 1e-12;

fn membership_sum(dists: &[f64], rho: f64, sigma: f64) -> f64 {
    dists
        .iter()
        .map(|&d| (-(d - rho).max(0.0) / sigma).exp())
        .sum()
}

/// Solves `sum_j exp(-max(0, d_j - rho) / sigma) = log2(k)` for sigma by bisection.
///
/// The search interval is `[1e-3, 1e3]` times the mean neighbor distance
/// (times 1 when all distances are zero); the result is clamped to it.
pub fn solve_sigma(dists: &[f64], rho: f64) -> f64 {
    let target = (dists.len() as f64).log2();
    let mean = dists.iter().sum::<f64>() / dists.len() as f64;
    let scale = if mean > 0.0 { mean } else { 1.0 };
    let (mut lo, mut hi) = (1e-3 * scale, 1e3 * scale);
    if membership_sum(dists, rho, lo) >= target {
        return lo;
    }
    if membership_sum(dists, rho, hi) <= target {
        return hi;
    }
    for _ in 0..SIGMA_ITERS {
        let mid = 0.5 * (lo + hi);
        let s = membership_sum(dists, rho, mid);
        if (s - target).abs() < SIGMA_TOL {
            return mid;
        }
        if s > target {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    0.5 * (lo + hi)
}

/// Directed memberships `exp(-max(0, d - rho_i) / sigma_i)` per kNN row.
pub fn directed_memberships(knn: &KnnGraph) -> (Vec<f64>, Vec<f64>, Vec<Vec<f64>>) {
    let rows: Vec<(f64, f64, Vec<f64>)> = knn
        .distances
        .par_iter()
        .map(|d| {
            let rho = d[0];
            let sigma = solve_sigma(d, rho);
            let w = d
                .iter()
                .map(|&x| (-(x - rho).max(0.0) / sigma).exp())
                .collect();
            (rho, sigma, w)
        })
        .collect();
    let mut rho = Vec::with_capacity(rows.len());
    let mut sigma = Vec::with_capacity(rows.len());
    let mut w = Vec::with_capacity(rows.len());
    for (r, s, v) in rows {
        rho.push(r);
        sigma.push(s);
        w.push(v);
    }
    (rho, sigma, w)
}

/// Fuzzy union `a + b - a*b`.
pub fn fuzzy_union(a: f64, b: f64) -> f64 {
    a + b - a * b
}

pub fn fuzzy_weights(knn: &KnnGraph) -> FuzzyGraph {
    let n = knn.n_points();
    let (rho, sigma, w) = directed_memberships(knn);
    let mut directed: std::collections::BTreeMap<(usize, usize), (f64, f64)> =
        std::collections::BTreeMap::new();
    for i in 0..n {
        for (&j, &wij) in knn.indices[i].iter().zip(&w[i]) {
            let e = directed.entry((i.min(j), i.max(j))).or_insert((0.0, 0.0));
            if i < j {
                e.0 = wij;
            } else {
                e.1 = wij;
            }
        }
    }
    let edges = directed
        .into_iter()
        .map(|((i, j), (a, b))| (i, j, fuzzy_union(a, b)))
        .filter(|&(_, _, w)| w > 0.0)
        .collect();
    FuzzyGraph {
        n_points: n,
        edges,
        rho,
        sigma,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::project::{knn::knn_graph, Metric};
    use rand::{Rng, SeedableRng};

    #[test]
    fn nearest_neighbor_weight_is_one() {
        let pts: Vec<Vec<f64>> = (0..6).map(|i| vec![(i * i) as f64]).collect();
        let g = knn_graph(&pts, 3, Metric::Euclidean).unwrap();
        let (_, _, w) = directed_memberships(&g);
        for row in w {
            assert_eq!(row[0], 1.0);
        }
    }

    #[test]
    fn union_examples() {
        assert_eq!(fuzzy_union(1.0, 0.0), 1.0);
        assert_eq!(fuzzy_union(0.5, 0.5), 0.75);
    }

    #[test]
    fn sigma_solves_log2k() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let pts: Vec<Vec<f64>> = (0..40)
            .map(|_| (0..4).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let g = knn_graph(&pts, 5, Metric::Euclidean).unwrap();
        let fg = fuzzy_weights(&g);
        for i in 0..40 {
            let s = membership_sum(&g.distances[i], fg.rho[i], fg.sigma[i]);
            assert!((s - 5f64.log2()).abs() < 1e-5, "point {i}: {s}");
        }
    }

    #[test]
    fn degenerate_equal_distances_clamp() {
        let s = solve_sigma(&[2.0, 2.0, 2.0, 2.0], 2.0);
        assert!((s - 2e-3).abs() < 1e-15);
        let s = solve_sigma(&[0.0, 0.0, 0.0], 0.0);
        assert!((s - 1e-3).abs() < 1e-15);
    }

    #[test]
    fn symmetric_output() {
        let pts: Vec<Vec<f64>> = (0..10).map(|i| vec![i as f64, (i % 3) as f64]).collect();
        let g = knn_graph(&pts, 3, Metric::Euclidean).unwrap();
        let fg = fuzzy_weights(&g);
        assert!(fg.edges.iter().all(|&(i, j, w)| i < j && w > 0.0 && w <= 1.0));
    }
}
