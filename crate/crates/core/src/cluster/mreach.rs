use rayon::prelude::*;

use crate::error::{Error, Result};

pub(crate) fn euclid(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Core distances plus the points they were computed from;
/// `distance(a, b) = max(core[a], core[b], d(a, b))`.
#[derive(Debug, Clone)]
pub struct MutualReachability<'a, P> {
    points: &'a [P],
    pub core: Vec<f64>,
}

impl<P: AsRef<[f64]>> MutualReachability<'_, P> {
    pub fn distance(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 0.0;
        }
        let d = euclid(self.points[a].as_ref(), self.points[b].as_ref());
        d.max(self.core[a]).max(self.core[b])
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Dense row-major matrix; only sensible for small inputs.
    pub fn matrix(&self) -> Vec<Vec<f64>> {
        let n = self.len();
        (0..n)
            .map(|a| (0..n).map(|b| self.distance(a, b)).collect())
            .collect()
    }
}

/// Core distance = distance to the `min_samples`-th nearest other point.
pub fn mutual_reachability<P: AsRef<[f64]> + Sync>(
    points: &[P],
    min_samples: usize,
) -> Result<MutualReachability<'_, P>> {
    let n = points.len();
    if min_samples < 1 || n < min_samples + 1 {
        return Err(Error::Precondition(format!(
            "mutual reachability with min_samples={min_samples} needs at least {} points, got {n}",
            min_samples + 1
        )));
    }
    let core = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut d: Vec<f64> = (0..n)
                .filter(|&j| j != i)
                .map(|j| euclid(points[i].as_ref(), points[j].as_ref()))
                .collect();
            let (_, kth, _) = d.select_nth_unstable_by(min_samples - 1, f64::total_cmp);
            *kth
        })
        .collect();
    Ok(MutualReachability { points, core })
}

/// Prim's algorithm over the implicit complete mutual-reachability graph.
///
/// Starts at point 0; among equal candidate weights the lowest point index is
/// taken next. Returns `n - 1` edges `(a, b, weight)` in insertion order.
pub fn prim_mst<P: AsRef<[f64]>>(mr: &MutualReachability<'_, P>) -> Vec<(usize, usize, f64)> {
    let n = mr.len();
    if n < 2 {
        return Vec::new();
    }
    let mut in_tree = vec![false; n];
    let mut best = vec![f64::INFINITY; n];
    let mut from = vec![0usize; n];
    let mut edges = Vec::with_capacity(n - 1);
    let mut current = 0usize;
    in_tree[0] = true;
    for _ in 1..n {
        let mut next = usize::MAX;
        let mut next_w = f64::INFINITY;
        for v in 0..n {
            if in_tree[v] {
                continue;
            }
            let w = mr.distance(current, v);
            if w < best[v] {
                best[v] = w;
                from[v] = current;
            }
            if next == usize::MAX || best[v] < next_w {
                next = v;
                next_w = best[v];
            }
        }
        in_tree[next] = true;
        edges.push((from[next], next, next_w));
        current = next;
    }
    edges
}
