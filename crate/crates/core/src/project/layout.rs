//! Spectral initialization and stochastic-gradient layout refinement.

use std::sync::atomic::{AtomicU64, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::fuzzy::FuzzyGraph;
use super::{curve, ProjectionParams};

const NEGATIVE_SAMPLE_RATE: f64 = 5.0;
const GRAD_CLIP: f64 = 4.0;
const INIT_ITERS: usize = 2000;

fn clip(x: f64) -> f64 {
    x.clamp(-GRAD_CLIP, GRAD_CLIP)
}

/// Dense adjacency lists `(neighbor, weight)` for both edge directions.
fn adjacency(graph: &FuzzyGraph) -> Vec<Vec<(usize, f64)>> {
    let mut adj = vec![Vec::new(); graph.n_points];
    for &(i, j, w) in &graph.edges {
        adj[i].push((j, w));
        adj[j].push((i, w));
    }
    adj
}

fn orthonormalize(vs: &mut [Vec<f64>], basis: &[Vec<f64>]) -> bool {
    for k in 0..vs.len() {
        for b in basis {
            let d: f64 = vs[k].iter().zip(b).map(|(x, y)| x * y).sum();
            vs[k].iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        for p in 0..k {
            let (head, tail) = vs.split_at_mut(k);
            let d: f64 = tail[0].iter().zip(&head[p]).map(|(x, y)| x * y).sum();
            tail[0].iter_mut().zip(&head[p]).for_each(|(x, y)| *x -= d * y);
        }
        let n = vs[k].iter().map(|x| x * x).sum::<f64>().sqrt();
        if !(n > 1e-300) {
            return false;
        }
        vs[k].iter_mut().for_each(|x| *x /= n);
    }
    true
}

/// Two leading nontrivial eigenvectors of `D^-1/2 W D^-1/2` by seeded subspace
/// (block power) iteration on `(I + M) / 2`, whose spectrum lies in [0, 1].
pub fn spectral_init(graph: &FuzzyGraph, seed: u64) -> Option<Vec<[f64; 2]>> {
    let n = graph.n_points;
    if n < 3 || graph.edges.is_empty() {
        return None;
    }
    let adj = adjacency(graph);
    let deg: Vec<f64> = adj.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
    let inv_sqrt: Vec<f64> = deg
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d.sqrt() } else { 0.0 })
        .collect();
    let mut trivial: Vec<f64> = deg.iter().map(|d| d.sqrt()).collect();
    let tn = trivial.iter().map(|x| x * x).sum::<f64>().sqrt();
    trivial.iter_mut().for_each(|x| *x /= tn);
    let basis = vec![trivial];

    let apply = |v: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|i| {
                let mv: f64 = adj[i].iter().map(|&(j, w)| w * inv_sqrt[j] * v[j]).sum();
                0.5 * (v[i] + inv_sqrt[i] * mv)
            })
            .collect()
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut vs: Vec<Vec<f64>> = (0..2)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    if !orthonormalize(&mut vs, &basis) {
        return None;
    }
    for _ in 0..INIT_ITERS {
        let mut next: Vec<Vec<f64>> = vs.iter().map(|v| apply(v)).collect();
        if !orthonormalize(&mut next, &basis) {
            return None;
        }
        let change: f64 = next
            .iter()
            .zip(&vs)
            .map(|(a, b)| {
                let d: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                1.0 - d.abs()
            })
            .sum();
        vs = next;
        if change < 1e-12 {
            break;
        }
    }
    let coords: Vec<[f64; 2]> = (0..n).map(|i| [vs[0][i], vs[1][i]]).collect();
    if coords.iter().any(|c| !c[0].is_finite() || !c[1].is_finite()) {
        return None;
    }
    Some(coords)
}

pub fn random_init(n: usize, seed: u64) -> Vec<[f64; 2]> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
        .collect()
}

/// Rescales each axis to [0, 10]; a constant axis maps to 5.
fn rescale(points: &mut [[f64; 2]]) {
    for d in 0..2 {
        let lo = points.iter().map(|p| p[d]).fold(f64::INFINITY, f64::min);
        let hi = points.iter().map(|p| p[d]).fold(f64::NEG_INFINITY, f64::max);
        for p in points.iter_mut() {
            p[d] = if hi > lo { 10.0 * (p[d] - lo) / (hi - lo) } else { 5.0 };
        }
    }
}

struct Schedule {
    head: Vec<usize>,
    tail: Vec<usize>,
    epochs_per_sample: Vec<f64>,
}

fn schedule(graph: &FuzzyGraph, n_epochs: usize) -> Schedule {
    let max_w = graph.edges.iter().map(|e| e.2).fold(0.0, f64::max);
    let mut s = Schedule {
        head: Vec::new(),
        tail: Vec::new(),
        epochs_per_sample: Vec::new(),
    };
    for &(i, j, w) in &graph.edges {
        if w < max_w / n_epochs as f64 {
            continue;
        }
        for (h, t) in [(i, j), (j, i)] {
            s.head.push(h);
            s.tail.push(t);
            s.epochs_per_sample.push(max_w / w);
        }
    }
    s
}

fn attract_coeff(d2: f64, a: f64, b: f64) -> f64 {
    if d2 > 0.0 {
        -2.0 * a * b * d2.powf(b - 1.0) / (a * d2.powf(b) + 1.0)
    } else {
        0.0
    }
}

fn repulse_coeff(d2: f64, a: f64, b: f64) -> f64 {
    if d2 > 0.0 {
        2.0 * b / ((0.001 + d2) * (a * d2.powf(b) + 1.0))
    } else {
        0.0
    }
}

/// Returns the initial coordinates scaled to [0, 10]^2.
pub fn initial_layout(graph: &FuzzyGraph, seed: u64) -> Vec<[f64; 2]> {
    let mut init = spectral_init(graph, seed).unwrap_or_else(|| random_init(graph.n_points, seed));
    rescale(&mut init);
    init
}

/// Sequential SGD: bitwise reproducible for a fixed seed.
pub fn optimize(graph: &FuzzyGraph, params: &ProjectionParams) -> Vec<[f64; 2]> {
    let n = graph.n_points;
    if n == 0 {
        return Vec::new();
    }
    if n == 1 {
        return vec![[0.0, 0.0]];
    }
    let mut emb = initial_layout(graph, params.seed);
    if params.n_epochs == 0 || graph.edges.is_empty() {
        return emb;
    }
    let (a, b) = curve::fit_ab(params.min_dist, super::SPREAD);
    let sched = schedule(graph, params.n_epochs);
    let m = sched.head.len();
    let epochs_per_neg: Vec<f64> = sched
        .epochs_per_sample
        .iter()
        .map(|e| e / NEGATIVE_SAMPLE_RATE)
        .collect();
    let mut next_sample = sched.epochs_per_sample.clone();
    let mut next_neg = epochs_per_neg.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::stream(params.seed, 1));

    for epoch in 0..params.n_epochs {
        let alpha = 1.0 - epoch as f64 / params.n_epochs as f64;
        let e = epoch as f64;
        for i in 0..m {
            if next_sample[i] > e {
                continue;
            }
            let (j, k) = (sched.head[i], sched.tail[i]);
            let (cur, other) = (emb[j], emb[k]);
            let d2 = (cur[0] - other[0]).powi(2) + (cur[1] - other[1]).powi(2);
            let g = attract_coeff(d2, a, b);
            for d in 0..2 {
                let grad = clip(g * (cur[d] - other[d]));
                emb[j][d] += grad * alpha;
                emb[k][d] -= grad * alpha;
            }
            next_sample[i] += sched.epochs_per_sample[i];

            let n_neg = ((e - next_neg[i]) / epochs_per_neg[i]).floor().max(0.0) as usize;
            for _ in 0..n_neg {
                let k = rng.random_range(0..n);
                if k == j {
                    continue;
                }
                let (cur, other) = (emb[j], emb[k]);
                let d2 = (cur[0] - other[0]).powi(2) + (cur[1] - other[1]).powi(2);
                let g = repulse_coeff(d2, a, b);
                for d in 0..2 {
                    let grad = if g > 0.0 { clip(g * (cur[d] - other[d])) } else { GRAD_CLIP };
                    emb[j][d] += grad * alpha;
                }
            }
            next_neg[i] += n_neg as f64 * epochs_per_neg[i];
        }
    }
    emb
}

struct AtomicPoint([AtomicU64; 2]);

impl AtomicPoint {
    fn load(&self) -> [f64; 2] {
        [
            f64::from_bits(self.0[0].load(Ordering::Relaxed)),
            f64::from_bits(self.0[1].load(Ordering::Relaxed)),
        ]
    }

    fn add(&self, d: usize, delta: f64) {
        let cur = f64::from_bits(self.0[d].load(Ordering::Relaxed));
        self.0[d].store((cur + delta).to_bits(), Ordering::Relaxed);
    }
}

/// Lock-free parallel SGD over edge chunks. Updates may race, so results vary
/// between runs; use [`optimize`] when reproducibility matters.
pub fn optimize_hogwild(graph: &FuzzyGraph, params: &ProjectionParams) -> Vec<[f64; 2]> {
    let n = graph.n_points;
    if n <= 1 || params.n_epochs == 0 || graph.edges.is_empty() {
        return optimize(graph, params);
    }
    let init = initial_layout(graph, params.seed);
    let emb: Vec<AtomicPoint> = init
        .iter()
        .map(|p| AtomicPoint([AtomicU64::new(p[0].to_bits()), AtomicU64::new(p[1].to_bits())]))
        .collect();
    let (a, b) = curve::fit_ab(params.min_dist, super::SPREAD);
    let sched = schedule(graph, params.n_epochs);
    let m = sched.head.len();
    let epochs_per_neg: Vec<f64> = sched
        .epochs_per_sample
        .iter()
        .map(|e| e / NEGATIVE_SAMPLE_RATE)
        .collect();
    let mut next_sample = sched.epochs_per_sample.clone();
    let mut next_neg = epochs_per_neg.clone();
    let chunk = m.div_ceil(rayon::current_num_threads().max(1) * 4).max(64);

    for epoch in 0..params.n_epochs {
        let alpha = 1.0 - epoch as f64 / params.n_epochs as f64;
        let e = epoch as f64;
        next_sample
            .par_chunks_mut(chunk)
            .zip(next_neg.par_chunks_mut(chunk))
            .enumerate()
            .for_each(|(c, (ns, nn))| {
                let mut rng = ChaCha8Rng::seed_from_u64(crate::seed::stream(
                    params.seed,
                    (epoch * 1_000_003 + c) as u64,
                ));
                for off in 0..ns.len() {
                    let i = c * chunk + off;
                    if ns[off] > e {
                        continue;
                    }
                    let (j, k) = (sched.head[i], sched.tail[i]);
                    let (cur, other) = (emb[j].load(), emb[k].load());
                    let d2 = (cur[0] - other[0]).powi(2) + (cur[1] - other[1]).powi(2);
                    let g = attract_coeff(d2, a, b);
                    for d in 0..2 {
                        let grad = clip(g * (cur[d] - other[d]));
                        emb[j].add(d, grad * alpha);
                        emb[k].add(d, -grad * alpha);
                    }
                    ns[off] += sched.epochs_per_sample[i];
                    let n_neg = ((e - nn[off]) / epochs_per_neg[i]).floor().max(0.0) as usize;
                    for _ in 0..n_neg {
                        let k = rng.random_range(0..n);
                        if k == j {
                            continue;
                        }
                        let (cur, other) = (emb[j].load(), emb[k].load());
                        let d2 = (cur[0] - other[0]).powi(2) + (cur[1] - other[1]).powi(2);
                        let g = repulse_coeff(d2, a, b);
                        for d in 0..2 {
                            let grad = if g > 0.0 { clip(g * (cur[d] - other[d])) } else { GRAD_CLIP };
                            emb[j].add(d, grad * alpha);
                        }
                    }
                    nn[off] += n_neg as f64 * epochs_per_neg[i];
                }
            });
    }
    emb.iter().map(AtomicPoint::load).collect()
}
