//! Fit of the low-dimensional similarity curve `1 / (1 + a * x^(2b))`.

/// Target: 1 below `min_dist`, exponential decay with scale `spread` above it.
pub fn target_curve(x: f64, min_dist: f64, spread: f64) -> f64 {
    if x < min_dist {
        1.0
    } else {
        (-(x - min_dist) / spread).exp()
    }
}

pub fn model(x: f64, a: f64, b: f64) -> f64 {
    1.0 / (1.0 + a * x.powf(2.0 * b))
}

pub const GRID_POINTS: usize = 300;

pub fn grid(spread: f64) -> Vec<f64> {
    let hi = 3.0 * spread;
    (0..GRID_POINTS)
        .map(|i| hi * i as f64 / (GRID_POINTS - 1) as f64)
        .collect()
}

pub fn sse(a: f64, b: f64, min_dist: f64, spread: f64) -> f64 {
    grid(spread)
        .into_iter()
        .map(|x| {
            let r = model(x, a, b) - target_curve(x, min_dist, spread);
            r * r
        })
        .sum()
}

/// Least-squares `(a, b)` over 300 evenly spaced points in `[0, 3*spread]`
/// (Levenberg-Marquardt with analytic Jacobian).
pub fn fit_ab(min_dist: f64, spread: f64) -> (f64, f64) {
    let xs = grid(spread);
    let ys: Vec<f64> = xs.iter().map(|&x| target_curve(x, min_dist, spread)).collect();
    let (mut a, mut b) = (1.0, 1.0);
    let mut lambda = 1e-3;
    let mut cost = sse(a, b, min_dist, spread);
    for _ in 0..500 {
        // normal equations J^T J and J^T r
        let (mut jaa, mut jab, mut jbb, mut ga, mut gb) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (&x, &y) in xs.iter().zip(&ys) {
            if x <= 0.0 {
                continue;
            }
            let p = x.powf(2.0 * b);
            let den = 1.0 + a * p;
            let f = 1.0 / den;
            let r = f - y;
            let da = -p / (den * den);
            let db = -a * p * 2.0 * x.ln() / (den * den);
            jaa += da * da;
            jab += da * db;
            jbb += db * db;
            ga += da * r;
            gb += db * r;
        }
        let mut improved = false;
        for _ in 0..30 {
            let (m11, m22) = (jaa * (1.0 + lambda), jbb * (1.0 + lambda));
            let det = m11 * m22 - jab * jab;
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let step_a = -(m22 * ga - jab * gb) / det;
            let step_b = -(m11 * gb - jab * ga) / det;
            let (na, nb) = (a + step_a, b + step_b);
            if na > 0.0 && nb > 0.0 {
                let c = sse(na, nb, min_dist, spread);
                if c < cost {
                    let done = (cost - c) < 1e-15 * cost.max(1e-300);
                    a = na;
                    b = nb;
                    cost = c;
                    lambda = (lambda * 0.3).max(1e-12);
                    improved = !done;
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (a, b)
}
