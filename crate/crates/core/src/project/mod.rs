//! Neighbor-embedding projection of user vectors onto the plane.
//!
//! Pipeline: exact kNN graph, per-point membership calibration and fuzzy
//! union, then spectral initialization refined by attract/repulse SGD with
//! negative sampling.

mod curve;
mod fuzzy;
mod knn;
mod layout;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use curve::fit_ab;
pub use fuzzy::{fuzzy_union, fuzzy_weights, solve_sigma, FuzzyGraph};
pub use knn::{distance, knn_graph, KnnGraph};
pub use layout::{initial_layout, spectral_init};

/// Fixed spread of the low-dimensional similarity curve.
pub const SPREAD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Euclidean,
    Cosine,
}

impl std::str::FromStr for Metric {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "euclidean" => Ok(Metric::Euclidean),
            "cosine" => Ok(Metric::Cosine),
            _ => Err(Error::Config(format!("unknown metric `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ProjectionParams {
    pub n_neighbors: usize,
    pub min_dist: f64,
    pub n_epochs: usize,
    pub seed: u64,
    pub metric: Metric,
    /// Parallel lock-free optimization; gives up bitwise reproducibility.
    pub hogwild: bool,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        ProjectionParams {
            n_neighbors: 15,
            min_dist: 0.1,
            n_epochs: 500,
            seed: 0,
            metric: Metric::Euclidean,
            hogwild: false,
        }
    }
}

impl ProjectionParams {
    pub fn validate(&self, n_points: usize) -> Result<()> {
        if self.n_neighbors < 2 {
            return Err(Error::Precondition("n_neighbors must be >= 2".into()));
        }
        if n_points > 1 && self.n_neighbors >= n_points {
            return Err(Error::Precondition(format!(
                "n_neighbors ({}) must be smaller than the number of points ({n_points})",
                self.n_neighbors
            )));
        }
        if !(self.min_dist >= 0.0 && self.min_dist < SPREAD) {
            return Err(Error::Precondition(format!(
                "min_dist must lie in [0, {SPREAD})"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Layout2D {
    pub points: Vec<[f64; 2]>,
    pub params: ProjectionParams,
}

pub fn optimize_layout(graph: &FuzzyGraph, params: &ProjectionParams) -> Layout2D {
    let points = if params.hogwild {
        layout::optimize_hogwild(graph, params)
    } else {
        layout::optimize(graph, params)
    };
    Layout2D {
        points,
        params: *params,
    }
}

/// kNN graph, fuzzy weights and layout optimization in one call.
pub fn project<V: AsRef<[f64]> + Sync>(vectors: &[V], params: &ProjectionParams) -> Result<Layout2D> {
    params.validate(vectors.len())?;
    if vectors.len() <= 1 {
        return Ok(Layout2D {
            points: vec![[0.0, 0.0]; vectors.len()],
            params: *params,
        });
    }
    let knn = knn_graph(vectors, params.n_neighbors, params.metric)?;
    let graph = fuzzy_weights(&knn);
    Ok(optimize_layout(&graph, params))
}

#[derive(Debug, Serialize, Deserialize)]
struct LayoutRow {
    user_id: String,
    x: f64,
    y: f64,
}

/// `user_id,x,y` rows in input order.
pub fn layout_csv(user_ids: &[String], points: &[[f64; 2]]) -> Result<Vec<u8>> {
    let rows: Vec<LayoutRow> = user_ids
        .iter()
        .zip(points)
        .map(|(u, p)| LayoutRow {
            user_id: u.clone(),
            x: p[0],
            y: p[1],
        })
        .collect();
    crate::io::csv_bytes(&rows)
}

pub fn load_layout(path: &std::path::Path) -> Result<(Vec<String>, Vec<[f64; 2]>)> {
    let rows: Vec<LayoutRow> = crate::io::read_csv(path)?;
    if let Some(r) = rows.iter().find(|r| !(r.x.is_finite() && r.y.is_finite())) {
        return Err(Error::Format(format!("{}: non-finite coordinate for {}", path.display(), r.user_id)));
    }
    Ok(rows.into_iter().map(|r| (r.user_id, [r.x, r.y])).unzip())
}
