//! Hierarchical density-based clustering of 2-D layouts.
//!
//! Mutual-reachability MST, single-linkage hierarchy, condensed tree pruned
//! at `min_cluster_size`, then excess-of-mass selection of flat clusters.
//! The root may be selected as a single cluster when it holds at least
//! `min_cluster_size` points and no split beats its stability.

mod mreach;

use std::collections::{BTreeMap, VecDeque};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mreach::{mutual_reachability, prim_mst, MutualReachability};

pub const NOISE: i64 = -1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClusterParams {
    pub min_cluster_size: usize,
    /// Defaults to `min_cluster_size` when `None`.
    pub min_samples: Option<usize>,
}

impl Default for ClusterParams {
    fn default() -> Self {
        ClusterParams {
            min_cluster_size: 25,
            min_samples: None,
        }
    }
}

impl ClusterParams {
    pub fn validate(&self) -> Result<()> {
        if self.min_cluster_size < 2 {
            return Err(Error::Precondition("min_cluster_size must be >= 2".into()));
        }
        if self.min_samples == Some(0) {
            return Err(Error::Precondition("min_samples must be >= 1".into()));
        }
        Ok(())
    }

    pub fn effective_min_samples(&self) -> usize {
        self.min_samples.unwrap_or(self.min_cluster_size)
    }
}

/// A child of a condensed-tree node: a point falling out, or a new cluster.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "id", rename_all = "lowercase")]
pub enum TreeChild {
    Point(usize),
    Cluster(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CondensedEdge {
    pub parent: usize,
    pub child: TreeChild,
    /// Density level `1 / distance` at which the child separated (infinite for distance 0).
    #[serde(serialize_with = "ser_lambda", deserialize_with = "de_lambda")]
    pub lambda: f64,
    pub size: usize,
}

fn ser_lambda<S: serde::Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
    if x.is_finite() {
        s.serialize_f64(*x)
    } else {
        s.serialize_str("inf")
    }
}

fn de_lambda<'de, D: serde::Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum L {
        N(f64),
        S(serde::de::IgnoredAny),
    }
    match L::deserialize(d)? {
        L::N(x) => Ok(x),
        L::S(_) => Ok(f64::INFINITY),
    }
}

/// Condensed cluster hierarchy; node 0 is the root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensedTree {
    pub n_points: usize,
    pub n_nodes: usize,
    pub edges: Vec<CondensedEdge>,
}

impl CondensedTree {
    pub const ROOT: usize = 0;

    pub fn children(&self, node: usize) -> Vec<usize> {
        self.edges
            .iter()
            .filter_map(|e| match e.child {
                TreeChild::Cluster(c) if e.parent == node => Some(c),
                _ => None,
            })
            .collect()
    }

    pub fn birth_lambda(&self, node: usize) -> f64 {
        if node == Self::ROOT {
            return 0.0;
        }
        self.edges
            .iter()
            .find(|e| e.child == TreeChild::Cluster(node))
            .map_or(0.0, |e| e.lambda)
    }

    /// All points that fell out of `node` or any of its descendants, ascending.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(c) = stack.pop() {
            for e in self.edges.iter().filter(|e| e.parent == c) {
                match e.child {
                    TreeChild::Point(p) => out.push(p),
                    TreeChild::Cluster(k) => stack.push(k),
                }
            }
        }
        out.sort_unstable();
        out
    }

    /// Excess-of-mass stability of every node.
    pub fn stabilities(&self) -> Vec<f64> {
        let births: Vec<f64> = (0..self.n_nodes).map(|c| self.birth_lambda(c)).collect();
        let mut stab = vec![0.0; self.n_nodes];
        for e in &self.edges {
            let birth = births[e.parent];
            let gain = if e.lambda == birth {
                0.0
            } else {
                e.lambda - birth
            };
            stab[e.parent] += gain * e.size as f64;
        }
        stab
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClusterAssignment {
    /// Per point: cluster id in `0..n_clusters`, or [`NOISE`].
    pub labels: Vec<i64>,
    pub condensed_tree: CondensedTree,
    /// Stability of each flat cluster, indexed by cluster id.
    #[serde(serialize_with = "ser_lambdas")]
    pub stabilities: Vec<f64>,
    /// Condensed-tree node backing each flat cluster.
    pub selected_nodes: Vec<usize>,
}

fn ser_lambdas<S: serde::Serializer>(xs: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
    use serde::ser::SerializeSeq;
    let mut seq = s.serialize_seq(Some(xs.len()))?;
    for x in xs {
        if x.is_finite() {
            seq.serialize_element(x)?;
        } else {
            seq.serialize_element("inf")?;
        }
    }
    seq.end()
}

/// One immediate child cluster in the condensed tree.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Subcluster {
    pub node: usize,
    pub birth_lambda: f64,
    pub members: Vec<usize>,
}

impl ClusterAssignment {
    pub fn n_clusters(&self) -> usize {
        self.selected_nodes.len()
    }

    pub fn noise_count(&self) -> usize {
        self.labels.iter().filter(|&&l| l == NOISE).count()
    }

    pub fn cluster_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_clusters()];
        for &l in &self.labels {
            if l >= 0 {
                sizes[l as usize] += 1;
            }
        }
        sizes
    }

    /// Tree node behind flat cluster `cluster_id`.
    pub fn node_of(&self, cluster_id: usize) -> Result<usize> {
        self.selected_nodes
            .get(cluster_id)
            .copied()
            .ok_or_else(|| Error::Lookup(format!("no cluster {cluster_id}")))
    }

    /// Immediate condensed-tree children of `node` with their member points.
    pub fn subclusters(&self, node: usize) -> Result<Vec<Subcluster>> {
        if node >= self.condensed_tree.n_nodes {
            return Err(Error::Lookup(format!("no condensed-tree node {node}")));
        }
        Ok(self
            .condensed_tree
            .children(node)
            .into_iter()
            .map(|c| Subcluster {
                node: c,
                birth_lambda: self.condensed_tree.birth_lambda(c),
                members: self.condensed_tree.members(c),
            })
            .collect())
    }

    /// Flat clusters whose tree node lies in the subtree of `node`.
    pub fn selected_within(&self, node: usize) -> Result<Vec<usize>> {
        if node >= self.condensed_tree.n_nodes {
            return Err(Error::Lookup(format!("no condensed-tree node {node}")));
        }
        let mut inside = vec![false; self.condensed_tree.n_nodes];
        inside[node] = true;
        // edges are emitted parent-before-child, so one forward pass suffices
        for e in &self.condensed_tree.edges {
            if let TreeChild::Cluster(c) = e.child {
                if inside[e.parent] {
                    inside[c] = true;
                }
            }
        }
        Ok((0..self.n_clusters())
            .filter(|&k| inside[self.selected_nodes[k]])
            .collect())
    }
}

pub fn subclusters(assignment: &ClusterAssignment, node: usize) -> Result<Vec<Subcluster>> {
    assignment.subclusters(node)
}

/// Single-linkage merge: `(left, right, distance, size)`; ids `< n` are points.
type Merge = (usize, usize, f64, usize);

fn single_linkage(n: usize, mut mst: Vec<(usize, usize, f64)>) -> Vec<Merge> {
    mst.sort_by(|x, y| {
        x.2.total_cmp(&y.2)
            .then(x.0.min(x.1).cmp(&y.0.min(y.1)))
            .then(x.0.max(x.1).cmp(&y.0.max(y.1)))
    });
    let mut parent: Vec<usize> = (0..2 * n).collect();
    let mut size = vec![1usize; 2 * n];
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for (a, b, w) in mst {
        let ra = find(&mut parent, a);
        let rb = find(&mut parent, b);
        let node = n + merges.len();
        let s = size[ra] + size[rb];
        merges.push((ra, rb, w, s));
        parent[ra] = node;
        parent[rb] = node;
        size[node] = s;
    }
    merges
}

fn lambda_of(distance: f64) -> f64 {
    if distance > 0.0 {
        1.0 / distance
    } else {
        f64::INFINITY
    }
}

fn condense(n: usize, merges: &[Merge], min_cluster_size: usize) -> CondensedTree {
    let node_size = |x: usize| if x < n { 1 } else { merges[x - n].3 };
    let leaves_of = |x: usize| -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![x];
        while let Some(y) = stack.pop() {
            if y < n {
                out.push(y);
            } else {
                let (l, r, _, _) = merges[y - n];
                stack.push(r);
                stack.push(l);
            }
        }
        out
    };
    let mut edges = Vec::new();
    let mut n_nodes = 1;
    if n == 0 {
        return CondensedTree {
            n_points: 0,
            n_nodes,
            edges,
        };
    }
    if n == 1 {
        edges.push(CondensedEdge {
            parent: 0,
            child: TreeChild::Point(0),
            lambda: f64::INFINITY,
            size: 1,
        });
        return CondensedTree {
            n_points: 1,
            n_nodes,
            edges,
        };
    }
    let root = 2 * n - 2;
    let mut queue = VecDeque::from([(root, 0usize)]);
    while let Some((node, cluster)) = queue.pop_front() {
        if node < n {
            // a lone point carried by its cluster down to the bottom of the hierarchy
            edges.push(CondensedEdge {
                parent: cluster,
                child: TreeChild::Point(node),
                lambda: f64::INFINITY,
                size: 1,
            });
            continue;
        }
        let dist = merges[node - n].2;
        let lambda = lambda_of(dist);
        // merges at the same height split simultaneously
        let mut parts = Vec::new();
        let mut stack = vec![merges[node - n].1, merges[node - n].0];
        while let Some(x) = stack.pop() {
            if x >= n && merges[x - n].2 == dist {
                stack.push(merges[x - n].1);
                stack.push(merges[x - n].0);
            } else {
                parts.push(x);
            }
        }
        let mut big: Vec<usize> = Vec::new();
        for x in parts {
            if node_size(x) >= min_cluster_size {
                big.push(x);
            } else {
                for p in leaves_of(x) {
                    edges.push(CondensedEdge {
                        parent: cluster,
                        child: TreeChild::Point(p),
                        lambda,
                        size: 1,
                    });
                }
            }
        }
        if big.len() == 1 {
            queue.push_back((big[0], cluster));
        } else {
            big.sort_by_cached_key(|&x| leaves_of(x).into_iter().min());
            for child in big {
                let id = n_nodes;
                n_nodes += 1;
                edges.push(CondensedEdge {
                    parent: cluster,
                    child: TreeChild::Cluster(id),
                    lambda,
                    size: node_size(child),
                });
                queue.push_back((child, id));
            }
        }
    }
    CondensedTree {
        n_points: n,
        n_nodes,
        edges,
    }
}

/// Excess-of-mass selection; returns selected node ids in ascending order.
fn select_eom(tree: &CondensedTree, min_cluster_size: usize) -> Vec<usize> {
    let stab = tree.stabilities();
    let mut children: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for e in &tree.edges {
        if let TreeChild::Cluster(c) = e.child {
            children.entry(e.parent).or_default().push(c);
        }
    }
    let mut best = stab.clone();
    let mut selected = vec![false; tree.n_nodes];
    let root_ok = tree.n_points >= min_cluster_size;
    // children always carry larger ids than their parent
    for c in (0..tree.n_nodes).rev() {
        let kids = children.get(&c).map(Vec::as_slice).unwrap_or(&[]);
        let subtree: f64 = kids.iter().map(|&k| best[k]).sum();
        if c == CondensedTree::ROOT && !root_ok {
            break;
        }
        if kids.is_empty() || !(subtree > stab[c]) {
            selected[c] = true;
            let mut stack: Vec<usize> = kids.to_vec();
            while let Some(k) = stack.pop() {
                selected[k] = false;
                if let Some(g) = children.get(&k) {
                    stack.extend(g);
                }
            }
        } else {
            best[c] = subtree;
        }
    }
    (0..tree.n_nodes).filter(|&c| selected[c]).collect()
}

/// Clusters 2-D (or any low-dimensional) points.
///
/// `min_samples` is capped at `n - 1` so small inputs stay well defined.
/// Flat clusters are numbered by their lowest member index.
pub fn cluster<P: AsRef<[f64]> + Sync>(points: &[P], params: &ClusterParams) -> Result<ClusterAssignment> {
    params.validate()?;
    let n = points.len();
    if n == 0 {
        return Err(Error::Precondition("cannot cluster an empty point set".into()));
    }
    let tree = if n == 1 {
        condense(1, &[], params.min_cluster_size)
    } else {
        let min_samples = params.effective_min_samples().min(n - 1);
        let mr = mutual_reachability(points, min_samples)?;
        let mst = prim_mst(&mr);
        let merges = single_linkage(n, mst);
        condense(n, &merges, params.min_cluster_size)
    };
    let mut chosen = select_eom(&tree, params.min_cluster_size);
    let stab = tree.stabilities();

    let members: Vec<Vec<usize>> = chosen.iter().map(|&c| tree.members(c)).collect();
    let mut order: Vec<usize> = (0..chosen.len()).collect();
    order.sort_by_key(|&i| members[i].first().copied().unwrap_or(usize::MAX));
    let mut labels = vec![NOISE; n];
    for (label, &i) in order.iter().enumerate() {
        for &p in &members[i] {
            labels[p] = label as i64;
        }
    }
    chosen = order.iter().map(|&i| chosen[i]).collect();
    Ok(ClusterAssignment {
        labels,
        stabilities: chosen.iter().map(|&c| stab[c]).collect(),
        selected_nodes: chosen,
        condensed_tree: tree,
    })
}

// ---------------------------------------------------------------------------
// files

#[derive(Debug, Serialize, Deserialize)]
pub struct ClusterRow {
    pub user_id: String,
    pub cluster: i64,
}

pub fn clusters_csv(user_ids: &[String], labels: &[i64]) -> Result<Vec<u8>> {
    let rows: Vec<ClusterRow> = user_ids
        .iter()
        .zip(labels)
        .map(|(u, &c)| ClusterRow {
            user_id: u.clone(),
            cluster: c,
        })
        .collect();
    crate::io::csv_bytes(&rows)
}

/// Reads `user_id,cluster` preserving file order.
pub fn load_clusters(path: &Path) -> Result<Vec<(String, i64)>> {
    let rows: Vec<ClusterRow> = crate::io::read_csv(path)?;
    Ok(rows.into_iter().map(|r| (r.user_id, r.cluster)).collect())
}
