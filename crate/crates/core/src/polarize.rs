//! Random Walk Controversy over a retweet-similarity user graph.

use std::collections::{BTreeMap, HashMap, VecDeque};
use std::fmt;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};
use crate::seed;

pub const MAX_WALK_STEPS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

impl Group {
    pub fn other(self) -> Group {
        match self {
            Group::A => Group::B,
            Group::B => Group::A,
        }
    }
}

impl fmt::Display for Group {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Group::A => "A",
            Group::B => "B",
        })
    }
}

/// Undirected weighted user graph with a two-way group split.
#[derive(Debug, Clone, PartialEq)]
pub struct UserGraph {
    pub users: Vec<String>,
    pub groups: Vec<Group>,
    /// Sorted by neighbor index; symmetric; no self loops.
    pub adjacency: Vec<Vec<(usize, f64)>>,
    /// Membership users left out (not in corpus, or no retweets).
    pub dropped: Vec<String>,
}

impl UserGraph {
    /// Builds a graph from explicit edges. Weights must be positive; duplicate
    /// pairs keep the last weight.
    pub fn from_edges(nodes: Vec<(String, Group)>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = nodes.len();
        let mut adj: Vec<BTreeMap<usize, f64>> = vec![BTreeMap::new(); n];
        for &(a, b, w) in edges {
            if a >= n || b >= n {
                return Err(Error::Lookup(format!("edge ({a},{b}) outside {n} nodes")));
            }
            if a == b {
                return Err(Error::Precondition(format!("self loop on node {a}")));
            }
            if !(w > 0.0 && w.is_finite()) {
                return Err(Error::Precondition(format!("edge ({a},{b}) has non-positive weight {w}")));
            }
            adj[a].insert(b, w);
            adj[b].insert(a, w);
        }
        let (users, groups) = nodes.into_iter().unzip();
        let g = UserGraph {
            users,
            groups,
            adjacency: adj.into_iter().map(|m| m.into_iter().collect()).collect(),
            dropped: Vec::new(),
        };
        g.check_groups()?;
        Ok(g)
    }

    fn check_groups(&self) -> Result<()> {
        for g in [Group::A, Group::B] {
            if !self.groups.contains(&g) {
                return Err(Error::Data(format!("group {g} has no users in the graph")));
            }
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    pub fn degree(&self, node: usize) -> usize {
        self.adjacency[node].len()
    }

    pub fn edge_count(&self) -> usize {
        self.adjacency.iter().map(Vec::len).sum::<usize>() / 2
    }

    pub fn members(&self, group: Group) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&i| self.groups[i] == group)
    }

    /// Copy with every edge weight multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> UserGraph {
        let mut g = self.clone();
        for row in &mut g.adjacency {
            for e in row {
                e.1 *= factor;
            }
        }
        g
    }

    /// Copy with groups A and B exchanged.
    pub fn swapped(&self) -> UserGraph {
        let mut g = self.clone();
        for x in &mut g.groups {
            *x = x.other();
        }
        g
    }
}

/// Cosine similarity between users' retweeted-account count vectors;
/// an edge joins every pair with nonzero similarity.
pub fn build_user_graph(corpus: &Corpus, membership: &BTreeMap<String, Group>) -> Result<UserGraph> {
    let mut counts: BTreeMap<&str, BTreeMap<&str, f64>> = BTreeMap::new();
    for t in corpus.tweets() {
        if let Some(acc) = &t.retweeted_user_id {
            if membership.contains_key(&t.user_id) {
                *counts
                    .entry(t.user_id.as_str())
                    .or_default()
                    .entry(acc.as_str())
                    .or_default() += 1.0;
            }
        }
    }
    let mut users = Vec::new();
    let mut groups = Vec::new();
    let mut dropped = Vec::new();
    for (u, &g) in membership {
        if !corpus.contains_user(u) {
            log::warn!("user {u} is not in the corpus; dropped from the graph");
            dropped.push(u.clone());
        } else if !counts.contains_key(u.as_str()) {
            dropped.push(u.clone());
        } else {
            users.push(u.clone());
            groups.push(g);
        }
    }
    if !dropped.is_empty() {
        log::info!("{} users without retweets or corpus records dropped", dropped.len());
    }
    let vectors: Vec<&BTreeMap<&str, f64>> = users.iter().map(|u| &counts[u.as_str()]).collect();
    let norms: Vec<f64> = vectors
        .iter()
        .map(|v| v.values().map(|x| x * x).sum::<f64>().sqrt())
        .collect();
    let mut postings: HashMap<&str, Vec<(usize, f64)>> = HashMap::new();
    for (i, v) in vectors.iter().enumerate() {
        for (&acc, &c) in v.iter() {
            postings.entry(acc).or_default().push((i, c));
        }
    }
    let adjacency: Vec<Vec<(usize, f64)>> = (0..users.len())
        .into_par_iter()
        .map(|i| {
            let mut dots: BTreeMap<usize, f64> = BTreeMap::new();
            for (acc, &c) in vectors[i].iter() {
                for &(j, d) in &postings[acc] {
                    if j != i {
                        *dots.entry(j).or_default() += c * d;
                    }
                }
            }
            dots.into_iter()
                .map(|(j, dot)| (j, (dot / (norms[i] * norms[j])).min(1.0)))
                .collect()
        })
        .collect();
    let g = UserGraph {
        users,
        groups,
        adjacency,
        dropped,
    };
    g.check_groups()?;
    Ok(g)
}

/// The `n` highest-degree nodes of `group`, ties by user id. `n` above the
/// group size is clamped with a warning.
pub fn prominent_nodes(graph: &UserGraph, group: Group, n: usize) -> Result<Vec<usize>> {
    if n == 0 {
        return Err(Error::Precondition("n_prominent must be >= 1".into()));
    }
    let mut nodes: Vec<usize> = graph.members(group).collect();
    if nodes.is_empty() {
        return Err(Error::Data(format!("group {group} is empty")));
    }
    if n > nodes.len() {
        log::warn!("n_prominent {n} exceeds group {group} size {}; clamped", nodes.len());
    }
    nodes.sort_by(|&a, &b| {
        graph
            .degree(b)
            .cmp(&graph.degree(a))
            .then_with(|| graph.users[a].cmp(&graph.users[b]))
    });
    nodes.truncate(n);
    Ok(nodes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RwcMode {
    Exact,
    MonteCarlo,
}

impl std::str::FromStr for RwcMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(RwcMode::Exact),
            "monte_carlo" | "monte-carlo" => Ok(RwcMode::MonteCarlo),
            _ => Err(Error::Config(format!("unknown rwc mode `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RwcParams {
    pub n_prominent: usize,
    pub mode: RwcMode,
    /// Walks per start group (Monte Carlo only).
    pub n_walks: usize,
    pub seed: u64,
}

impl Default for RwcParams {
    fn default() -> Self {
        RwcParams {
            n_prominent: 10,
            mode: RwcMode::Exact,
            n_walks: 10_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RwcResult {
    pub p_aa: f64,
    pub p_ab: f64,
    pub p_ba: f64,
    pub p_bb: f64,
    pub rwc: f64,
    pub n_prominent: usize,
    /// Share of start mass that never reached a prominent node.
    pub unabsorbed_fraction: f64,
}

/// Absorption outcome totals for walks started in one group.
#[derive(Debug, Clone, Copy, Default)]
struct Tally {
    to_a: f64,
    to_b: f64,
    lost: f64,
}

impl Tally {
    fn conditional(&self) -> (f64, f64) {
        let absorbed = self.to_a + self.to_b;
        if absorbed == 0.0 {
            (0.0, 0.0)
        } else {
            (self.to_a / absorbed, self.to_b / absorbed)
        }
    }
}

pub fn rwc(graph: &UserGraph, params: &RwcParams) -> Result<RwcResult> {
    let n_prom = params.n_prominent;
    for g in [Group::A, Group::B] {
        let size = graph.members(g).count();
        if size <= n_prom {
            return Err(Error::Precondition(format!(
                "group {g} has {size} users; needs more than n_prominent={n_prom} to have walk starts"
            )));
        }
    }
    let prom_a = prominent_nodes(graph, Group::A, n_prom)?;
    let prom_b = prominent_nodes(graph, Group::B, n_prom)?;
    let mut absorb: Vec<Option<Group>> = vec![None; graph.len()];
    for &p in &prom_a {
        absorb[p] = Some(Group::A);
    }
    for &p in &prom_b {
        absorb[p] = Some(Group::B);
    }
    let starts = |g: Group| -> Vec<usize> { graph.members(g).filter(|&i| absorb[i].is_none()).collect() };
    let (starts_a, starts_b) = (starts(Group::A), starts(Group::B));
    let (ta, tb) = match params.mode {
        RwcMode::Exact => {
            let probs = absorption_probabilities(graph, &absorb)?;
            (tally_exact(&probs, &starts_a), tally_exact(&probs, &starts_b))
        }
        RwcMode::MonteCarlo => {
            if params.n_walks == 0 {
                return Err(Error::Precondition("n_walks must be >= 1".into()));
            }
            (
                simulate(graph, &absorb, &starts_a, params.n_walks, seed::derive(params.seed, "rwc-walks-A")),
                simulate(graph, &absorb, &starts_b, params.n_walks, seed::derive(params.seed, "rwc-walks-B")),
            )
        }
    };
    let (p_aa, p_ab) = ta.conditional();
    let (p_ba, p_bb) = tb.conditional();
    let total = ta.to_a + ta.to_b + ta.lost + tb.to_a + tb.to_b + tb.lost;
    Ok(RwcResult {
        p_aa,
        p_ab,
        p_ba,
        p_bb,
        rwc: p_aa * p_bb - p_ab * p_ba,
        n_prominent: n_prom,
        unabsorbed_fraction: (ta.lost + tb.lost) / total,
    })
}

fn tally_exact(probs: &[Option<(f64, f64)>], starts: &[usize]) -> Tally {
    let mut t = Tally::default();
    for &s in starts {
        match probs[s] {
            Some((a, b)) => {
                t.to_a += a;
                t.to_b += b;
            }
            None => t.lost += 1.0,
        }
    }
    t
}

/// Probability of absorption in A's and B's prominent sets from every node;
/// `None` for nodes that cannot reach any absorbing node.
pub fn absorption_probabilities(graph: &UserGraph, absorb: &[Option<Group>]) -> Result<Vec<Option<(f64, f64)>>> {
    let n = graph.len();
    // nodes connected to an absorbing node; in an undirected graph this is
    // the union of components touching the absorbing set
    let mut reach = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| absorb[i].is_some()).collect();
    for &i in &queue {
        reach[i] = true;
    }
    while let Some(i) = queue.pop_front() {
        for &(j, _) in &graph.adjacency[i] {
            if !reach[j] {
                reach[j] = true;
                queue.push_back(j);
            }
        }
    }
    let transient: Vec<usize> = (0..n).filter(|&i| reach[i] && absorb[i].is_none()).collect();
    let mut pos = vec![usize::MAX; n];
    for (k, &i) in transient.iter().enumerate() {
        pos[i] = k;
    }
    let m = transient.len();
    let mut system = DMatrix::<f64>::identity(m, m);
    let mut rhs = DMatrix::<f64>::zeros(m, 2);
    for (k, &i) in transient.iter().enumerate() {
        let row = &graph.adjacency[i];
        let total: f64 = row.iter().map(|e| e.1).sum();
        for &(j, w) in row {
            let p = w / total;
            match absorb[j] {
                Some(Group::A) => rhs[(k, 0)] += p,
                Some(Group::B) => rhs[(k, 1)] += p,
                None => system[(k, pos[j])] -= p,
            }
        }
    }
    let solution = if m == 0 {
        rhs
    } else {
        system
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Data("absorbing-chain system is singular".into()))?
    };
    let mut out = vec![None; n];
    for i in 0..n {
        out[i] = match absorb[i] {
            Some(Group::A) => Some((1.0, 0.0)),
            Some(Group::B) => Some((0.0, 1.0)),
            None if reach[i] => {
                let k = pos[i];
                Some((solution[(k, 0)], solution[(k, 1)]))
            }
            None => None,
        };
    }
    Ok(out)
}

/// Cumulative transition weights per node for inverse-CDF sampling.
fn cumulative(graph: &UserGraph) -> Vec<Vec<f64>> {
    graph
        .adjacency
        .iter()
        .map(|row| {
            let mut acc = 0.0;
            row.iter()
                .map(|e| {
                    acc += e.1;
                    acc
                })
                .collect()
        })
        .collect()
}

fn simulate(graph: &UserGraph, absorb: &[Option<Group>], starts: &[usize], n_walks: usize, base: u64) -> Tally {
    let cdf = cumulative(graph);
    let outcomes: Vec<Option<Group>> = (0..n_walks)
        .into_par_iter()
        .map(|w| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed::stream(base, w as u64));
            let mut node = starts[rng.random_range(0..starts.len())];
            for _ in 0..MAX_WALK_STEPS {
                let row = &cdf[node];
                let Some(&total) = row.last() else {
                    return None;
                };
                let r = rng.random::<f64>() * total;
                let k = row.partition_point(|&c| c <= r).min(row.len() - 1);
                node = graph.adjacency[node][k].0;
                if let Some(g) = absorb[node] {
                    return Some(g);
                }
            }
            None
        })
        .collect();
    let mut t = Tally::default();
    for o in outcomes {
        match o {
            Some(Group::A) => t.to_a += 1.0,
            Some(Group::B) => t.to_b += 1.0,
            None => t.lost += 1.0,
        }
    }
    t
}

// ---------------------------------------------------------------------------
// files

/// Reads a two-group membership CSV: `user_id` plus a `group`, `cluster` or
/// `label` column. Rows labeled `-1` (noise) are skipped. The two remaining values
/// map to A and B in sorted order (numeric when both parse as integers).
pub fn load_groups(path: &Path) -> Result<(BTreeMap<String, Group>, [String; 2])> {
    let text = crate::io::read_to_string(path)?;
    parse_groups(&text).map_err(|e| match e {
        Error::Format(m) => Error::Format(format!("{}: {m}", path.display())),
        other => other,
    })
}

pub fn parse_groups(text: &str) -> Result<(BTreeMap<String, Group>, [String; 2])> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = rdr.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    let col = |names: &[&str]| headers.iter().position(|h| names.contains(&h));
    let (Some(ui), Some(gi)) = (col(&["user_id"]), col(&["group", "cluster", "label"])) else {
        return Err(Error::Format("expected columns user_id and group (or cluster, label)".into()));
    };
    let mut rows = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Format(e.to_string()))?;
        let (u, g) = (rec.get(ui).unwrap_or(""), rec.get(gi).unwrap_or(""));
        if g == "-1" {
            continue;
        }
        rows.push((u.to_string(), g.to_string()));
    }
    let mut values: Vec<String> = rows.iter().map(|r| r.1.clone()).collect();
    values.sort_by(|a, b| match (a.parse::<i64>(), b.parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    });
    values.dedup();
    if values.len() != 2 {
        return Err(Error::Data(format!("expected exactly 2 groups, found {}", values.len())));
    }
    let membership = rows
        .into_iter()
        .map(|(u, g)| (u, if g == values[0] { Group::A } else { Group::B }))
        .collect();
    Ok((membership, [values[0].clone(), values[1].clone()]))
}
