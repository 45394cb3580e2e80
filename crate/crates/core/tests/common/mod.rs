//! Independent reference implementations and fixture generators shared by the
//! integration tests. Nothing here calls into the code path it checks.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use stancelab::corpus::{Corpus, Tweet};
use stancelab::labelprop::{PropagationParams, Stance, StanceLabel};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn tweet(id: &str, user: &str, text: &str) -> Tweet {
    Tweet {
        tweet_id: id.into(),
        user_id: user.into(),
        text: text.into(),
        retweeted_tweet_id: None,
        retweeted_user_id: None,
        timestamp: 0,
        lang: "tr".into(),
    }
}

pub fn retweet(id: &str, user: &str, src_id: &str, src_user: &str) -> Tweet {
    Tweet {
        retweeted_tweet_id: Some(src_id.into()),
        retweeted_user_id: Some(src_user.into()),
        text: format!("RT @{src_user}: {src_id}"),
        ..tweet(id, user, "")
    }
}

// ---------------------------------------------------------------------------
// point clouds

/// `n_per` points per blob around two centers `sep` apart along the first axis, unit variance.
pub fn two_blobs(n_per: usize, dim: usize, sep: f64, seed: u64) -> (Vec<Vec<f64>>, Vec<usize>) {
    let mut r = rng(seed);
    let g = Normal::new(0.0, 1.0).unwrap();
    let mut pts = Vec::with_capacity(2 * n_per);
    let mut ids = Vec::with_capacity(2 * n_per);
    for blob in 0..2 {
        for _ in 0..n_per {
            let mut p: Vec<f64> = (0..dim).map(|_| g.sample(&mut r)).collect();
            p[0] += sep * blob as f64;
            pts.push(p);
            ids.push(blob);
        }
    }
    (pts, ids)
}

fn sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Trustworthiness of a 2-d embedding against original-space neighbour ranks.
pub fn trustworthiness(high: &[Vec<f64>], low: &[[f64; 2]], k: usize) -> f64 {
    let n = high.len();
    let mut penalty = 0.0;
    for i in 0..n {
        let mut by_high: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        by_high.sort_by(|&a, &b| sq(&high[i], &high[a]).total_cmp(&sq(&high[i], &high[b])).then(a.cmp(&b)));
        let mut rank = vec![0usize; n];
        for (r, &j) in by_high.iter().enumerate() {
            rank[j] = r + 1;
        }
        let mut by_low: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        by_low.sort_by(|&a, &b| sq(&low[i], &low[a]).total_cmp(&sq(&low[i], &low[b])).then(a.cmp(&b)));
        for &j in &by_low[..k] {
            penalty += rank[j].saturating_sub(k) as f64;
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty
}

/// Smallest distance between group centroids over the largest RMS radius of a group.
pub fn separation_ratio(points: &[[f64; 2]], groups: &[usize]) -> f64 {
    let k = groups.iter().max().map_or(0, |m| m + 1);
    let mut centroid = vec![[0.0; 2]; k];
    let mut count = vec![0usize; k];
    for (p, &g) in points.iter().zip(groups) {
        centroid[g][0] += p[0];
        centroid[g][1] += p[1];
        count[g] += 1;
    }
    for (c, &m) in centroid.iter_mut().zip(&count) {
        c[0] /= m as f64;
        c[1] /= m as f64;
    }
    let mut spread = vec![0.0; k];
    for (p, &g) in points.iter().zip(groups) {
        spread[g] += sq(p, &centroid[g]);
    }
    let radius = (0..k).map(|g| (spread[g] / count[g] as f64).sqrt()).fold(0.0, f64::max);
    let mut gap = f64::INFINITY;
    for a in 0..k {
        for b in a + 1..k {
            gap = gap.min(sq(&centroid[a], &centroid[b]).sqrt());
        }
    }
    gap / radius
}

// ---------------------------------------------------------------------------
// adjusted mutual information

fn binomial(n: u64, k: u64) -> u128 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut c: u128 = 1;
    for i in 0..k {
        c = c * (n - i) as u128 / (i + 1) as u128;
    }
    c
}

/// AMI from first principles: contingency counts, plug-in entropies and an
/// expected MI summed over exact hypergeometric probabilities.
pub fn ami_oracle(u: &[usize], v: &[usize]) -> f64 {
    let n = u.len();
    let mut table: BTreeMap<(usize, usize), u64> = BTreeMap::new();
    let mut rows: BTreeMap<usize, u64> = BTreeMap::new();
    let mut cols: BTreeMap<usize, u64> = BTreeMap::new();
    for (&a, &b) in u.iter().zip(v) {
        *table.entry((a, b)).or_default() += 1;
        *rows.entry(a).or_default() += 1;
        *cols.entry(b).or_default() += 1;
    }
    if rows.len() == cols.len() && (rows.len() == 1 || rows.len() == n) {
        return 1.0;
    }
    let nf = n as f64;
    let h = |m: &BTreeMap<usize, u64>| -> f64 {
        m.values().map(|&c| c as f64 / nf).map(|p| -p * p.ln()).sum()
    };
    let mi: f64 = table
        .iter()
        .map(|(&(a, b), &c)| {
            let c = c as f64;
            c / nf * (nf * c / (rows[&a] as f64 * cols[&b] as f64)).ln()
        })
        .sum();
    let emi = expected_mi_oracle(&rows.values().copied().collect::<Vec<_>>(), &cols.values().copied().collect::<Vec<_>>());
    (mi - emi) / (0.5 * (h(&rows) + h(&cols)) - emi)
}

/// Expected MI for fixed marginals, summed over exact hypergeometric cell probabilities.
pub fn expected_mi_oracle(rows: &[u64], cols: &[u64]) -> f64 {
    let total: u64 = rows.iter().sum();
    let nf = total as f64;
    let mut emi = 0.0;
    for &a in rows {
        for &b in cols {
            let denom = binomial(total, b) as f64;
            for c in 1..=a.min(b) {
                let ways = binomial(a, c) * binomial(total - a, b - c);
                if ways == 0 {
                    continue;
                }
                let p = ways as f64 / denom;
                let cf = c as f64;
                emi += p * cf / nf * (nf * cf / (a as f64 * b as f64)).ln();
            }
        }
    }
    emi
}

/// Mutual information of a labeled pair, natural log.
pub fn mutual_info(u: &[usize], v: &[usize]) -> f64 {
    let n = u.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pu: HashMap<usize, f64> = HashMap::new();
    let mut pv: HashMap<usize, f64> = HashMap::new();
    for (&a, &b) in u.iter().zip(v) {
        *joint.entry((a, b)).or_default() += 1.0 / n;
        *pu.entry(a).or_default() += 1.0 / n;
        *pv.entry(b).or_default() += 1.0 / n;
    }
    joint.iter().map(|(&(a, b), &p)| p * (p / (pu[&a] * pv[&b])).ln()).sum()
}

/// Expected MI by averaging over every permutation of `v`. Factorial cost.
pub fn expected_mi_by_permutation(u: &[usize], v: &[usize]) -> f64 {
    fn walk(u: &[usize], v: &mut Vec<usize>, k: usize, acc: &mut (f64, u64)) {
        if k == v.len() {
            acc.0 += mutual_info(u, v);
            acc.1 += 1;
            return;
        }
        for i in k..v.len() {
            v.swap(k, i);
            walk(u, v, k + 1, acc);
            v.swap(k, i);
        }
    }
    let mut acc = (0.0, 0);
    walk(u, &mut v.to_vec(), 0, &mut acc);
    acc.0 / acc.1 as f64
}

/// Every partition of `n` labeled elements into at most `max_blocks` blocks,
/// as restricted growth strings.
pub fn set_partitions(n: usize, max_blocks: usize) -> Vec<Vec<usize>> {
    fn grow(cur: &mut Vec<usize>, n: usize, max_blocks: usize, out: &mut Vec<Vec<usize>>) {
        if cur.len() == n {
            out.push(cur.clone());
            return;
        }
        let used = cur.iter().max().map_or(0, |m| m + 1);
        for b in 0..=used.min(max_blocks - 1) {
            cur.push(b);
            grow(cur, n, max_blocks, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    grow(&mut Vec::new(), n, max_blocks, &mut out);
    out
}

/// Every `r x c` nonnegative integer table (r, c <= 3) summing to `n` with no
/// empty row or column, expanded into a pair of label vectors.
pub fn contingency_pairs(n: usize) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut out = Vec::new();
    for r in 1..=3 {
        for c in 1..=3 {
            let cells = r * c;
            let mut table = vec![0usize; cells];
            compositions(n, 0, &mut table, &mut |t| {
                let row_ok = (0..r).all(|i| (0..c).any(|j| t[i * c + j] > 0));
                let col_ok = (0..c).all(|j| (0..r).any(|i| t[i * c + j] > 0));
                if row_ok && col_ok {
                    let (mut u, mut v) = (Vec::new(), Vec::new());
                    for i in 0..r {
                        for j in 0..c {
                            for _ in 0..t[i * c + j] {
                                u.push(i);
                                v.push(j);
                            }
                        }
                    }
                    out.push((u, v));
                }
            });
        }
    }
    out
}

fn compositions(left: usize, at: usize, table: &mut Vec<usize>, f: &mut dyn FnMut(&[usize])) {
    if at + 1 == table.len() {
        table[at] = left;
        f(table);
        return;
    }
    for x in 0..=left {
        table[at] = x;
        compositions(left - x, at + 1, table, f);
    }
}

// ---------------------------------------------------------------------------
// label propagation

pub struct RetweetCase {
    pub corpus: Corpus,
    pub seeds: BTreeMap<String, StanceLabel>,
    pub params: PropagationParams,
}

/// Random retweet corpus with two latent sides, up to 200 posting users and a
/// few accounts that only appear as retweet sources.
pub fn random_retweet_case(seed: u64) -> RetweetCase {
    let mut r = rng(seed);
    let n_users = r.random_range(10..=200usize);
    let side: Vec<bool> = (0..n_users).map(|_| r.random_bool(0.5)).collect();
    let mut tweets = Vec::new();
    let mut originals: [Vec<(String, String)>; 2] = [Vec::new(), Vec::new()];
    for u in 0..n_users {
        for i in 0..r.random_range(1..=3) {
            let id = format!("t{u}_{i}");
            tweets.push(tweet(&id, &format!("u{u}"), "text"));
            originals[side[u] as usize].push((id, format!("u{u}")));
        }
    }
    for e in 0..r.random_range(0..=6) {
        let s = r.random_bool(0.5) as usize;
        originals[s].push((format!("x{e}"), format!("ext{e}")));
    }
    let mut k = 0;
    for u in 0..n_users {
        let own = side[u] as usize;
        for _ in 0..r.random_range(0..=25) {
            let pool = if r.random_bool(0.9) || originals[1 - own].is_empty() { own } else { 1 - own };
            if originals[pool].is_empty() {
                continue;
            }
            let (src, author) = &originals[pool][r.random_range(0..originals[pool].len())];
            tweets.push(retweet(&format!("r{k}"), &format!("u{u}"), src, author));
            k += 1;
        }
    }
    let mut seeds = BTreeMap::new();
    for u in 0..n_users {
        if r.random_bool(0.15) {
            let mut s = if side[u] { Stance::Anti } else { Stance::Pro };
            if r.random_bool(0.05) {
                s = s.opposite();
            }
            seeds.insert(format!("u{u}"), StanceLabel::seed(s));
        }
    }
    if r.random_bool(0.5) {
        seeds.insert("ext0".into(), StanceLabel::seed(Stance::Pro));
    }
    let params = PropagationParams {
        min_retweets: r.random_range(1..=5),
        max_iterations: r.random_range(1..=20),
    };
    RetweetCase {
        corpus: Corpus::new(tweets).unwrap(),
        seeds,
        params,
    }
}

/// Propagation result as (stance, round) per user plus (new_pro, new_anti) per round.
pub type OracleRun = (BTreeMap<String, (Stance, u32)>, Vec<(usize, usize)>);

/// Label propagation written directly over the tweet list: every round
/// rescans the corpus to decide which tweets are endorsed.
pub fn labelprop_oracle(corpus: &Corpus, seeds: &BTreeMap<String, StanceLabel>, params: &PropagationParams) -> OracleRun {
    let key = |t: &Tweet| t.retweeted_tweet_id.clone().unwrap_or_else(|| t.tweet_id.clone());
    let authors: BTreeSet<String> = corpus.tweets().iter().map(|t| t.user_id.clone()).collect();
    let mut labels: BTreeMap<String, (Stance, u32)> = seeds.iter().map(|(u, l)| (u.clone(), (l.value, 0))).collect();
    let mut trace = Vec::new();
    for round in 1..=params.max_iterations {
        let snapshot = labels.clone();
        let mut endorsed: HashMap<String, Stance> = HashMap::new();
        let mut endorsement = |k: &str| -> Stance {
            if let Some(&s) = endorsed.get(k) {
                return s;
            }
            let mut seen = BTreeSet::new();
            for t in corpus.tweets().iter().filter(|t| key(t) == k) {
                for who in std::iter::once(&t.user_id).chain(t.retweeted_user_id.iter()) {
                    if let Some((s, _)) = snapshot.get(who) {
                        seen.insert(*s);
                    }
                }
            }
            let s = if seen.len() == 1 { *seen.iter().next().unwrap() } else { Stance::Unlabeled };
            endorsed.insert(k.to_string(), s);
            s
        };
        let mut added = (0, 0);
        for u in authors.iter().filter(|u| !snapshot.contains_key(*u)) {
            let keys: BTreeSet<String> = corpus
                .tweets()
                .iter()
                .filter(|t| &t.user_id == u && t.retweeted_tweet_id.is_some())
                .map(key)
                .collect();
            let (mut pro, mut anti) = (0, 0);
            for k in &keys {
                match endorsement(k) {
                    Stance::Pro => pro += 1,
                    Stance::Anti => anti += 1,
                    Stance::Unlabeled => {}
                }
            }
            if pro >= params.min_retweets && anti == 0 {
                labels.insert(u.clone(), (Stance::Pro, round));
                added.0 += 1;
            } else if anti >= params.min_retweets && pro == 0 {
                labels.insert(u.clone(), (Stance::Anti, round));
                added.1 += 1;
            }
        }
        trace.push(added);
        if added == (0, 0) || authors.iter().all(|u| labels.contains_key(u)) {
            break;
        }
    }
    (labels, trace)
}

pub fn swap_seeds(seeds: &BTreeMap<String, StanceLabel>) -> BTreeMap<String, StanceLabel> {
    seeds
        .iter()
        .map(|(u, l)| (u.clone(), StanceLabel { value: l.value.opposite(), ..*l }))
        .collect()
}

// ---------------------------------------------------------------------------
// small graph helpers

/// Cosine of two sparse count vectors.
pub fn cosine(a: &BTreeMap<String, f64>, b: &BTreeMap<String, f64>) -> f64 {
    let dot: f64 = a.iter().filter_map(|(k, x)| b.get(k).map(|y| x * y)).sum();
    let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}
