//! Cluster-to-gold alignment and evaluation metrics.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::hash::Hash;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::cluster::NOISE;
use crate::error::{Error, Result};

pub const UNKNOWN: &str = "unknown";

/// user id → class name.
pub type GoldLabels = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClusterLabel {
    pub class: String,
    /// Set when two or more classes shared the top count.
    pub tie: bool,
    pub gold_members: usize,
}

/// Modal gold class per cluster. `members` pairs user ids with cluster labels;
/// noise entries are ignored.
pub fn majority_label(members: &[(String, i64)], gold: &GoldLabels) -> BTreeMap<i64, ClusterLabel> {
    let mut counts: BTreeMap<i64, BTreeMap<&str, usize>> = BTreeMap::new();
    for (user, c) in members {
        if *c == NOISE {
            continue;
        }
        let slot = counts.entry(*c).or_default();
        if let Some(class) = gold.get(user) {
            *slot.entry(class.as_str()).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .map(|(c, per_class)| {
            let total = per_class.values().sum();
            let top = per_class.values().copied().max().unwrap_or(0);
            // BTreeMap iteration is lexicographic, so the first hit wins ties
            let mut winners = per_class.iter().filter(|(_, &n)| n == top && n > 0);
            let label = match winners.next() {
                Some((class, _)) => ClusterLabel {
                    class: class.to_string(),
                    tie: winners.next().is_some(),
                    gold_members: total,
                },
                None => ClusterLabel {
                    class: UNKNOWN.into(),
                    tie: false,
                    gold_members: 0,
                },
            };
            (c, label)
        })
        .collect()
}

/// Per-user predicted class from cluster membership and cluster labels.
/// Noise users and users in unknown clusters are absent from the result.
pub fn predictions(members: &[(String, i64)], labels: &BTreeMap<i64, ClusterLabel>) -> BTreeMap<String, String> {
    members
        .iter()
        .filter_map(|(u, c)| {
            let l = labels.get(c)?;
            (l.class != UNKNOWN).then(|| (u.clone(), l.class.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
    pub predicted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_class: BTreeMap<String, ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    /// Gold users with no prediction.
    pub unpredicted: usize,
}

fn f1(p: f64, r: f64) -> f64 {
    if p + r == 0.0 {
        0.0
    } else {
        2.0 * p * r / (p + r)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 per gold class, macro-averaged over gold classes.
///
/// Only users present in `gold` are scored. Missing predictions count against
/// recall only. Errors when no predicted user appears in the gold set.
pub fn prf(predicted: &BTreeMap<String, String>, gold: &GoldLabels) -> Result<MetricReport> {
    if gold.is_empty() {
        return Err(Error::Data("gold labels are empty".into()));
    }
    if !predicted.is_empty() && !predicted.keys().any(|u| gold.contains_key(u)) {
        return Err(Error::Data("predicted and gold user sets are disjoint".into()));
    }
    let classes: BTreeSet<&str> = gold.values().map(String::as_str).collect();
    let mut tp: HashMap<&str, usize> = HashMap::new();
    let mut pred_n: HashMap<&str, usize> = HashMap::new();
    let mut support: HashMap<&str, usize> = HashMap::new();
    let mut unpredicted = 0;
    for (user, g) in gold {
        *support.entry(g.as_str()).or_default() += 1;
        match predicted.get(user) {
            Some(p) => {
                *pred_n.entry(p.as_str()).or_default() += 1;
                if p == g {
                    *tp.entry(g.as_str()).or_default() += 1;
                }
            }
            None => unpredicted += 1,
        }
    }
    let per_class: BTreeMap<String, ClassMetrics> = classes
        .iter()
        .map(|&c| {
            let t = tp.get(c).copied().unwrap_or(0);
            let pn = pred_n.get(c).copied().unwrap_or(0);
            let s = support.get(c).copied().unwrap_or(0);
            let (p, r) = (ratio(t, pn), ratio(t, s));
            (
                c.to_string(),
                ClassMetrics {
                    precision: p,
                    recall: r,
                    f1: f1(p, r),
                    support: s,
                    predicted: pn,
                },
            )
        })
        .collect();
    let k = per_class.len() as f64;
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.values().map(f).sum::<f64>() / k;
    Ok(MetricReport {
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        per_class,
        unpredicted,
    })
}

/// |A ∩ B| / |A ∪ B|; two empty sets give 1.0.
pub fn jaccard_overlap<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

// ---------------------------------------------------------------------------
// adjusted mutual information

fn relabel<T: Eq + Hash + Clone>(xs: &[T]) -> (Vec<usize>, usize) {
    let mut ids: HashMap<T, usize> = HashMap::new();
    let out = xs
        .iter()
        .map(|x| {
            let next = ids.len();
            *ids.entry(x.clone()).or_insert(next)
        })
        .collect();
    (out, ids.len())
}

fn entropy(counts: &[usize], n: f64) -> f64 {
    counts
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// `ln(k!)` for `k = 0..=n`.
fn log_factorials(n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    for k in 1..=n {
        t[k] = t[k - 1] + (k as f64).ln();
    }
    t
}

/// Expected mutual information under the permutation (hypergeometric) model.
pub fn expected_mutual_info(a: &[usize], b: &[usize], n: usize) -> f64 {
    let lf = log_factorials(n);
    let nf = n as f64;
    let mut emi = 0.0;
    for &ai in a {
        for &bj in b {
            let lo = (ai + bj).saturating_sub(n).max(1);
            let hi = ai.min(bj);
            for nij in lo..=hi {
                let x = nij as f64;
                let term = x / nf * (nf * x / (ai as f64 * bj as f64)).ln();
                let log_p = lf[ai] + lf[bj] + lf[n - ai] + lf[n - bj]
                    - lf[n]
                    - lf[nij]
                    - lf[ai - nij]
                    - lf[bj - nij]
                    - lf[n + nij - ai - bj];
                emi += term * log_p.exp();
            }
        }
    }
    emi
}

/// Adjusted mutual information with arithmetic-mean normalization.
///
/// When both partitions are a single cluster, or both put every element in
/// its own cluster, the score is 1.0: the partitions are identical and the
/// chance-corrected ratio is 0/0.
pub fn ami<T: Eq + Hash + Clone, U: Eq + Hash + Clone>(u: &[T], v: &[U]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::Precondition(format!(
            "partitions cover different element counts ({} vs {})",
            u.len(),
            v.len()
        )));
    }
    let n = u.len();
    if n < 2 {
        return Err(Error::Data(format!("AMI needs at least 2 common elements, got {n}")));
    }
    let (ul, ku) = relabel(u);
    let (vl, kv) = relabel(v);
    let mut table = vec![vec![0usize; kv]; ku];
    for (&i, &j) in ul.iter().zip(&vl) {
        table[i][j] += 1;
    }
    let a: Vec<usize> = table.iter().map(|r| r.iter().sum()).collect();
    let b: Vec<usize> = (0..kv).map(|j| table.iter().map(|r| r[j]).sum()).collect();
    let nf = n as f64;
    let hu = entropy(&a, nf);
    let hv = entropy(&b, nf);
    if ku == kv && (ku == 1 || ku == n) {
        return Ok(1.0);
    }
    let mut mi = 0.0;
    for (i, row) in table.iter().enumerate() {
        for (j, &nij) in row.iter().enumerate() {
            if nij > 0 {
                let x = nij as f64;
                mi += x / nf * (nf * x / (a[i] as f64 * b[j] as f64)).ln();
            }
        }
    }
    let emi = expected_mutual_info(&a, &b, n);
    let denom = 0.5 * (hu + hv) - emi;
    let num = mi - emi;
    if denom.abs() < f64::EPSILON {
        return Ok(if num.abs() < f64::EPSILON { 1.0 } else { 0.0 });
    }
    Ok(num / denom)
}

/// AMI between two user→cluster maps over their common non-noise users.
pub fn ami_common(a: &BTreeMap<String, i64>, b: &BTreeMap<String, i64>) -> Result<(f64, usize)> {
    let common: Vec<&String> = a
        .iter()
        .filter(|(u, &c)| c != NOISE && b.get(*u).is_some_and(|&d| d != NOISE))
        .map(|(u, _)| u)
        .collect();
    let u: Vec<i64> = common.iter().map(|k| a[*k]).collect();
    let v: Vec<i64> = common.iter().map(|k| b[*k]).collect();
    Ok((ami(&u, &v)?, common.len()))
}

/// Adjusted Rand index; used by tests and acceptance checks.
pub fn ari<T: Eq + Hash + Clone, U: Eq + Hash + Clone>(u: &[T], v: &[U]) -> f64 {
    let (ul, ku) = relabel(u);
    let (vl, kv) = relabel(v);
    let mut table = vec![vec![0u64; kv]; ku];
    for (&i, &j) in ul.iter().zip(&vl) {
        table[i][j] += 1;
    }
    let c2 = |x: u64| (x * x.saturating_sub(1)) as f64 / 2.0;
    let sum_ij: f64 = table.iter().flatten().map(|&x| c2(x)).sum();
    let sum_a: f64 = table.iter().map(|r| c2(r.iter().sum())).sum();
    let sum_b: f64 = (0..kv).map(|j| c2(table.iter().map(|r| r[j]).sum())).sum();
    let total = c2(u.len() as u64);
    let expected = sum_a * sum_b / total;
    let max = 0.5 * (sum_a + sum_b);
    if (max - expected).abs() < f64::EPSILON {
        return 1.0;
    }
    (sum_ij - expected) / (max - expected)
}

// ---------------------------------------------------------------------------
// files

#[derive(Debug, Serialize, Deserialize)]
struct GoldRow {
    user_id: String,
    label: String,
}

/// Reads `user_id,label` rows; blank class strings are rejected.
pub fn load_gold(path: &Path) -> Result<GoldLabels> {
    let rows: Vec<GoldRow> = crate::io::read_csv(path)?;
    let mut gold = GoldLabels::new();
    for r in rows {
        if r.label.is_empty() {
            return Err(Error::Format(format!("{}: empty class for user {}", path.display(), r.user_id)));
        }
        gold.insert(r.user_id, r.label);
    }
    Ok(gold)
}

pub fn gold_csv(gold: &GoldLabels) -> Result<Vec<u8>> {
    let rows: Vec<GoldRow> = gold
        .iter()
        .map(|(u, l)| GoldRow {
            user_id: u.clone(),
            label: l.clone(),
        })
        .collect();
    crate::io::csv_bytes(&rows)
}

/// Topics × topics matrix as CSV with a header row and a leading name column.
pub fn matrix_csv(names: &[String], m: &[Vec<f64>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["topic".to_string()];
    header.extend(names.iter().cloned());
    let wrap = |e: csv::Error| Error::Format(e.to_string());
    w.write_record(&header).map_err(wrap)?;
    for (name, row) in names.iter().zip(m) {
        let mut rec = vec![name.clone()];
        rec.extend(row.iter().map(|x| format!("{x:.6}")));
        w.write_record(&rec).map_err(wrap)?;
    }
    w.into_inner().map_err(|e| Error::Format(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn members(spec: &[(&str, i64)]) -> Vec<(String, i64)> {
        spec.iter().map(|(u, c)| (u.to_string(), *c)).collect()
    }

    fn gold(spec: &[(&str, &str)]) -> GoldLabels {
        spec.iter().map(|(u, c)| (u.to_string(), c.to_string())).collect()
    }

    #[test]
    fn majority_seven_three() {
        let m: Vec<(String, i64)> = (0..10).map(|i| (format!("u{i}"), 0)).collect();
        let g: GoldLabels = (0..10)
            .map(|i| (format!("u{i}"), if i < 7 { "pro" } else { "anti" }.to_string()))
            .collect();
        let l = majority_label(&m, &g);
        assert_eq!(l[&0].class, "pro");
        assert!(!l[&0].tie);
    }

    #[test]
    fn majority_unknown_and_tie() {
        let m = members(&[("a", 0), ("b", 0), ("c", 0), ("d", 0), ("x", 1), ("n", -1)]);
        let g = gold(&[("a", "pro"), ("b", "pro"), ("c", "anti"), ("d", "anti"), ("n", "pro")]);
        let l = majority_label(&m, &g);
        assert_eq!(l[&0].class, "anti");
        assert!(l[&0].tie);
        assert_eq!(l[&1].class, UNKNOWN);
        assert!(!l.contains_key(&-1));
    }

    #[test]
    fn prf_perfect() {
        let g = gold(&[("a", "pro"), ("b", "anti")]);
        let r = prf(&g, &g).unwrap();
        for m in r.per_class.values() {
            assert_eq!((m.precision, m.recall, m.f1), (1.0, 1.0, 1.0));
        }
    }

    #[test]
    fn prf_all_noise() {
        let g = gold(&[("a", "pro"), ("b", "anti")]);
        let r = prf(&BTreeMap::new(), &g).unwrap();
        for m in r.per_class.values() {
            assert_eq!((m.precision, m.recall, m.f1), (0.0, 0.0, 0.0));
        }
        assert_eq!(r.unpredicted, 2);
    }

    #[test]
    fn prf_constructed_ten_users() {
        // 7 gold pro, 3 gold anti; 8 predicted pro of which 6 correct
        let mut g = GoldLabels::new();
        let mut p = BTreeMap::new();
        for i in 0..7 {
            g.insert(format!("p{i}"), "pro".to_string());
        }
        for i in 0..3 {
            g.insert(format!("a{i}"), "anti".to_string());
        }
        for i in 0..6 {
            p.insert(format!("p{i}"), "pro".to_string());
        }
        p.insert("p6".into(), "anti".into());
        p.insert("a0".into(), "pro".into());
        p.insert("a1".into(), "pro".into());
        p.insert("a2".into(), "anti".into());
        let r = prf(&p, &g).unwrap();
        let pro = r.per_class["pro"];
        assert!((pro.precision - 0.75).abs() < 1e-12);
        assert!((pro.recall - 6.0 / 7.0).abs() < 1e-12);
        assert!((pro.f1 - 0.8).abs() < 1e-12);
    }

    #[test]
    fn prf_disjoint_is_error() {
        let g = gold(&[("a", "pro")]);
        let p: BTreeMap<String, String> = [("z".to_string(), "pro".to_string())].into();
        assert!(matches!(prf(&p, &g), Err(Error::Data(_))));
    }

    #[test]
    fn jaccard_cases() {
        let s = |xs: &[u32]| xs.iter().copied().collect::<BTreeSet<u32>>();
        assert_eq!(jaccard_overlap(&s(&[1, 2]), &s(&[1, 2])), 1.0);
        assert_eq!(jaccard_overlap(&s(&[1]), &s(&[2])), 0.0);
        assert_eq!(jaccard_overlap(&s(&[1, 2]), &s(&[1])), 0.5);
        assert_eq!(jaccard_overlap(&s(&[]), &s(&[])), 1.0);
    }

    #[test]
    fn ami_identical_and_degenerate() {
        let u = [0, 0, 1, 1, 2, 2];
        assert!((ami(&u, &u).unwrap() - 1.0).abs() < 1e-9);
        assert_eq!(ami(&[0, 0, 0, 0], &[0, 0, 1, 1]).unwrap(), 0.0);
        assert_eq!(ami(&[5, 5, 5], &["a", "a", "a"]).unwrap(), 1.0);
        assert_eq!(ami(&[0, 1, 2, 3], &[3, 2, 1, 0]).unwrap(), 1.0);
        assert!(matches!(ami(&[0], &[0]), Err(Error::Data(_))));
        assert!(matches!(ami(&[0, 1], &[0]), Err(Error::Precondition(_))));
    }

    #[test]
    fn ami_relabel_invariant() {
        let u = [0, 0, 1, 1, 1, 2, 2, 0];
        let v = [1, 1, 1, 0, 0, 0, 2, 2];
        let v2 = [7, 7, 7, 3, 3, 3, 9, 9];
        assert_eq!(ami(&u, &v).unwrap(), ami(&u, &v2).unwrap());
    }

    #[test]
    fn ari_basic() {
        assert_eq!(ari(&[0, 0, 1, 1], &[1, 1, 0, 0]), 1.0);
        assert!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]) < 0.0);
    }
}
