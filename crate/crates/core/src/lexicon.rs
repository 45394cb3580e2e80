//! Valence and prominence of terms in one tweet set relative to another.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermStats {
    pub tf_a: u64,
    pub tf_b: u64,
    /// Total token occurrences in each set.
    pub size_a: u64,
    pub size_b: u64,
}

impl TermStats {
    /// Relative-rate score in [−1, 1]; positive when the term is more typical of set A.
    pub fn valence(&self) -> f64 {
        let ra = if self.size_a == 0 {
            0.0
        } else {
            self.tf_a as f64 / self.size_a as f64
        };
        let rb = if self.size_b == 0 {
            0.0
        } else {
            self.tf_b as f64 / self.size_b as f64
        };
        if ra + rb == 0.0 {
            return 0.0;
        }
        2.0 * (ra / (ra + rb)) - 1.0
    }

    /// `ln(tf_a) · valence`; undefined when `tf_a = 0`.
    pub fn prominence(&self) -> Result<f64> {
        if self.tf_a == 0 {
            return Err(Error::Domain("prominence is undefined for tf_a = 0".into()));
        }
        Ok((self.tf_a as f64).ln() * self.valence())
    }

    pub fn swapped(&self) -> TermStats {
        TermStats {
            tf_a: self.tf_b,
            tf_b: self.tf_a,
            size_a: self.size_b,
            size_b: self.size_a,
        }
    }
}

pub fn prominence(stats: &TermStats) -> Result<f64> {
    stats.prominence()
}

/// Token counts over two tweet sets, keyed by term.
pub fn term_stats<S: AsRef<str>>(tweets_a: &[Vec<S>], tweets_b: &[Vec<S>]) -> Result<BTreeMap<String, TermStats>> {
    if tweets_a.is_empty() || tweets_b.is_empty() {
        return Err(Error::Precondition("both tweet sets must be nonempty".into()));
    }
    let mut counts: BTreeMap<String, (u64, u64)> = BTreeMap::new();
    let (mut size_a, mut size_b) = (0, 0);
    for t in tweets_a.iter().flatten() {
        counts.entry(t.as_ref().to_string()).or_default().0 += 1;
        size_a += 1;
    }
    for t in tweets_b.iter().flatten() {
        counts.entry(t.as_ref().to_string()).or_default().1 += 1;
        size_b += 1;
    }
    Ok(counts
        .into_iter()
        .map(|(term, (tf_a, tf_b))| {
            (
                term,
                TermStats {
                    tf_a,
                    tf_b,
                    size_a,
                    size_b,
                },
            )
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProminenceEntry {
    pub term: String,
    pub tf_a: u64,
    pub tf_b: u64,
    pub valence: f64,
    pub prominence: f64,
}

/// Up to `k` terms of set A ranked by prominence (descending, ties by term).
/// Terms absent from A, stopwords and the number token are skipped.
pub fn top_terms<S: AsRef<str>>(
    tweets_a: &[Vec<S>],
    tweets_b: &[Vec<S>],
    k: usize,
    stopwords: &BTreeSet<String>,
    number_token: &str,
) -> Result<Vec<ProminenceEntry>> {
    if k == 0 {
        return Err(Error::Precondition("k must be >= 1".into()));
    }
    let stats = term_stats(tweets_a, tweets_b)?;
    let mut ranked: Vec<ProminenceEntry> = stats
        .into_iter()
        .filter(|(t, s)| s.tf_a > 0 && t != number_token && !stopwords.contains(t))
        .map(|(term, s)| ProminenceEntry {
            prominence: s.prominence().expect("tf_a > 0"),
            valence: s.valence(),
            tf_a: s.tf_a,
            tf_b: s.tf_b,
            term,
        })
        .collect();
    ranked.sort_by(|x, y| y.prominence.total_cmp(&x.prominence).then_with(|| x.term.cmp(&y.term)));
    ranked.truncate(k);
    Ok(ranked)
}

pub fn default_stopwords() -> BTreeSet<String> {
    parse_stopwords(DEFAULT_STOPWORDS)
}

pub fn parse_stopwords(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

pub fn load_stopwords(path: &Path) -> Result<BTreeSet<String>> {
    Ok(parse_stopwords(&crate::io::read_to_string(path)?))
}

pub fn entries_csv(entries: &[ProminenceEntry]) -> Result<Vec<u8>> {
    crate::io::csv_bytes(entries)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CloudWord {
    pub term: String,
    pub weight: f64,
}

pub fn word_cloud(entries: &[ProminenceEntry]) -> Vec<CloudWord> {
    entries
        .iter()
        .map(|e| CloudWord {
            term: e.term.clone(),
            weight: e.prominence.max(0.0),
        })
        .collect()
}
