//! Seed labels and round-synchronous retweet label propagation.
//!
//! A tweet is endorsed by a side in round `k` when every user labeled after
//! round `k-1` who posted or retweeted it belongs to that side (and at least
//! one labeled user did). An unlabeled user joins a side once they retweeted
//! at least `min_retweets` tweets endorsed by it and none endorsed by the
//! other side. Seeds are never overwritten and labels are never revised.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::Corpus;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stance {
    Pro,
    Anti,
    Unlabeled,
}

impl Stance {
    pub fn opposite(self) -> Stance {
        match self {
            Stance::Pro => Stance::Anti,
            Stance::Anti => Stance::Pro,
            Stance::Unlabeled => Stance::Unlabeled,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stance::Pro => "pro",
            Stance::Anti => "anti",
            Stance::Unlabeled => "unlabeled",
        }
    }

    pub fn parse(s: &str) -> Option<Stance> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pro" => Some(Stance::Pro),
            "anti" => Some(Stance::Anti),
            "unlabeled" => Some(Stance::Unlabeled),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LabelSource {
    Seed,
    Propagated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StanceLabel {
    pub value: Stance,
    pub source: LabelSource,
    /// 0 for seeds, round number (from 1) for propagated labels.
    pub iteration: u32,
}

impl StanceLabel {
    pub fn seed(value: Stance) -> Self {
        StanceLabel {
            value,
            source: LabelSource::Seed,
            iteration: 0,
        }
    }

    pub fn propagated(value: Stance, iteration: u32) -> Self {
        debug_assert!(iteration >= 1);
        StanceLabel {
            value,
            source: LabelSource::Propagated,
            iteration,
        }
    }
}

pub type Labels = BTreeMap<String, StanceLabel>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PropagationParams {
    pub min_retweets: usize,
    pub max_iterations: u32,
}

impl Default for PropagationParams {
    fn default() -> Self {
        PropagationParams {
            min_retweets: 10,
            max_iterations: 20,
        }
    }
}

/// tweet id -> users who retweeted it.
pub type RetweetIndex = BTreeMap<String, BTreeSet<String>>;

pub fn build_retweet_index(corpus: &Corpus) -> RetweetIndex {
    let mut index = RetweetIndex::new();
    for t in corpus.tweets() {
        if let Some(src) = &t.retweeted_tweet_id {
            index
                .entry(src.clone())
                .or_default()
                .insert(t.user_id.clone());
        }
    }
    index
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RoundCounts {
    pub new_pro: usize,
    pub new_anti: usize,
}

impl RoundCounts {
    pub fn total(&self) -> usize {
        self.new_pro + self.new_anti
    }
}

#[derive(Debug, Clone)]
pub struct Propagation {
    pub labels: Labels,
    trace: Vec<RoundCounts>,
}

impl Propagation {
    /// Per-round counts of newly labeled users, one entry per executed round.
    pub fn trace(&self) -> &[RoundCounts] {
        &self.trace
    }
}

pub fn propagation_trace(result: &Propagation) -> &[RoundCounts] {
    result.trace()
}

/// Interned view of who touched which tweet.
struct Engagement {
    /// per tweet: users who posted or retweeted it
    engaged: Vec<Vec<usize>>,
    /// per user: distinct tweets they retweeted
    retweeted: Vec<Vec<usize>>,
    user_ids: Vec<String>,
    user_ix: HashMap<String, usize>,
}

impl Engagement {
    fn build(corpus: &Corpus) -> Self {
        let mut eng = Engagement {
            engaged: Vec::new(),
            retweeted: Vec::new(),
            user_ids: Vec::new(),
            user_ix: HashMap::new(),
        };
        let mut engaged: Vec<HashSet<usize>> = Vec::new();
        let mut retweeted: Vec<BTreeSet<usize>> = Vec::new();
        let mut tweet_lookup: HashMap<&str, usize> = HashMap::new();
        for t in corpus.tweets() {
            let u = eng.intern(&t.user_id);
            let key: &str = match &t.retweeted_tweet_id {
                Some(src) => src,
                None => &t.tweet_id,
            };
            let tw = *tweet_lookup.entry(key).or_insert_with(|| {
                engaged.push(HashSet::new());
                engaged.len() - 1
            });
            engaged[tw].insert(u);
            if let Some(author) = &t.retweeted_user_id {
                let a = eng.intern(author);
                engaged[tw].insert(a);
                retweeted.resize_with(eng.user_ids.len(), BTreeSet::new);
                retweeted[u].insert(tw);
            }
        }
        retweeted.resize_with(eng.user_ids.len(), BTreeSet::new);
        eng.engaged = engaged
            .into_iter()
            .map(|s| {
                let mut v: Vec<_> = s.into_iter().collect();
                v.sort_unstable();
                v
            })
            .collect();
        eng.retweeted = retweeted.into_iter().map(|s| s.into_iter().collect()).collect();
        eng
    }

    fn intern(&mut self, user: &str) -> usize {
        if let Some(&i) = self.user_ix.get(user) {
            return i;
        }
        self.user_ids.push(user.to_string());
        self.user_ix.insert(user.to_string(), self.user_ids.len() - 1);
        self.user_ids.len() - 1
    }
}

fn endorsement(engaged: &[usize], state: &[Stance]) -> Stance {
    let mut side = Stance::Unlabeled;
    for &u in engaged {
        match (state[u], side) {
            (Stance::Unlabeled, _) => {}
            (s, Stance::Unlabeled) => side = s,
            (s, cur) if s == cur => {}
            _ => return Stance::Unlabeled,
        }
    }
    side
}

/// Runs label propagation to a fixpoint or `max_iterations` rounds.
///
/// Rounds stop early when a round labels nobody or no unlabeled user is left;
/// at least one round always runs. Seeds for users absent from the corpus are
/// kept in the output unchanged.
pub fn propagate(
    corpus: &Corpus,
    seeds: &BTreeMap<String, StanceLabel>,
    params: &PropagationParams,
) -> Result<Propagation> {
    if params.min_retweets < 1 || params.max_iterations < 1 {
        return Err(Error::Precondition(
            "min_retweets and max_iterations must be >= 1".into(),
        ));
    }
    if let Some((u, _)) = seeds.iter().find(|(_, l)| l.value == Stance::Unlabeled) {
        return Err(Error::Precondition(format!("seed {u} is Unlabeled")));
    }

    let eng = Engagement::build(corpus);
    let mut state: Vec<Stance> = eng
        .user_ids
        .iter()
        .map(|u| seeds.get(u).map_or(Stance::Unlabeled, |l| l.value))
        .collect();
    let mut labels: Labels = seeds.clone();
    let mut trace = Vec::new();

    // Only corpus authors can gain labels; retweeted-only accounts have no retweets to judge.
    let is_author: HashSet<usize> = corpus.users().iter().map(|u| eng.user_ix[u]).collect();

    for round in 1..=params.max_iterations {
        let endorsed: Vec<Stance> = eng.engaged.iter().map(|e| endorsement(e, &state)).collect();
        let mut newly = Vec::new();
        for u in 0..eng.user_ids.len() {
            if state[u] != Stance::Unlabeled || !is_author.contains(&u) {
                continue;
            }
            let (mut pro, mut anti) = (0usize, 0usize);
            for &tw in &eng.retweeted[u] {
                match endorsed[tw] {
                    Stance::Pro => pro += 1,
                    Stance::Anti => anti += 1,
                    Stance::Unlabeled => {}
                }
            }
            if pro >= params.min_retweets && anti == 0 {
                newly.push((u, Stance::Pro));
            } else if anti >= params.min_retweets && pro == 0 {
                newly.push((u, Stance::Anti));
            }
        }
        let mut counts = RoundCounts::default();
        for &(u, s) in &newly {
            state[u] = s;
            labels.insert(eng.user_ids[u].clone(), StanceLabel::propagated(s, round));
            match s {
                Stance::Pro => counts.new_pro += 1,
                Stance::Anti => counts.new_anti += 1,
                Stance::Unlabeled => unreachable!(),
            }
        }
        trace.push(counts);
        let remaining = is_author
            .iter()
            .any(|&u| state[u] == Stance::Unlabeled);
        if counts.total() == 0 || !remaining {
            break;
        }
    }
    Ok(Propagation { labels, trace })
}

// ---------------------------------------------------------------------------
// seeds from profiles

/// Case-insensitive substring rule mapping profile text to a stance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedRule {
    pub pattern: String,
    pub label: Stance,
}

/// Profile markers for the 2018 Turkish election: party names and campaign hashtags.
pub fn default_seed_rules() -> Vec<SeedRule> {
    [
        ("akparti", Stance::Pro),
        ("#devam", Stance::Pro),
        ("#rte", Stance::Pro),
        ("chp", Stance::Anti),
        ("hdp", Stance::Anti),
        ("iyi", Stance::Anti),
        ("#tamam", Stance::Anti),
    ]
    .into_iter()
    .map(|(p, l)| SeedRule {
        pattern: p.to_string(),
        label: l,
    })
    .collect()
}

/// Applies profile rules; profiles matching both sides are left out.
pub fn seeds_from_profiles(
    profiles: &BTreeMap<String, String>,
    rules: &[SeedRule],
) -> BTreeMap<String, StanceLabel> {
    let mut out = BTreeMap::new();
    for (user, profile) in profiles {
        let p = profile.to_lowercase();
        let hits: BTreeSet<Stance> = rules
            .iter()
            .filter(|r| r.label != Stance::Unlabeled && p.contains(&r.pattern.to_lowercase()))
            .map(|r| r.label)
            .collect();
        if hits.len() == 1 {
            let s = *hits.iter().next().unwrap();
            out.insert(user.clone(), StanceLabel::seed(s));
        }
    }
    out
}

// ---------------------------------------------------------------------------
// CSV I/O

#[derive(Debug, Serialize, Deserialize)]
struct SeedRow {
    user_id: String,
    label: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelRow {
    pub user_id: String,
    pub label: Stance,
    pub source: LabelSource,
    pub iteration: u32,
}

/// Reads `user_id,label` with label in {pro, anti}.
pub fn load_seeds(path: &Path) -> Result<BTreeMap<String, StanceLabel>> {
    let rows: Vec<SeedRow> = crate::io::read_csv(path)?;
    let mut out = BTreeMap::new();
    for r in rows {
        let s = match Stance::parse(&r.label) {
            Some(s @ (Stance::Pro | Stance::Anti)) => s,
            _ => {
                return Err(Error::Format(format!(
                    "seed {}: label must be pro or anti, got `{}`",
                    r.user_id, r.label
                )))
            }
        };
        out.insert(r.user_id, StanceLabel::seed(s));
    }
    Ok(out)
}

pub fn seeds_csv(seeds: &BTreeMap<String, Stance>) -> Result<Vec<u8>> {
    let rows: Vec<SeedRow> = seeds
        .iter()
        .map(|(u, s)| SeedRow {
            user_id: u.clone(),
            label: s.as_str().to_string(),
        })
        .collect();
    crate::io::csv_bytes(&rows)
}

pub fn labels_csv(labels: &Labels) -> Result<Vec<u8>> {
    let rows: Vec<LabelRow> = labels
        .iter()
        .map(|(u, l)| LabelRow {
            user_id: u.clone(),
            label: l.value,
            source: l.source,
            iteration: l.iteration,
        })
        .collect();
    crate::io::csv_bytes(&rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Tweet;

    fn orig(id: &str, user: &str) -> Tweet {
        Tweet {
            tweet_id: id.into(),
            user_id: user.into(),
            text: String::new(),
            retweeted_tweet_id: None,
            retweeted_user_id: None,
            timestamp: 0,
            lang: "tr".into(),
        }
    }

    fn rt(id: &str, user: &str, src: &str, author: &str) -> Tweet {
        Tweet {
            retweeted_tweet_id: Some(src.into()),
            retweeted_user_id: Some(author.into()),
            ..orig(id, user)
        }
    }

    fn seeds(pairs: &[(&str, Stance)]) -> BTreeMap<String, StanceLabel> {
        pairs
            .iter()
            .map(|(u, s)| (u.to_string(), StanceLabel::seed(*s)))
            .collect()
    }

    #[test]
    fn retweet_index_examples() {
        let c = Corpus::new(vec![
            orig("T", "a"),
            rt("r1", "u1", "T", "a"),
            rt("r2", "u2", "T", "a"),
            rt("r3", "u1", "T", "a"),
        ])
        .unwrap();
        let idx = build_retweet_index(&c);
        assert_eq!(idx.len(), 1);
        assert_eq!(
            idx["T"].iter().cloned().collect::<Vec<_>>(),
            vec!["u1".to_string(), "u2".to_string()]
        );
        let none = Corpus::new(vec![orig("T", "a")]).unwrap();
        assert!(build_retweet_index(&none).is_empty());
    }

    /// `target` retweets `n_pro` tweets authored by pro seed `p` and `n_anti` by anti seed `q`.
    fn star(n_pro: usize, n_anti: usize) -> Corpus {
        let mut tw = Vec::new();
        for i in 0..n_pro {
            tw.push(orig(&format!("p{i}"), "p"));
            tw.push(rt(&format!("rp{i}"), "target", &format!("p{i}"), "p"));
        }
        for i in 0..n_anti {
            tw.push(orig(&format!("q{i}"), "q"));
            tw.push(rt(&format!("rq{i}"), "target", &format!("q{i}"), "q"));
        }
        Corpus::new(tw).unwrap()
    }

    #[test]
    fn ten_pro_endorsed_retweets_label_pro() {
        let c = star(10, 0);
        let s = seeds(&[("p", Stance::Pro), ("q", Stance::Anti)]);
        let out = propagate(&c, &s, &PropagationParams::default()).unwrap();
        assert_eq!(out.labels["target"], StanceLabel::propagated(Stance::Pro, 1));
        assert_eq!(out.labels["p"], StanceLabel::seed(Stance::Pro));
    }

    #[test]
    fn one_opposite_retweet_blocks() {
        let c = star(10, 1);
        let s = seeds(&[("p", Stance::Pro), ("q", Stance::Anti)]);
        let out = propagate(&c, &s, &PropagationParams::default()).unwrap();
        assert!(!out.labels.contains_key("target"));
    }

    #[test]
    fn nine_is_not_enough() {
        let c = star(9, 0);
        let s = seeds(&[("p", Stance::Pro)]);
        let out = propagate(&c, &s, &PropagationParams::default()).unwrap();
        assert!(!out.labels.contains_key("target"));
    }

    #[test]
    fn empty_seeds_single_round() {
        let c = star(10, 0);
        let out = propagate(&c, &BTreeMap::new(), &PropagationParams::default()).unwrap();
        assert!(out.labels.is_empty());
        assert_eq!(out.trace(), &[RoundCounts::default()]);
    }

    #[test]
    fn unlabeled_seed_rejected() {
        let c = star(1, 0);
        let s: BTreeMap<_, _> = [("p".to_string(), StanceLabel::seed(Stance::Unlabeled))].into();
        assert!(matches!(
            propagate(&c, &s, &PropagationParams::default()),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn chain_reaches_fixpoint_in_three_rounds() {
        // seed s -> a (round 1) -> b (round 2); round 3 adds nothing, leftover user z stays unlabeled
        let mut tw = vec![orig("z0", "z")];
        for i in 0..2 {
            tw.push(orig(&format!("s{i}"), "s"));
            tw.push(rt(&format!("as{i}"), "a", &format!("s{i}"), "s"));
            tw.push(orig(&format!("a{i}"), "a"));
            tw.push(rt(&format!("ba{i}"), "b", &format!("a{i}"), "a"));
        }
        let c = Corpus::new(tw).unwrap();
        let params = PropagationParams {
            min_retweets: 2,
            max_iterations: 20,
        };
        let out = propagate(&c, &seeds(&[("s", Stance::Anti)]), &params).unwrap();
        assert_eq!(out.labels["a"].iteration, 1);
        assert_eq!(out.labels["b"].iteration, 2);
        let trace = propagation_trace(&out);
        assert_eq!(trace.len(), 3);
        assert_eq!(trace[2], RoundCounts::default());
        assert_eq!(trace[0].new_anti, 1);
    }

    #[test]
    fn saturation_stops_after_one_round() {
        let c = star(10, 0);
        let out = propagate(&c, &seeds(&[("p", Stance::Pro)]), &PropagationParams::default()).unwrap();
        assert_eq!(out.trace().len(), 1);
        assert_eq!(out.trace()[0].new_pro, 1);
    }

    #[test]
    fn unlabeled_retweeters_do_not_block_endorsement() {
        let mut tw = Vec::new();
        for i in 0..3 {
            tw.push(orig(&format!("p{i}"), "p"));
            tw.push(rt(&format!("x{i}"), "x", &format!("p{i}"), "p"));
            tw.push(rt(&format!("y{i}"), "y", &format!("p{i}"), "p"));
        }
        let c = Corpus::new(tw).unwrap();
        let params = PropagationParams {
            min_retweets: 3,
            max_iterations: 5,
        };
        let out = propagate(&c, &seeds(&[("p", Stance::Pro)]), &params).unwrap();
        assert_eq!(out.labels.len(), 3);
    }

    #[test]
    fn profile_rules() {
        let profiles: BTreeMap<String, String> = [
            ("a", "AKParti gönüllüsü"),
            ("b", "#Tamam diyoruz"),
            ("c", "futbol"),
            ("d", "akparti ve chp"),
        ]
        .into_iter()
        .map(|(u, p)| (u.to_string(), p.to_string()))
        .collect();
        let s = seeds_from_profiles(&profiles, &default_seed_rules());
        assert_eq!(s["a"].value, Stance::Pro);
        assert_eq!(s["b"].value, Stance::Anti);
        assert!(!s.contains_key("c"));
        assert!(!s.contains_key("d"));
    }

    #[test]
    fn seed_csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("seeds.csv");
        let m: BTreeMap<String, Stance> =
            [("u1".to_string(), Stance::Pro), ("u2".to_string(), Stance::Anti)].into();
        std::fs::write(&p, seeds_csv(&m).unwrap()).unwrap();
        let back = load_seeds(&p).unwrap();
        assert_eq!(back["u1"], StanceLabel::seed(Stance::Pro));
        assert_eq!(back["u2"], StanceLabel::seed(Stance::Anti));

        std::fs::write(&p, "user_id,label\nu1,maybe\n").unwrap();
        assert!(matches!(load_seeds(&p), Err(Error::Format(_))));
    }
}
