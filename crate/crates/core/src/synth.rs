//! Deterministic two-group synthetic corpus with planted stance structure.
//!
//! Each user posts original tweets whose tokens mix a shared vocabulary with
//! the user's group vocabulary (and, once sub-communities are planted, a
//! smaller sub-community vocabulary). Retweets copy an original tweet from
//! the same group with probability `1 - cross_rate`. Retweet sources are
//! skewed towards a few popular accounts per group, and each user's first
//! retweet points at an earlier member of the target group, so at
//! `cross_rate = 0` the retweet graph splits into exactly two components.
//! With planted sub-communities, in-group retweets stay inside the
//! retweeter's sub-community.

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, Tweet};
use crate::error::{Error, Result};
use crate::eval::GoldLabels;
use crate::labelprop::Stance;
use crate::seed;

const SYLLABLES: [&str; 16] = [
    "ka", "le", "mi", "ro", "tu", "sa", "ne", "bi", "do", "ya", "zu", "ge", "pa", "ci", "fo", "hu",
];

pub const GROUP_NAMES: [&str; 2] = ["pro", "anti"];

/// How per-topic stance relates to the gold group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum TopicAlignment {
    /// Every topic follows the gold group split.
    #[default]
    Shared,
    /// Topics after the first draw their own balanced split, independent of
    /// the gold groups; retweets on those topics follow that split.
    Independent,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthParams {
    pub n_users_per_group: usize,
    /// Poisson mean of posts per user (truncated to at least 1).
    pub n_tweets_per_user: f64,
    pub vocab_shared: usize,
    pub vocab_exclusive_per_group: usize,
    pub topic_names: Vec<String>,
    pub retweet_rate: f64,
    pub cross_rate: f64,
    pub seed: u64,
    pub topic_alignment: TopicAlignment,
    /// Inclusive range of words per original tweet.
    pub words_per_tweet: (usize, usize),
}

impl Default for SynthParams {
    fn default() -> Self {
        SynthParams {
            n_users_per_group: 500,
            n_tweets_per_user: 20.0,
            vocab_shared: 1000,
            vocab_exclusive_per_group: 500,
            topic_names: vec!["topic".into()],
            retweet_rate: 0.6,
            cross_rate: 0.05,
            seed: 0,
            topic_alignment: TopicAlignment::Shared,
            words_per_tweet: (8, 16),
        }
    }
}

impl SynthParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Precondition(m.into()));
        if self.n_users_per_group < 2 {
            return bad("n_users_per_group must be >= 2");
        }
        if !(self.n_tweets_per_user >= 1.0 && self.n_tweets_per_user.is_finite()) {
            return bad("n_tweets_per_user must be >= 1");
        }
        if self.vocab_shared == 0 && self.vocab_exclusive_per_group == 0 {
            return bad("vocabulary is empty");
        }
        if self.topic_names.is_empty() {
            return bad("at least one topic name is required");
        }
        if self.topic_names.iter().any(|t| !valid_topic(t)) {
            return bad("topic names must be nonempty lowercase ASCII letters, digits or '_'");
        }
        for (name, r) in [("retweet_rate", self.retweet_rate), ("cross_rate", self.cross_rate)] {
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::Precondition(format!("{name} must lie in [0,1]")));
            }
        }
        let (lo, hi) = self.words_per_tweet;
        if lo == 0 || hi < lo {
            return bad("words_per_tweet must be a nonempty range of positive counts");
        }
        Ok(())
    }

    /// Share of group-vocabulary tokens in a tweet.
    pub fn exclusive_weight(&self) -> f64 {
        let (s, e) = (self.vocab_shared as f64, self.vocab_exclusive_per_group as f64);
        e / (s + e)
    }
}

fn valid_topic(t: &str) -> bool {
    !t.is_empty() && t.chars().all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// Hashtag that marks a tweet as belonging to `topic`; use it as the topic keyword.
pub fn topic_keyword(topic: &str) -> String {
    format!("#{topic}")
}

#[derive(Debug, Clone)]
pub struct SynthCorpus {
    pub corpus: Corpus,
    /// user → class; group names, or community names after planting.
    pub gold: GoldLabels,
    /// user → group name regardless of planting.
    pub groups: GoldLabels,
    /// About 10% of each group, as seed stances.
    pub seed_subset: BTreeMap<String, Stance>,
    pub params: SynthParams,
    pub subgroups: usize,
}

/// Pseudo-word for a global vocabulary index; distinct indices give distinct words.
pub fn pseudo_word(index: usize) -> String {
    let mut x = index;
    let mut w = String::new();
    for _ in 0..4 {
        w.push_str(SYLLABLES[x % 16]);
        x /= 16;
    }
    while x > 0 {
        w.push_str(SYLLABLES[x % 16]);
        x /= 16;
    }
    w
}

struct Vocab {
    shared: Vec<usize>,
    group: [Vec<usize>; 2],
    /// `sub[g][s]`
    sub: [Vec<Vec<usize>>; 2],
}

fn vocab(params: &SynthParams, subgroups: usize) -> Vocab {
    let mut next = 0;
    let mut take = |n: usize| {
        let v: Vec<usize> = (next..next + n).collect();
        next += n;
        v
    };
    let shared = take(params.vocab_shared);
    let group = [take(params.vocab_exclusive_per_group), take(params.vocab_exclusive_per_group)];
    let sub_size = if subgroups > 1 {
        (params.vocab_exclusive_per_group / 2).max(1)
    } else {
        0
    };
    let mut sub = [Vec::new(), Vec::new()];
    for s in sub.iter_mut() {
        for _ in 0..subgroups {
            s.push(take(sub_size));
        }
    }
    Vocab { shared, group, sub }
}

pub fn generate(params: &SynthParams) -> Result<SynthCorpus> {
    generate_with_subgroups(params, 1)
}

/// Regenerates `base` from its parameters with `k` sub-communities per group.
/// Gold becomes the community labels (`pro-0`, `pro-1`, ...). `k = 1` returns
/// the corpus unchanged.
pub fn plant_subgroups(base: &SynthCorpus, k: usize) -> Result<SynthCorpus> {
    if k == 0 {
        return Err(Error::Precondition("k must be >= 1".into()));
    }
    if k == 1 {
        return Ok(base.clone());
    }
    if k > base.params.n_users_per_group {
        return Err(Error::Precondition(format!(
            "k={k} exceeds group size {}",
            base.params.n_users_per_group
        )));
    }
    generate_with_subgroups(&base.params, k)
}

struct User {
    id: String,
    group: usize,
    sub: usize,
    /// Per-topic side used for vocabulary.
    side: Vec<usize>,
}

fn generate_with_subgroups(params: &SynthParams, subgroups: usize) -> Result<SynthCorpus> {
    params.validate()?;
    let n_group = params.n_users_per_group;
    let n = 2 * n_group;
    let vocab = vocab(params, subgroups);
    let mut rng = ChaCha8Rng::seed_from_u64(seed::derive(params.seed, "synth"));

    // users: random balanced group assignment, contiguous sub-communities
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut users: Vec<User> = (0..n)
        .map(|i| User {
            id: format!("u{i:05}"),
            group: 0,
            sub: 0,
            side: Vec::new(),
        })
        .collect();
    let mut members: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (rank, &u) in order.iter().enumerate() {
        let g = rank / n_group;
        users[u].group = g;
        users[u].sub = (rank % n_group) * subgroups / n_group;
    }
    let mut sub_members: [Vec<Vec<usize>>; 2] = [vec![Vec::new(); subgroups], vec![Vec::new(); subgroups]];
    for (u, user) in users.iter().enumerate() {
        members[user.group].push(u);
        sub_members[user.group][user.sub].push(u);
    }
    let n_topics = params.topic_names.len();
    let independent = |t: usize| t > 0 && params.topic_alignment == TopicAlignment::Independent;
    let mut side_members: Vec<[Vec<usize>; 2]> = vec![[Vec::new(), Vec::new()]; n_topics];
    for t in 0..n_topics {
        let independent = independent(t);
        let mut perm: Vec<usize> = (0..n).collect();
        if independent {
            perm.shuffle(&mut rng);
        }
        for (rank, &u) in perm.iter().enumerate() {
            let side = if independent { rank / n_group } else { users[u].group };
            users[u].side.push(side);
        }
        for (u, user) in users.iter().enumerate() {
            side_members[t][user.side[t]].push(u);
        }
    }

    // post counts and original texts
    let poisson = Poisson::new(params.n_tweets_per_user).map_err(|e| Error::Precondition(e.to_string()))?;
    let p_group = params.exclusive_weight();
    // nested structure: sub-community words are a quarter of the group-word mass
    let p_sub = if subgroups > 1 { p_group / 4.0 } else { 0.0 };
    let mut plans: Vec<Vec<bool>> = Vec::with_capacity(n);
    for _ in 0..n {
        let count = (poisson.sample(&mut rng) as usize).max(1);
        let mut plan: Vec<bool> = (0..count)
            .map(|i| i > 0 && rng.random::<f64>() < params.retweet_rate)
            .collect();
        if params.retweet_rate > 0.0 && !plan.iter().any(|&r| r) {
            plan.push(true);
        }
        plans.push(plan);
    }
    let mut tweets = Vec::new();
    // per user and topic: indices of original tweets
    let mut originals: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n_topics]; n];
    for (u, plan) in plans.iter().enumerate() {
        for _ in plan.iter().filter(|&&r| !r) {
            let t = rng.random_range(0..n_topics);
            let side = users[u].side[t];
            let (lo, hi) = params.words_per_tweet;
            let len = rng.random_range(lo..=hi);
            let mut words: Vec<String> = (0..len)
                .map(|_| {
                    let x: f64 = rng.random();
                    let pool = if x < p_sub {
                        &vocab.sub[side][users[u].sub]
                    } else if x < p_group {
                        &vocab.group[side]
                    } else {
                        &vocab.shared
                    };
                    let pool = if pool.is_empty() { &vocab.shared } else { pool };
                    let pool = if pool.is_empty() { &vocab.group[side] } else { pool };
                    pseudo_word(pool[rng.random_range(0..pool.len())])
                })
                .collect();
            let at = rng.random_range(0..=words.len());
            words.insert(at, topic_keyword(&params.topic_names[t]));
            originals[u][t].push(tweets.len());
            tweets.push(Tweet {
                tweet_id: String::new(),
                user_id: users[u].id.clone(),
                text: words.join(" "),
                retweeted_tweet_id: None,
                retweeted_user_id: None,
                timestamp: 0,
                lang: "tr".into(),
            });
        }
    }

    // retweets
    for (u, plan) in plans.iter().enumerate() {
        let mut first = true;
        for _ in plan.iter().filter(|&&r| r) {
            // users retweet accounts on their own side of the retweet's topic
            let t = rng.random_range(0..n_topics);
            let own = users[u].side[t];
            let target = if rng.random::<f64>() < params.cross_rate { 1 - own } else { own };
            // planted sub-communities keep their in-group retweets local
            let pool = if target == own && subgroups > 1 && !independent(t) {
                &sub_members[own][users[u].sub]
            } else {
                &side_members[t][target]
            };
            let pos_self = pool.iter().position(|&m| m == u);
            let src = if first {
                // an earlier member keeps each group's retweet graph connected
                match pos_self {
                    Some(0) => pool[1 + rng.random_range(0..pool.len() - 1)],
                    Some(p) => pool[rng.random_range(0..p)],
                    None => pool[rng.random_range(0..pool.len())],
                }
            } else {
                // cubic skew towards the first members: a few popular accounts
                let r: f64 = rng.random();
                let mut pick = pool[((r * r * r) * pool.len() as f64) as usize];
                if pick == u {
                    pick = pool[(pos_self.unwrap_or(0) + 1) % pool.len()];
                }
                pick
            };
            first = false;
            let mine = &originals[src][t];
            let source = if mine.is_empty() {
                let all: Vec<usize> = originals[src].iter().flatten().copied().collect();
                all[rng.random_range(0..all.len())]
            } else {
                mine[rng.random_range(0..mine.len())]
            };
            let text = format!("RT @{}: {}", users[src].id, tweets[source].text);
            tweets.push(Tweet {
                tweet_id: format!("#{source}"),
                user_id: users[u].id.clone(),
                text,
                retweeted_tweet_id: None,
                retweeted_user_id: Some(users[src].id.clone()),
                timestamp: 0,
                lang: "tr".into(),
            });
        }
    }

    // ids and timestamps follow generation order
    for (i, t) in tweets.iter_mut().enumerate() {
        t.timestamp = 1_500_000_000 + i as i64 * 60;
    }
    let ids: Vec<String> = (0..tweets.len()).map(|i| format!("t{i:07}")).collect();
    for (i, t) in tweets.iter_mut().enumerate() {
        if let Some(src) = t.tweet_id.strip_prefix('#') {
            let src: usize = src.parse().expect("source index");
            t.retweeted_tweet_id = Some(ids[src].clone());
        }
        t.tweet_id = ids[i].clone();
    }
    let corpus = Corpus::new(tweets)?;

    let mut groups = GoldLabels::new();
    let mut gold = GoldLabels::new();
    for user in &users {
        let g = GROUP_NAMES[user.group];
        groups.insert(user.id.clone(), g.to_string());
        let class = if subgroups > 1 {
            format!("{g}-{}", user.sub)
        } else {
            g.to_string()
        };
        gold.insert(user.id.clone(), class);
    }

    let mut seed_rng = ChaCha8Rng::seed_from_u64(seed::derive(params.seed, "synth-seeds"));
    let mut seed_subset = BTreeMap::new();
    for (g, list) in members.iter().enumerate() {
        let take = (list.len() / 10).max(1);
        let stance = if g == 0 { Stance::Pro } else { Stance::Anti };
        for &u in list.choose_multiple(&mut seed_rng, take) {
            seed_subset.insert(users[u].id.clone(), stance);
        }
    }

    Ok(SynthCorpus {
        corpus,
        gold,
        groups,
        seed_subset,
        params: params.clone(),
        subgroups,
    })
}

impl SynthCorpus {
    /// Writes `corpus.jsonl`, `gold.csv`, `groups.csv` and `seeds.csv` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.corpus.save(&dir.join("corpus.jsonl"))?;
        crate::io::write_atomic(&dir.join("gold.csv"), &crate::eval::gold_csv(&self.gold)?)?;
        crate::io::write_atomic(&dir.join("groups.csv"), &crate::eval::gold_csv(&self.groups)?)?;
        crate::io::write_atomic(&dir.join("seeds.csv"), &crate::labelprop::seeds_csv(&self.seed_subset)?)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn small() -> SynthParams {
        SynthParams {
            n_users_per_group: 40,
            n_tweets_per_user: 6.0,
            vocab_shared: 50,
            vocab_exclusive_per_group: 30,
            ..Default::default()
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        let a = generate(&small()).unwrap();
        let b = generate(&small()).unwrap();
        assert_eq!(a.corpus.to_jsonl(), b.corpus.to_jsonl());
        let c = generate(&SynthParams { seed: 1, ..small() }).unwrap();
        assert_ne!(a.corpus.to_jsonl(), c.corpus.to_jsonl());
    }

    #[test]
    fn gold_sizes_and_seeds() {
        let s = generate(&small()).unwrap();
        let pro = s.gold.values().filter(|v| *v == "pro").count();
        assert_eq!(pro, 40);
        assert_eq!(s.gold.len(), 80);
        assert_eq!(s.seed_subset.len(), 8);
        for (u, st) in &s.seed_subset {
            assert_eq!(s.gold[u], st.as_str());
        }
        assert_eq!(s.corpus.users().len(), 80);
    }

    #[test]
    fn pseudo_words_are_distinct() {
        let w: BTreeSet<String> = (0..5000).map(pseudo_word).collect();
        assert_eq!(w.len(), 5000);
    }

    #[test]
    fn no_exclusive_vocab_means_shared_tokens_only() {
        let s = generate(&SynthParams { vocab_exclusive_per_group: 0, ..small() }).unwrap();
        let shared: BTreeSet<String> = (0..50).map(pseudo_word).collect();
        for t in s.corpus.tweets() {
            for w in t.text.split_whitespace() {
                assert!(shared.contains(w) || w.starts_with('#') || w == "RT" || w.starts_with('@'), "{w}");
            }
        }
    }

    #[test]
    fn subgroup_planting() {
        let base = generate(&small()).unwrap();
        let same = plant_subgroups(&base, 1).unwrap();
        assert_eq!(same.corpus.to_jsonl(), base.corpus.to_jsonl());
        let four = plant_subgroups(&base, 2).unwrap();
        let classes: BTreeSet<&String> = four.gold.values().collect();
        assert_eq!(classes.len(), 4);
        assert_eq!(four.groups, base.groups);
        assert!(matches!(plant_subgroups(&base, 41), Err(Error::Precondition(_))));
    }

    #[test]
    fn invalid_params() {
        assert!(generate(&SynthParams { cross_rate: 1.5, ..small() }).is_err());
        assert!(generate(&SynthParams { topic_names: vec![], ..small() }).is_err());
        assert!(generate(&SynthParams { topic_names: vec!["Bad Name".into()], ..small() }).is_err());
    }
}
