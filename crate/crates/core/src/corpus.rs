//! Tweet corpus model, JSONL ingestion, text normalization and topic filtering.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One tweet or retweet record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tweet {
    pub tweet_id: String,
    pub user_id: String,
    pub text: String,
    pub retweeted_tweet_id: Option<String>,
    pub retweeted_user_id: Option<String>,
    pub timestamp: i64,
    pub lang: String,
}

impl Tweet {
    pub fn is_retweet(&self) -> bool {
        self.retweeted_tweet_id.is_some()
    }

    /// Checks the record-level invariants (uniqueness is a corpus concern).
    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.tweet_id.is_empty() {
            return Err("empty tweet_id".into());
        }
        if self.retweeted_tweet_id.is_some() != self.retweeted_user_id.is_some() {
            return Err(format!(
                "tweet {}: retweeted_tweet_id and retweeted_user_id must both be present or both absent",
                self.tweet_id
            ));
        }
        if self.timestamp < 0 {
            return Err(format!("tweet {}: negative timestamp", self.tweet_id));
        }
        Ok(())
    }
}

/// Ordered tweet collection with a per-user index.
///
/// Users are enumerated in order of first appearance.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    tweets: Vec<Tweet>,
    user_order: Vec<String>,
    user_index: HashMap<String, Vec<usize>>,
}

impl Corpus {
    /// Builds a corpus; fails on a record that breaks an invariant or a duplicate id.
    pub fn new(tweets: Vec<Tweet>) -> Result<Self> {
        let mut seen = HashSet::with_capacity(tweets.len());
        for t in &tweets {
            t.validate().map_err(Error::Data)?;
            if !seen.insert(t.tweet_id.as_str()) {
                return Err(Error::Data(format!("duplicate tweet_id {}", t.tweet_id)));
            }
        }
        Ok(Self::from_valid(tweets))
    }

    fn from_valid(tweets: Vec<Tweet>) -> Self {
        let mut user_order = Vec::new();
        let mut user_index: HashMap<String, Vec<usize>> = HashMap::new();
        for (i, t) in tweets.iter().enumerate() {
            match user_index.get_mut(&t.user_id) {
                Some(v) => v.push(i),
                None => {
                    user_order.push(t.user_id.clone());
                    user_index.insert(t.user_id.clone(), vec![i]);
                }
            }
        }
        Corpus {
            tweets,
            user_order,
            user_index,
        }
    }

    pub fn tweets(&self) -> &[Tweet] {
        &self.tweets
    }

    pub fn len(&self) -> usize {
        self.tweets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tweets.is_empty()
    }

    /// User ids in order of first appearance.
    pub fn users(&self) -> &[String] {
        &self.user_order
    }

    pub fn tweets_of<'a>(&'a self, user_id: &str) -> impl Iterator<Item = &'a Tweet> + 'a {
        self.user_index
            .get(user_id)
            .into_iter()
            .flatten()
            .map(move |&i| &self.tweets[i])
    }

    pub fn contains_user(&self, user_id: &str) -> bool {
        self.user_index.contains_key(user_id)
    }

    /// Canonical JSONL: one object per line in field-declaration order, trailing newline.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for t in &self.tweets {
            out.push_str(&serde_json::to_string(t).expect("tweet serializes"));
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_atomic(path, self.to_jsonl().as_bytes())
    }
}

/// Counts gathered while loading a JSONL corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct LoadStats {
    pub lines: usize,
    pub loaded: usize,
    /// Lines that were not a JSON object with the required fields.
    pub malformed: usize,
    /// Well-formed records that broke an invariant (empty id, half-present retweet, duplicate...).
    pub invalid: usize,
}

impl LoadStats {
    pub fn skipped(&self) -> usize {
        self.malformed + self.invalid
    }
}

pub fn load_corpus(path: &Path) -> Result<(Corpus, LoadStats)> {
    let text = crate::io::read_to_string(path)?;
    parse_jsonl(&text)
}

/// Parses JSONL tweets. Blank lines are ignored. More than half of the
/// non-blank lines being unusable is a format error.
pub fn parse_jsonl(text: &str) -> Result<(Corpus, LoadStats)> {
    let mut stats = LoadStats::default();
    let mut tweets = Vec::new();
    let mut ids = HashSet::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        stats.lines += 1;
        let tweet: Tweet = match serde_json::from_str(line) {
            Ok(t) => t,
            Err(e) => {
                log::debug!("malformed line {}: {e}", stats.lines);
                stats.malformed += 1;
                continue;
            }
        };
        if let Err(why) = tweet.validate() {
            log::debug!("invalid record: {why}");
            stats.invalid += 1;
            continue;
        }
        if !ids.insert(tweet.tweet_id.clone()) {
            log::debug!("duplicate tweet_id {}", tweet.tweet_id);
            stats.invalid += 1;
            continue;
        }
        tweets.push(tweet);
    }
    if stats.skipped() * 2 > stats.lines {
        return Err(Error::Format(format!(
            "{} of {} lines unusable ({} malformed, {} invalid)",
            stats.skipped(),
            stats.lines,
            stats.malformed,
            stats.invalid
        )));
    }
    if stats.skipped() > 0 {
        log::warn!(
            "skipped {} records ({} malformed, {} invalid)",
            stats.skipped(),
            stats.malformed,
            stats.invalid
        );
    }
    stats.loaded = tweets.len();
    Ok((Corpus::from_valid(tweets), stats))
}

/// A named target with its matching keywords.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicSpec {
    pub name: String,
    pub keywords: BTreeSet<String>,
}

impl TopicSpec {
    pub fn new<I, S>(name: impl Into<String>, keywords: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let t = TopicSpec {
            name: name.into(),
            keywords: keywords.into_iter().map(Into::into).collect(),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        if self.keywords.is_empty() {
            return Err(Error::Precondition(format!(
                "topic `{}` has no keywords",
                self.name
            )));
        }
        if let Some(k) = self
            .keywords
            .iter()
            .find(|k| k.is_empty() || k.to_lowercase() != **k)
        {
            return Err(Error::Precondition(format!(
                "topic `{}`: keyword `{k}` must be nonempty and lowercase",
                self.name
            )));
        }
        Ok(())
    }

    pub fn matches(&self, text: &str) -> bool {
        let lowered = text.to_lowercase();
        self.keywords.iter().any(|k| lowered.contains(k.as_str()))
    }
}

/// Keeps tweets whose lowercased raw text contains any topic keyword.
pub fn filter_topic(corpus: &Corpus, topic: &TopicSpec) -> Result<Corpus> {
    topic.validate()?;
    let kept = corpus
        .tweets
        .iter()
        .filter(|t| topic.matches(&t.text))
        .cloned()
        .collect();
    Ok(Corpus::from_valid(kept))
}

/// Text rewrite applied after the built-in normalization rules.
pub type Normalizer = Arc<dyn Fn(&str) -> String + Send + Sync>;

#[derive(Clone)]
pub struct PreprocessConfig {
    pub lowercase: bool,
    pub strip_links_mentions: bool,
    pub strip_nonletters: bool,
    pub number_token: String,
    pub normalizer: Option<Normalizer>,
}

impl Default for PreprocessConfig {
    fn default() -> Self {
        PreprocessConfig {
            lowercase: true,
            strip_links_mentions: true,
            strip_nonletters: true,
            number_token: "number".to_string(),
            normalizer: None,
        }
    }
}

impl fmt::Debug for PreprocessConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PreprocessConfig")
            .field("lowercase", &self.lowercase)
            .field("strip_links_mentions", &self.strip_links_mentions)
            .field("strip_nonletters", &self.strip_nonletters)
            .field("number_token", &self.number_token)
            .field("normalizer", &self.normalizer.as_ref().map(|_| "<fn>"))
            .finish()
    }
}

fn is_link_or_mention(word: &str) -> bool {
    let w = word.to_lowercase();
    w.starts_with('@')
        || w.starts_with("http://")
        || w.starts_with("https://")
        || w.starts_with("www.")
}

/// Normalizes a tweet and splits it into tokens.
///
/// Rules run in order: lowercase, drop links and @-mentions, replace every
/// character that is neither a letter nor a decimal digit by a space, replace
/// each maximal digit run by `number_token`, apply the normalizer hook, split
/// on whitespace.
pub fn preprocess(text: &str, cfg: &PreprocessConfig) -> Vec<String> {
    let mut s = if cfg.lowercase {
        text.to_lowercase()
    } else {
        text.to_string()
    };
    if cfg.strip_links_mentions {
        s = s
            .split_whitespace()
            .filter(|w| !is_link_or_mention(w))
            .collect::<Vec<_>>()
            .join(" ");
    }
    if cfg.strip_nonletters {
        s = s
            .chars()
            .map(|c| {
                if c.is_alphabetic() || c.is_numeric() {
                    c
                } else {
                    ' '
                }
            })
            .collect();
    }
    s = replace_digit_runs(&s, &cfg.number_token);
    if let Some(norm) = &cfg.normalizer {
        s = norm(&s);
    }
    s.split_whitespace().map(str::to_string).collect()
}

fn replace_digit_runs(s: &str, token: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut in_run = false;
    for c in s.chars() {
        if c.is_numeric() {
            if !in_run {
                out.push(' ');
                out.push_str(token);
                out.push(' ');
                in_run = true;
            }
        } else {
            out.push(c);
            in_run = false;
        }
    }
    out
}
