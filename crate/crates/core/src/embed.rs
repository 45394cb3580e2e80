//! Tweet vectors (loaded or hashed) and per-user mean vectors.
//!
//! Binary layout (`.stlv`): magic `STLV`, little-endian `u32` dimension, then
//! records of `u16` id length, id bytes (UTF-8), `dim` little-endian `f32`.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{preprocess, Corpus, PreprocessConfig};
use crate::error::{Error, Result};

pub const DEFAULT_DIM: usize = 512;
pub const MAGIC: &[u8; 4] = b"STLV";

pub type TweetVectors = HashMap<String, Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserVector {
    pub user_id: String,
    pub n_tweets: usize,
    pub vec: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct HashEmbedderParams {
    pub dim: usize,
    pub ngram_range: (usize, usize),
    pub salt: u64,
}

impl Default for HashEmbedderParams {
    fn default() -> Self {
        HashEmbedderParams {
            dim: DEFAULT_DIM,
            ngram_range: (3, 5),
            salt: 0,
        }
    }
}

impl HashEmbedderParams {
    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.ngram_range;
        if lo < 1 || lo > hi {
            return Err(Error::Precondition(format!(
                "ngram range [{lo},{hi}] must satisfy 1 <= min <= max"
            )));
        }
        if self.dim < 2 {
            return Err(Error::Precondition("hash dimension must be >= 2".into()));
        }
        Ok(())
    }
}

fn hash_ngram(chars: &[char], salt: u64) -> u64 {
    let mut h = crate::seed::splitmix64(salt);
    let mut buf = [0u8; 4];
    for c in chars {
        for &b in c.encode_utf8(&mut buf).as_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x0000_0100_0000_01b3);
        }
    }
    crate::seed::splitmix64(h)
}

/// Signed feature hashing of boundary-padded character n-grams, L2-normalized.
///
/// Each token is wrapped as `<token>`; every n-gram in `ngram_range` adds ±1
/// at a hashed coordinate. Returns the zero vector when nothing was hashed or
/// the signed sum cancels.
pub fn hash_embed(tokens: &[String], params: &HashEmbedderParams) -> Vec<f64> {
    let mut v = vec![0.0; params.dim];
    let (lo, hi) = params.ngram_range;
    for tok in tokens {
        let padded: Vec<char> = std::iter::once('<')
            .chain(tok.chars())
            .chain(std::iter::once('>'))
            .collect();
        for n in lo..=hi {
            if n > padded.len() {
                break;
            }
            for w in padded.windows(n) {
                let h = hash_ngram(w, params.salt);
                let idx = (h % params.dim as u64) as usize;
                let sign = if h >> 63 == 0 { 1.0 } else { -1.0 };
                v[idx] += sign;
            }
        }
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

/// How to obtain vectors for tweets that are missing from a loaded table.
#[derive(Debug, Clone)]
pub struct HashFallback {
    pub preprocess: PreprocessConfig,
    pub params: HashEmbedderParams,
}

/// Mean vector per user over the (topic-filtered) corpus, in user order.
pub fn user_vectors(
    corpus: &Corpus,
    tweet_vecs: &TweetVectors,
    fallback: Option<&HashFallback>,
) -> Result<Vec<UserVector>> {
    let mut out = Vec::with_capacity(corpus.users().len());
    let mut dim: Option<usize> = None;
    for user in corpus.users() {
        let mut sum: Vec<f64> = Vec::new();
        let mut n = 0usize;
        for t in corpus.tweets_of(user) {
            let hashed;
            let v: &[f64] = match tweet_vecs.get(&t.tweet_id) {
                Some(v) => v,
                None => match fallback {
                    Some(fb) => {
                        hashed = hash_embed(&preprocess(&t.text, &fb.preprocess), &fb.params);
                        &hashed
                    }
                    None => {
                        return Err(Error::Data(format!(
                            "no vector for tweet {} and no embedder configured",
                            t.tweet_id
                        )))
                    }
                },
            };
            match dim {
                None => dim = Some(v.len()),
                Some(d) if d != v.len() => {
                    return Err(Error::Data(format!(
                        "tweet {} has dimension {}, expected {d}",
                        t.tweet_id,
                        v.len()
                    )))
                }
                _ => {}
            }
            if sum.is_empty() {
                sum = vec![0.0; v.len()];
            }
            sum.iter_mut().zip(v).for_each(|(s, x)| *s += x);
            n += 1;
        }
        if n == 0 {
            continue;
        }
        let inv = n as f64;
        out.push(UserVector {
            user_id: user.clone(),
            n_tweets: n,
            vec: sum.into_iter().map(|s| s / inv).collect(),
        });
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// file formats

#[derive(Deserialize)]
struct VecRecord {
    tweet_id: String,
    vec: Vec<f64>,
}

/// Loads tweet vectors from the binary format or JSONL `{tweet_id, vec}`.
///
/// Every record must have exactly `dim` finite components; duplicate ids are rejected.
pub fn load_embeddings(path: &Path, dim: usize) -> Result<TweetVectors> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(MAGIC) {
        decode_binary(&bytes, dim)
    } else {
        let text = String::from_utf8(bytes)
            .map_err(|_| Error::Format(format!("{}: not UTF-8 JSONL", path.display())))?;
        decode_jsonl(&text, dim)
    }
}

fn insert_checked(map: &mut TweetVectors, id: String, v: Vec<f64>, dim: usize) -> Result<()> {
    if v.len() != dim {
        return Err(Error::Format(format!(
            "vector for {id} has {} components, expected {dim}",
            v.len()
        )));
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::Format(format!("vector for {id} is not finite")));
    }
    if map.contains_key(&id) {
        return Err(Error::Format(format!("duplicate tweet_id {id}")));
    }
    map.insert(id, v);
    Ok(())
}

pub fn decode_jsonl(text: &str, dim: usize) -> Result<TweetVectors> {
    let mut map = TweetVectors::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: VecRecord = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("line {}: {e}", i + 1)))?;
        insert_checked(&mut map, rec.tweet_id, rec.vec, dim)?;
    }
    Ok(map)
}

pub fn decode_binary(bytes: &[u8], dim: usize) -> Result<TweetVectors> {
    let truncated = || Error::Format("truncated binary embedding file".into());
    if bytes.len() < 8 || &bytes[..4] != MAGIC {
        return Err(Error::Format("missing STLV header".into()));
    }
    let file_dim = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if file_dim != dim {
        return Err(Error::Format(format!(
            "file dimension {file_dim}, expected {dim}"
        )));
    }
    let mut map = TweetVectors::new();
    let mut pos = 8;
    while pos < bytes.len() {
        let len_bytes = bytes.get(pos..pos + 2).ok_or_else(truncated)?;
        let id_len = u16::from_le_bytes(len_bytes.try_into().unwrap()) as usize;
        pos += 2;
        let id = bytes.get(pos..pos + id_len).ok_or_else(truncated)?;
        let id = std::str::from_utf8(id)
            .map_err(|_| Error::Format("record id is not UTF-8".into()))?
            .to_string();
        pos += id_len;
        let body = bytes.get(pos..pos + 4 * dim).ok_or_else(truncated)?;
        let v = body
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_le_bytes(c.try_into().unwrap())))
            .collect();
        pos += 4 * dim;
        insert_checked(&mut map, id, v, dim)?;
    }
    Ok(map)
}

/// Encodes `(id, vector)` records in the binary format; components are stored as `f32`.
pub fn encode_binary<'a, I>(dim: usize, records: I) -> Result<Vec<u8>>
where
    I: IntoIterator<Item = (&'a str, &'a [f64])>,
{
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(dim as u32).to_le_bytes());
    for (id, v) in records {
        if v.len() != dim {
            return Err(Error::Data(format!("vector for {id} has wrong dimension")));
        }
        let len: u16 = id
            .len()
            .try_into()
            .map_err(|_| Error::Data(format!("id too long: {id}")))?;
        out.extend_from_slice(&len.to_le_bytes());
        out.extend_from_slice(id.as_bytes());
        for &x in v {
            out.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    Ok(out)
}

/// User vectors as JSONL `{user_id, n_tweets, vec}`, one per line.
pub fn user_vectors_jsonl(users: &[UserVector]) -> String {
    let mut s = String::new();
    for u in users {
        s.push_str(&serde_json::to_string(u).expect("user vector serializes"));
        s.push('\n');
    }
    s
}

pub fn load_user_vectors(path: &Path) -> Result<Vec<UserVector>> {
    let text = crate::io::read_to_string(path)?;
    let mut out: Vec<UserVector> = Vec::new();
    let mut seen = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let u: UserVector = serde_json::from_str(line)
            .map_err(|e| Error::Format(format!("{} line {}: {e}", path.display(), i + 1)))?;
        if let Some(first) = out.first() {
            if first.vec.len() != u.vec.len() {
                return Err(Error::Format(format!("user {} has inconsistent dimension", u.user_id)));
            }
        }
        if u.n_tweets == 0 || u.vec.iter().any(|x| !x.is_finite()) {
            return Err(Error::Format(format!("user {} violates vector invariants", u.user_id)));
        }
        if seen.insert(u.user_id.clone(), ()).is_some() {
            return Err(Error::Format(format!("duplicate user {}", u.user_id)));
        }
        out.push(u);
    }
    Ok(out)
}
