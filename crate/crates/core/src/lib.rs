//! Unsupervised, target-specific stance detection for tweet corpora.
//!
//! Users are represented by the mean embedding of their on-topic tweets,
//! projected to the plane, and clustered by density. Around that core the
//! crate provides retweet label propagation, evaluation metrics (P/R/F1,
//! Jaccard overlap, adjusted mutual information), Random Walk Controversy,
//! per-cluster prominent vocabulary and a synthetic corpus generator.

pub mod cluster;
pub mod corpus;
pub mod embed;
pub mod error;
pub mod eval;
pub mod io;
pub mod labelprop;
pub mod lexicon;
pub mod pipeline;
pub mod plot;
pub mod polarize;
pub mod project;
pub mod seed;
pub mod synth;

pub use error::{Error, Result};
