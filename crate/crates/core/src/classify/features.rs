//! Per-category feature vectors: a dense graph embedding followed by hashed
//! character n-grams of the title.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::embed::NodeEmbeddings;
use crate::error::{Error, Result};
use crate::graph::CategoryId;
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TextFeatureConfig {
    pub buckets_log2: u32,
    pub ngram_min: usize,
    pub ngram_max: usize,
}

impl Default for TextFeatureConfig {
    fn default() -> Self {
        TextFeatureConfig { buckets_log2: 16, ngram_min: 3, ngram_max: 5 }
    }
}

impl TextFeatureConfig {
    pub fn buckets(&self) -> usize {
        1usize << self.buckets_log2
    }

    pub fn validate(&self) -> Result<()> {
        if self.buckets_log2 == 0 || self.buckets_log2 > 24 || self.ngram_min == 0 || self.ngram_min > self.ngram_max {
            return Err(Error::Config(alloc::format!("invalid text feature config {self:?}")));
        }
        Ok(())
    }
}

/// Sparse vector with strictly increasing indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseVector {
    pub dimension: usize,
    pub entries: Vec<(u32, f64)>,
}

impl SparseVector {
    pub fn norm(&self) -> f64 {
        math::sqrt(self.entries.iter().map(|(_, v)| v * v).sum())
    }
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Character n-grams of ` title ` (padded with spaces) hashed into buckets,
/// counted, then L2-normalized.
pub fn text_features(title: &str, cfg: &TextFeatureConfig) -> SparseVector {
    let mut padded: Vec<char> = Vec::with_capacity(title.len() + 2);
    padded.push(' ');
    padded.extend(title.chars());
    padded.push(' ');
    let mask = (cfg.buckets() - 1) as u64;
    let mut counts: BTreeMap<u32, f64> = BTreeMap::new();
    let mut buf = alloc::string::String::new();
    for n in cfg.ngram_min..=cfg.ngram_max {
        for gram in padded.windows(n) {
            buf.clear();
            buf.extend(gram);
            *counts.entry((fnv1a(buf.as_bytes()) & mask) as u32).or_insert(0.0) += 1.0;
        }
    }
    let norm = math::sqrt(counts.values().map(|v| v * v).sum());
    let entries = counts.into_iter().map(|(i, v)| (i, v / norm)).collect();
    SparseVector { dimension: cfg.buckets(), entries }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub graph: Vec<f64>,
    pub text: SparseVector,
}

impl FeatureVector {
    pub fn dimension(&self) -> usize {
        self.graph.len() + self.text.dimension
    }

    /// Non-zero inputs as `(index, value)`, graph part first.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        let offset = self.graph.len();
        self.graph
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .chain(self.text.entries.iter().map(move |&(i, v)| (offset + i as usize, v)))
    }
}

/// Builds feature vectors from trained embeddings. Categories without an
/// embedding get a zero graph part.
#[derive(Debug, Clone)]
pub struct FeatureExtractor<'a> {
    embeddings: &'a NodeEmbeddings,
    text: TextFeatureConfig,
}

impl<'a> FeatureExtractor<'a> {
    pub fn new(embeddings: &'a NodeEmbeddings, text: TextFeatureConfig) -> Result<Self> {
        text.validate()?;
        Ok(FeatureExtractor { embeddings, text })
    }

    /// The graph part is the node embedding scaled to unit length, matching
    /// the text part, so neither block dominates by magnitude alone.
    pub fn features(&self, id: CategoryId, title: &str) -> FeatureVector {
        let graph = match self.embeddings.get(id) {
            Some(v) => {
                let norm = math::sqrt(v.iter().map(|x| x * x).sum());
                if norm > 0.0 {
                    v.iter().map(|x| x / norm).collect()
                } else {
                    v.to_vec()
                }
            }
            None => alloc::vec![0.0; self.embeddings.dimension],
        };
        FeatureVector { graph, text: text_features(title, &self.text) }
    }

    pub fn dimension(&self) -> usize {
        self.embeddings.dimension + self.text.buckets()
    }

    /// Stable identifier of the feature layout, stored alongside models.
    pub fn fingerprint(&self) -> u64 {
        feature_fingerprint(self.embeddings.dimension, &self.text)
    }
}

pub fn feature_fingerprint(graph_dimension: usize, text: &TextFeatureConfig) -> u64 {
    let mut bytes = Vec::new();
    for v in [graph_dimension as u64, u64::from(text.buckets_log2), text.ngram_min as u64, text.ngram_max as u64] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fnv1a(&bytes)
}
