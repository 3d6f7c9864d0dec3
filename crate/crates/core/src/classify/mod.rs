//! Relevance classifier: node embeddings plus title n-grams feeding a small
//! perceptron, trained on reference-matched positives and annotated negatives.

mod embed;
mod features;
mod mlp;

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use embed::{random_walks, train_node_embeddings, EmbeddingConfig, NodeEmbeddings, WalkGraph};
pub use features::{
    feature_fingerprint, text_features, FeatureExtractor, FeatureVector, SparseVector, TextFeatureConfig,
};
pub use mlp::{cross_validate, fit, predict, stratified_folds, train_mlp, Gradient, MlpConfig, MlpModel, Prediction};

use crate::error::{Error, Result};
use crate::graph::{CategoryGraph, CategoryId, PruneMode, StageTag, Subtree};
use crate::keyphrase::lemma_key;
use crate::prune::{reference_union, remove_and_tag, AnnotationSet, ReferenceTermList, Relevance, StageReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Negative,
    Positive,
}

impl Label {
    /// Output unit of the classifier: 1 for positive.
    pub fn index(self) -> usize {
        match self {
            Label::Negative => 0,
            Label::Positive => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledEntry {
    pub id: CategoryId,
    pub features: FeatureVector,
    pub label: Label,
}

/// Training examples with distinct ids and a common feature layout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LabeledSet {
    entries: Vec<LabeledEntry>,
}

impl LabeledSet {
    pub fn new(entries: Vec<LabeledEntry>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for e in &entries {
            if !seen.insert(e.id) {
                return Err(Error::TrainingSet(alloc::format!("duplicate category id {}", e.id)));
            }
        }
        if let Some(first) = entries.first() {
            let expected = first.features.dimension();
            for e in &entries {
                if e.features.graph.len() != first.features.graph.len()
                    || e.features.text.dimension != first.features.text.dimension
                {
                    return Err(Error::DimensionMismatch { expected, actual: e.features.dimension() });
                }
            }
        }
        Ok(LabeledSet { entries })
    }

    pub fn entries(&self) -> &[LabeledEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// `(positives, negatives)`.
    pub fn class_counts(&self) -> (usize, usize) {
        let pos = self.entries.iter().filter(|e| e.label == Label::Positive).count();
        (pos, self.entries.len() - pos)
    }

    pub(crate) fn subset(&self, keep: impl Fn(usize) -> bool) -> LabeledSet {
        let entries = self.entries.iter().enumerate().filter(|(i, _)| keep(*i)).map(|(_, e)| e.clone()).collect();
        LabeledSet { entries }
    }
}

/// How far below an annotated-irrelevant category the negative pool reaches.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeDepth {
    #[default]
    Children,
    Descendants,
}

/// Ids chosen for training, each list sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingSelection {
    pub positives: Vec<CategoryId>,
    pub negatives: Vec<CategoryId>,
    pub pool_size: usize,
}

/// Positives are members of `current` whose lemmatized title is a reference
/// term. Negatives are sampled, as many as there are positives, from the
/// categories annotated irrelevant in `origin` (usually the raw extraction)
/// together with their children or descendants in `origin`.
pub fn assemble_training_set(
    current: &Subtree,
    origin: &Subtree,
    graph: &CategoryGraph,
    refs: &[ReferenceTermList],
    annotations: &AnnotationSet,
    depth: NegativeDepth,
    seed: u64,
) -> Result<TrainingSelection> {
    let union = reference_union(refs);
    if union.is_empty() {
        return Err(Error::EmptyReferences);
    }
    let positives: Vec<CategoryId> =
        current.members().filter(|&id| union.contains(&lemma_key(graph.category_title(id).as_str()))).collect();
    if positives.is_empty() {
        return Err(Error::TrainingSet("no member matches a reference term".into()));
    }
    let positive_set: BTreeSet<CategoryId> = positives.iter().copied().collect();
    let mut pool = BTreeSet::new();
    let mut frontier: Vec<CategoryId> = annotations
        .with_label(Relevance::Irrelevant)
        .filter_map(|t| graph.category_id(t))
        .filter(|&id| origin.contains(id))
        .collect();
    pool.extend(frontier.iter().copied());
    loop {
        let mut next = Vec::new();
        for &id in &frontier {
            for &child in graph.children(id) {
                if origin.contains(child) && pool.insert(child) {
                    next.push(child);
                }
            }
        }
        if depth == NegativeDepth::Children || next.is_empty() {
            break;
        }
        frontier = next;
    }
    let pool: Vec<CategoryId> = pool.into_iter().filter(|id| !positive_set.contains(id)).collect();
    if pool.len() < positives.len() {
        return Err(Error::TrainingSet(alloc::format!(
            "negative pool has {} categories, need {}",
            pool.len(),
            positives.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut negatives: Vec<CategoryId> =
        rand::seq::index::sample(&mut rng, pool.len(), positives.len()).into_iter().map(|i| pool[i]).collect();
    negatives.sort_unstable();
    Ok(TrainingSelection { positives, negatives, pool_size: pool.len() })
}

/// Removes members for which `is_negative` holds. Seeds are kept regardless;
/// the count of seeds predicted negative is reported as `seeds_kept`.
pub fn filter_by_predictions(
    subtree: &Subtree,
    graph: &CategoryGraph,
    mode: PruneMode,
    mut is_negative: impl FnMut(CategoryId) -> Result<bool>,
) -> Result<(Subtree, StageReport)> {
    let mut removed = BTreeSet::new();
    let mut seeds_kept = 0usize;
    for id in subtree.members() {
        if is_negative(id)? {
            if subtree.seeds().contains(&id) {
                seeds_kept += 1;
            } else {
                removed.insert(id);
            }
        }
    }
    let (pruned, counts) = remove_and_tag(subtree, graph, &removed, mode, StageTag::Classifier, |_| true)?;
    let mut report = StageReport::new("filter-classifier", counts);
    report.metrics.insert("seeds_kept".into(), seeds_kept as f64);
    Ok((pruned, report))
}

/// Classifies every member and prunes those below `threshold`, removing their
/// direct member children as well.
pub fn filter_by_classifier(
    subtree: &Subtree,
    graph: &CategoryGraph,
    model: &MlpModel,
    extractor: &FeatureExtractor<'_>,
    threshold: f64,
) -> Result<(Subtree, StageReport)> {
    if extractor.fingerprint() != model.feature_fingerprint {
        return Err(Error::Config("model was trained on a different feature layout".into()));
    }
    filter_by_predictions(subtree, graph, PruneMode::StrictChildren, |id| {
        let x = extractor.features(id, graph.category_title(id).as_str());
        Ok(predict(model, &x, threshold)?.label == Label::Negative)
    })
}
