use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keyphrase::lemma::lemma_key;
use crate::keyphrase::lexicon::CompiledLexicon;
use crate::math;
use crate::prune::{AnnotationSet, Relevance};
use crate::title::Title;

/// An abstract with its annotated keyphrases.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    #[serde(rename = "abstract")]
    pub text: String,
    pub keyphrases: Vec<String>,
}

impl Document {
    /// Distinct non-empty lemma keys of the gold phrases.
    pub fn gold_keys(&self) -> BTreeSet<String> {
        self.keyphrases.iter().map(|k| lemma_key(k)).filter(|k| !k.is_empty()).collect()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    pub fn new(documents: Vec<Document>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for d in &documents {
            if !seen.insert(d.id.as_str()) {
                return Err(Error::DocumentMismatch(alloc::format!("duplicate document id {}", d.id)));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }
}

/// Per-abstract counts. `precision` is 0 when nothing was extracted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocumentScore {
    pub id: String,
    pub extracted: usize,
    pub matched: usize,
    pub annotated: usize,
    pub precision: f64,
}

impl DocumentScore {
    pub fn new(id: impl Into<String>, extracted: usize, matched: usize, annotated: usize) -> Self {
        let precision = if extracted == 0 { 0.0 } else { matched as f64 / extracted as f64 };
        DocumentScore { id: id.into(), extracted, matched, annotated, precision }
    }
}

/// One step of the empirical CDF of per-abstract precision.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EcdfPoint {
    pub precision: f64,
    pub cumulative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub extracted: usize,
    pub matched: usize,
    pub annotated: usize,
    pub precision_mean: f64,
    pub precision_stddev: f64,
    pub documents: Vec<DocumentScore>,
    pub ecdf: Vec<EcdfPoint>,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

impl EvalReport {
    /// Aggregates per-document rows in the order given.
    pub fn from_scores(documents: Vec<DocumentScore>) -> Self {
        let extracted = documents.iter().map(|d| d.extracted).sum();
        let matched = documents.iter().map(|d| d.matched).sum();
        let annotated = documents.iter().map(|d| d.annotated).sum();
        let precision = ratio(matched, extracted);
        let recall = ratio(matched, annotated);

        // Welford
        let (mut mean, mut m2) = (0.0f64, 0.0f64);
        for (i, d) in documents.iter().enumerate() {
            let delta = d.precision - mean;
            mean += delta / (i + 1) as f64;
            m2 += delta * (d.precision - mean);
        }
        let stddev = if documents.is_empty() { 0.0 } else { math::sqrt(m2 / documents.len() as f64) };

        let mut sorted: Vec<f64> = documents.iter().map(|d| d.precision).collect();
        sorted.sort_by(f64::total_cmp);
        let n = sorted.len();
        let mut ecdf = Vec::new();
        for (i, &p) in sorted.iter().enumerate() {
            if i + 1 == n || sorted[i + 1] != p {
                ecdf.push(EcdfPoint { precision: p, cumulative: (i + 1) as f64 / n as f64 });
            }
        }

        EvalReport {
            precision,
            recall,
            f1: f1_score(precision, recall),
            extracted,
            matched,
            annotated,
            precision_mean: mean,
            precision_stddev: stddev,
            documents,
            ecdf,
        }
    }
}

/// Scores one abstract: distinct extracted patterns against distinct gold lemma keys.
pub fn score_document(lexicon: &CompiledLexicon, doc: &Document) -> DocumentScore {
    let gold = doc.gold_keys();
    let extraction = lexicon.extract(&doc.text);
    let matched = extraction.pattern_ids().filter(|&p| gold.contains(lexicon.key(p))).count();
    DocumentScore::new(doc.id.clone(), extraction.len(), matched, gold.len())
}

pub fn evaluate(corpus: &Corpus, lexicon: &CompiledLexicon) -> EvalReport {
    EvalReport::from_scores(corpus.documents().iter().map(|d| score_document(lexicon, d)).collect())
}

/// Per-abstract precision comparison of `a` against `b`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Comparison {
    pub better: usize,
    pub worse: usize,
    pub equal: usize,
}

pub fn compare_reports(a: &EvalReport, b: &EvalReport) -> Result<Comparison> {
    let theirs: BTreeMap<&str, f64> = b.documents.iter().map(|d| (d.id.as_str(), d.precision)).collect();
    if theirs.len() != a.documents.len() {
        return Err(Error::DocumentMismatch(alloc::format!(
            "{} documents vs {}",
            a.documents.len(),
            b.documents.len()
        )));
    }
    let mut out = Comparison::default();
    for d in &a.documents {
        let other = *theirs.get(d.id.as_str()).ok_or_else(|| Error::DocumentMismatch(d.id.clone()))?;
        match d.precision.total_cmp(&other) {
            core::cmp::Ordering::Greater => out.better += 1,
            core::cmp::Ordering::Less => out.worse += 1,
            core::cmp::Ordering::Equal => out.equal += 1,
        }
    }
    Ok(out)
}

/// How much of the annotated gold phrase mass a vocabulary covers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub unique_matched: usize,
    pub total_matched: usize,
    pub corpus_unique: usize,
    pub corpus_total: usize,
    pub unique_fraction: f64,
    pub total_fraction: f64,
    /// `total_matched / unique_matched`, absent when nothing matched.
    pub total_to_unique: Option<f64>,
}

/// Gold phrases are counted per occurrence across all documents' lists.
/// `vocab_terms` must hold lemma keys.
pub fn coverage(corpus: &Corpus, vocab_terms: &BTreeSet<String>) -> CoverageReport {
    let mut occurrences: BTreeMap<String, usize> = BTreeMap::new();
    for doc in corpus.documents() {
        for phrase in &doc.keyphrases {
            let key = lemma_key(phrase);
            if !key.is_empty() {
                *occurrences.entry(key).or_default() += 1;
            }
        }
    }
    let corpus_unique = occurrences.len();
    let corpus_total: usize = occurrences.values().sum();
    let (mut unique_matched, mut total_matched) = (0, 0);
    for (key, count) in &occurrences {
        if vocab_terms.contains(key) {
            unique_matched += 1;
            total_matched += count;
        }
    }
    CoverageReport {
        unique_matched,
        total_matched,
        corpus_unique,
        corpus_total,
        unique_fraction: ratio(unique_matched, corpus_unique),
        total_fraction: ratio(total_matched, corpus_total),
        total_to_unique: (unique_matched > 0).then(|| total_matched as f64 / unique_matched as f64),
    }
}

/// A sampled category with its level and human relevance label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SampleItem {
    pub title: Title,
    pub level: u32,
    pub relevance: Relevance,
}

/// Joins an annotation set with levels; titles without a level are dropped.
pub fn sample_with_levels(annotations: &AnnotationSet, levels: &BTreeMap<Title, u32>) -> Vec<SampleItem> {
    annotations
        .iter()
        .filter_map(|(t, r)| levels.get(t).map(|&level| SampleItem { title: t.clone(), level, relevance: r }))
        .collect()
}

/// Precision and recall of one category set at one level. `None` means the
/// sample gives an empty denominator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub level: u32,
    pub variant: String,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
}

pub fn evaluate_category_sample(
    sample: &[SampleItem],
    variants: &[(String, BTreeSet<Title>)],
    levels: &[u32],
) -> Vec<SampleRow> {
    let mut rows = Vec::new();
    for &level in levels {
        let at_level: Vec<&SampleItem> = sample.iter().filter(|s| s.level == level).collect();
        let relevant = at_level.iter().filter(|s| s.relevance == Relevance::Relevant).count();
        for (name, set) in variants {
            let kept: Vec<&&SampleItem> = at_level.iter().filter(|s| set.contains(&s.title)).collect();
            let hits = kept.iter().filter(|s| s.relevance == Relevance::Relevant).count();
            rows.push(SampleRow {
                level,
                variant: name.clone(),
                precision: (!kept.is_empty()).then(|| hits as f64 / kept.len() as f64),
                recall: (relevant > 0).then(|| hits as f64 / relevant as f64),
            });
        }
    }
    rows
}
