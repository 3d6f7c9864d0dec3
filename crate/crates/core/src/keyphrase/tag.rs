use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::keyphrase::lemma::lemma_key;
use crate::keyphrase::lexicon::CompiledLexicon;
use crate::title::Title;
use crate::vocab::Vocabulary;

/// Lemma key → categories the term belongs to. A category title maps to
/// itself, a page to the categories it links to.
#[derive(Debug, Clone, Default)]
pub struct TermIndex {
    categories: BTreeMap<String, BTreeSet<Title>>,
}

impl TermIndex {
    pub fn new(vocab: &Vocabulary) -> Self {
        let mut categories: BTreeMap<String, BTreeSet<Title>> = BTreeMap::new();
        for c in &vocab.categories {
            categories.entry(lemma_key(c.title.as_str())).or_default().insert(c.title.clone());
        }
        for p in &vocab.pages {
            categories.entry(lemma_key(p.title.as_str())).or_default().extend(p.categories.iter().cloned());
        }
        categories.remove("");
        TermIndex { categories }
    }

    pub fn categories_of(&self, key: &str) -> Option<&BTreeSet<Title>> {
        self.categories.get(key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagMatch {
    pub term: String,
    pub start: usize,
    pub end: usize,
    pub categories: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CategoryCount {
    pub category: String,
    pub count: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tagging {
    pub matches: Vec<TagMatch>,
    pub category_counts: Vec<CategoryCount>,
}

/// Tags `text` with vocabulary terms and counts, per category, the distinct
/// matched terms linked to it. Counts sort descending, ties alphabetically.
pub fn tag_abstract(index: &TermIndex, lexicon: &CompiledLexicon, text: &str) -> Tagging {
    let extraction = lexicon.extract(text);
    let mut matches = Vec::new();
    let mut counts: BTreeMap<&Title, usize> = BTreeMap::new();
    for (pattern, spans) in &extraction.matches {
        let key = lexicon.key(*pattern);
        let Some(cats) = index.categories_of(key) else { continue };
        for c in cats {
            *counts.entry(c).or_default() += 1;
        }
        let term = lexicon.sources(*pattern).first().cloned().unwrap_or_default();
        let categories: Vec<String> = cats.iter().map(|c| c.as_str().into()).collect();
        for span in spans {
            matches.push(TagMatch {
                term: term.clone(),
                start: span.start,
                end: span.end,
                categories: categories.clone(),
            });
        }
    }
    matches.sort_by(|a, b| (a.start, a.end, &a.term).cmp(&(b.start, b.end, &b.term)));
    let mut category_counts: Vec<CategoryCount> =
        counts.into_iter().map(|(c, count)| CategoryCount { category: c.as_str().into(), count }).collect();
    category_counts.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.category.cmp(&b.category)));
    Tagging { matches, category_counts }
}
