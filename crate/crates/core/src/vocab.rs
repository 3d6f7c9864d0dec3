//! Final vocabulary assembly and cross-vocabulary statistics.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CategoryGraph, Subtree};
use crate::keyphrase::lemma_key;
use crate::prune::{reference_union, ReferenceTermList, StageReport};
use crate::title::Title;

pub const FORMAT_VERSION: u32 = 1;
pub const DEFAULT_CORE_MAX_LEVEL: u32 = 7;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabCategory {
    pub title: Title,
    pub level: u32,
    /// Parents that are themselves in the vocabulary, sorted.
    pub parents: Vec<Title>,
    pub core: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabPage {
    pub title: Title,
    /// `false` for redirect aliases.
    pub canonical: bool,
    pub categories: Vec<Title>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabMeta {
    pub format_version: u32,
    pub seeds: Vec<Title>,
    pub core_max_level: u32,
    #[serde(default)]
    pub stages: Vec<String>,
    #[serde(default)]
    pub counts: BTreeMap<String, usize>,
    #[serde(default)]
    pub config_hashes: BTreeMap<String, String>,
    #[serde(default)]
    pub rng_seeds: BTreeMap<String, u64>,
}

impl Default for VocabMeta {
    fn default() -> Self {
        VocabMeta {
            format_version: FORMAT_VERSION,
            seeds: Vec::new(),
            core_max_level: DEFAULT_CORE_MAX_LEVEL,
            stages: Vec::new(),
            counts: BTreeMap::new(),
            config_hashes: BTreeMap::new(),
            rng_seeds: BTreeMap::new(),
        }
    }
}

/// Categories sorted by `(level, title)` and pages sorted by title.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub categories: Vec<VocabCategory>,
    pub pages: Vec<VocabPage>,
    pub meta: VocabMeta,
}

impl Vocabulary {
    /// Sorts and checks referential integrity.
    pub fn new(mut categories: Vec<VocabCategory>, mut pages: Vec<VocabPage>, meta: VocabMeta) -> Result<Self> {
        categories.sort_by(|a, b| (a.level, &a.title).cmp(&(b.level, &b.title)));
        pages.sort_by(|a, b| a.title.cmp(&b.title));
        for c in categories.iter_mut() {
            c.parents.sort();
            c.parents.dedup();
        }
        for p in pages.iter_mut() {
            p.categories.sort();
            p.categories.dedup();
        }
        let v = Vocabulary { categories, pages, meta };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<()> {
        let mut titles = BTreeSet::new();
        for c in &self.categories {
            if !titles.insert(&c.title) {
                return Err(Error::Integrity(alloc::format!("duplicate category {}", c.title)));
            }
            if c.core != (c.level <= self.meta.core_max_level) {
                return Err(Error::Integrity(alloc::format!("core flag of {} disagrees with its level", c.title)));
            }
        }
        let seeds: BTreeSet<&Title> = self.meta.seeds.iter().collect();
        for c in &self.categories {
            if let Some(p) = c.parents.iter().find(|p| !titles.contains(p)) {
                return Err(Error::Integrity(alloc::format!("{} has parent {p} outside the vocabulary", c.title)));
            }
            if !seeds.contains(&c.title) && c.parents.is_empty() {
                return Err(Error::Integrity(alloc::format!("{} has no parent in the vocabulary", c.title)));
            }
        }
        let mut page_titles = BTreeSet::new();
        for p in &self.pages {
            if !page_titles.insert(&p.title) {
                return Err(Error::Integrity(alloc::format!("duplicate page {}", p.title)));
            }
            if p.categories.is_empty() {
                return Err(Error::Integrity(alloc::format!("page {} has no category", p.title)));
            }
            if let Some(c) = p.categories.iter().find(|c| !titles.contains(c)) {
                return Err(Error::Integrity(alloc::format!("page {} references missing category {c}", p.title)));
            }
        }
        Ok(())
    }

    pub fn category(&self, title: &Title) -> Option<&VocabCategory> {
        self.categories.iter().find(|c| &c.title == title)
    }

    fn core_titles(&self) -> BTreeSet<&Title> {
        self.categories.iter().filter(|c| c.core).map(|c| &c.title).collect()
    }

    /// A page is core iff it links to at least one core category.
    pub fn page_is_core(&self, page: &VocabPage) -> bool {
        let core = self.core_titles();
        page.categories.iter().any(|c| core.contains(c))
    }

    /// Lemma keys of every category and page title; `core` narrows to core
    /// (`Some(true)`) or ancillary (`Some(false)`) terms.
    pub fn term_keys(&self, core: Option<bool>) -> BTreeSet<String> {
        let core_set = self.core_titles();
        let cats = self.categories.iter().filter(|c| core.is_none_or(|want| c.core == want)).map(|c| &c.title);
        let pages = self
            .pages
            .iter()
            .filter(|p| core.is_none_or(|want| p.categories.iter().any(|c| core_set.contains(c)) == want))
            .map(|p| &p.title);
        cats.chain(pages).map(|t| lemma_key(t.as_str())).filter(|k| !k.is_empty()).collect()
    }

    /// Raw category and page titles, the input for compiling a lexicon.
    pub fn terms(&self) -> impl Iterator<Item = &str> {
        self.categories.iter().map(|c| c.title.as_str()).chain(self.pages.iter().map(|p| p.title.as_str()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct AttachConfig {
    pub max_redirect_chain: usize,
    pub core_max_level: u32,
}

impl Default for AttachConfig {
    fn default() -> Self {
        AttachConfig { max_redirect_chain: 5, core_max_level: DEFAULT_CORE_MAX_LEVEL }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttachReport {
    pub categories: usize,
    pub canonical_pages: usize,
    pub aliases: usize,
    pub aliases_dropped_long_chain: usize,
    pub aliases_shadowed: usize,
}

/// Builds the vocabulary from the surviving subtree: every page linked to a
/// member category, plus redirect aliases whose chain ends at one of them.
pub fn attach_pages(
    subtree: &Subtree,
    graph: &CategoryGraph,
    redirects: &[(Title, Title)],
    config: AttachConfig,
) -> Result<(Vocabulary, AttachReport)> {
    let mut categories = Vec::with_capacity(subtree.len());
    let mut page_cats: BTreeMap<Title, BTreeSet<Title>> = BTreeMap::new();
    for id in subtree.members() {
        let level = subtree.level(id).expect("member has a level");
        let title = graph.category_title(id).clone();
        let parents = graph
            .parents(id)
            .iter()
            .filter(|&&p| subtree.contains(p))
            .map(|&p| graph.category_title(p).clone())
            .collect();
        for &page in graph.pages_of(id) {
            page_cats.entry(graph.page_title(page).clone()).or_default().insert(title.clone());
        }
        categories.push(VocabCategory { title, level, parents, core: level <= config.core_max_level });
    }

    let mut report =
        AttachReport { categories: categories.len(), canonical_pages: page_cats.len(), ..Default::default() };
    let mut targets: BTreeMap<&Title, &Title> = BTreeMap::new();
    for (alias, target) in redirects {
        targets.entry(alias).or_insert(target);
    }
    let mut aliases: BTreeMap<Title, BTreeSet<Title>> = BTreeMap::new();
    for (&alias, &first) in &targets {
        let mut current = first;
        let mut hops = 1;
        while !page_cats.contains_key(current) && hops <= config.max_redirect_chain {
            match targets.get(current) {
                Some(&next) => {
                    current = next;
                    hops += 1;
                }
                None => break,
            }
        }
        if hops > config.max_redirect_chain {
            report.aliases_dropped_long_chain += 1;
            continue;
        }
        let Some(cats) = page_cats.get(current) else { continue };
        if page_cats.contains_key(alias) {
            report.aliases_shadowed += 1;
            continue;
        }
        aliases.insert(alias.clone(), cats.clone());
    }
    report.aliases = aliases.len();

    let pages = page_cats
        .into_iter()
        .map(|(title, cats)| VocabPage { title, canonical: true, categories: cats.into_iter().collect() })
        .chain(aliases.into_iter().map(|(title, cats)| VocabPage {
            title,
            canonical: false,
            categories: cats.into_iter().collect(),
        }))
        .collect();
    let seeds = subtree.seeds().iter().map(|&s| graph.category_title(s).clone()).collect();
    let meta = VocabMeta { seeds, core_max_level: config.core_max_level, ..Default::default() };
    let vocab = Vocabulary::new(categories, pages, meta)?;
    Ok((vocab, report))
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct CoreCounts {
    pub core_categories: usize,
    pub ancillary_categories: usize,
    pub core_pages: usize,
    pub ancillary_pages: usize,
    /// Core share of all terms (categories plus pages).
    pub core_fraction: f64,
}

pub fn split_core_ancillary(vocab: &Vocabulary, core_max_level: u32) -> (Vocabulary, CoreCounts) {
    let mut out = vocab.clone();
    out.meta.core_max_level = core_max_level;
    for c in out.categories.iter_mut() {
        c.core = c.level <= core_max_level;
    }
    let core_categories = out.categories.iter().filter(|c| c.core).count();
    let core_pages = out.pages.iter().filter(|p| out.page_is_core(p)).count();
    let total = out.categories.len() + out.pages.len();
    let counts = CoreCounts {
        core_categories,
        ancillary_categories: out.categories.len() - core_categories,
        core_pages,
        ancillary_pages: out.pages.len() - core_pages,
        core_fraction: if total == 0 { 0.0 } else { (core_categories + core_pages) as f64 / total as f64 },
    };
    (out, counts)
}

/// Drops single-token page terms unless a reference vocabulary covers them.
pub fn prune_unigrams(vocab: &Vocabulary, refs: &[ReferenceTermList]) -> (Vocabulary, usize) {
    let union = reference_union(refs);
    let mut out = vocab.clone();
    let before = out.pages.len();
    out.pages.retain(|p| p.title.token_count() > 1 || union.contains(&lemma_key(p.title.as_str())));
    let removed = before - out.pages.len();
    (out, removed)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VennRegion {
    /// Names of the sets sharing exactly this region.
    pub sets: Vec<String>,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VocabStats {
    pub names: Vec<String>,
    pub distinct: Vec<usize>,
    pub regions: Vec<VennRegion>,
    /// Mean token length of each set's exclusive terms.
    pub exclusive_mean_tokens: Vec<Option<f64>>,
}

/// Venn decomposition of 2 or 3 lemmatized term sets.
pub fn compare_vocabs(sets: &[(String, BTreeSet<String>)]) -> Result<VocabStats> {
    if !(2..=3).contains(&sets.len()) {
        return Err(Error::Config(alloc::format!("compare needs 2 or 3 vocabularies, got {}", sets.len())));
    }
    let k = sets.len();
    let mut membership: BTreeMap<&str, usize> = BTreeMap::new();
    for (i, (_, terms)) in sets.iter().enumerate() {
        for t in terms {
            *membership.entry(t.as_str()).or_default() |= 1 << i;
        }
    }
    let mut counts = alloc::vec![0usize; 1 << k];
    let mut token_sums = alloc::vec![0usize; 1 << k];
    for (term, &mask) in &membership {
        counts[mask] += 1;
        token_sums[mask] += term.split(' ').count();
    }
    let regions = (1..1usize << k)
        .map(|mask| VennRegion {
            sets: (0..k).filter(|i| mask & (1 << i) != 0).map(|i| sets[i].0.clone()).collect(),
            count: counts[mask],
        })
        .collect();
    let exclusive_mean_tokens = (0..k)
        .map(|i| {
            let mask = 1 << i;
            (counts[mask] > 0).then(|| token_sums[mask] as f64 / counts[mask] as f64)
        })
        .collect();
    Ok(VocabStats {
        names: sets.iter().map(|(n, _)| n.clone()).collect(),
        distinct: sets.iter().map(|(_, s)| s.len()).collect(),
        regions,
        exclusive_mean_tokens,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelCount {
    pub level: u32,
    pub categories: usize,
    pub pages: usize,
}

/// Categories and pages per level; a page sits at the shallowest level of
/// its categories.
pub fn level_histogram(vocab: &Vocabulary) -> Vec<LevelCount> {
    let level_of: BTreeMap<&Title, u32> = vocab.categories.iter().map(|c| (&c.title, c.level)).collect();
    let mut hist: BTreeMap<u32, (usize, usize)> = BTreeMap::new();
    for c in &vocab.categories {
        hist.entry(c.level).or_default().0 += 1;
    }
    for p in &vocab.pages {
        if let Some(level) = p.categories.iter().filter_map(|c| level_of.get(c)).min() {
            hist.entry(*level).or_default().1 += 1;
        }
    }
    hist.into_iter().map(|(level, (categories, pages))| LevelCount { level, categories, pages }).collect()
}

/// Stage history for vocabulary metadata.
pub fn stage_counts(reports: &[StageReport]) -> BTreeMap<String, usize> {
    reports.iter().map(|r| (r.stage.clone(), r.remaining)).collect()
}
