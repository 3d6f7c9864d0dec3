//! Non-learned pruning stages: manual annotations, community filtering
//! against reference vocabularies, and pattern rules.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{prune_unreachable, CategoryGraph, CategoryId, PruneCounts, PruneMode, StageTag, Subtree};
use crate::keyphrase::lemma_key;
use crate::title::Title;

mod louvain;
mod rules;

pub use louvain::{
    louvain, louvain_edges, modularity, modularity_with_resolution, CommunityAssignment, LouvainConfig, Partition,
};
pub use rules::{apply_rules, Rule, RuleKind, RuleSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relevance {
    Relevant,
    Irrelevant,
}

impl Relevance {
    pub fn as_str(self) -> &'static str {
        match self {
            Relevance::Relevant => "relevant",
            Relevance::Irrelevant => "irrelevant",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "relevant" => Some(Relevance::Relevant),
            "irrelevant" => Some(Relevance::Irrelevant),
            _ => None,
        }
    }
}

impl fmt::Display for Relevance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Human relevance labels keyed by normalized title.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AnnotationSet {
    labels: BTreeMap<Title, Relevance>,
}

impl AnnotationSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a label. Relabeling a title with a different value is an error.
    pub fn insert(&mut self, title: Title, relevance: Relevance) -> Result<()> {
        match self.labels.get(&title) {
            Some(&have) if have != relevance => {
                Err(Error::Parse { line: 0, message: alloc::format!("{title} labeled both {have} and {relevance}") })
            }
            _ => {
                self.labels.insert(title, relevance);
                Ok(())
            }
        }
    }

    /// Parses `title<TAB>relevant|irrelevant` lines; `#` starts a comment line.
    pub fn parse(text: &str) -> Result<Self> {
        let mut set = AnnotationSet::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (title, label) = line.split_once('\t').ok_or_else(|| err("expected title<TAB>label".into()))?;
            let title = Title::normalize(title).map_err(|e| err(e.to_string()))?;
            let rel = Relevance::parse(label.trim()).ok_or_else(|| err(alloc::format!("unknown label {label:?}")))?;
            set.insert(title, rel).map_err(|e| err(e.to_string()))?;
        }
        Ok(set)
    }

    pub fn get(&self, title: &Title) -> Option<Relevance> {
        self.labels.get(title).copied()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&Title, Relevance)> {
        self.labels.iter().map(|(t, &r)| (t, r))
    }

    pub fn with_label(&self, relevance: Relevance) -> impl Iterator<Item = &Title> {
        self.labels.iter().filter(move |(_, &r)| r == relevance).map(|(t, _)| t)
    }
}

/// An external vocabulary, stored as lemma keys.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceTermList {
    pub name: String,
    terms: BTreeSet<String>,
}

impl ReferenceTermList {
    pub fn new<I, S>(name: impl Into<String>, raw_terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let terms: BTreeSet<String> =
            raw_terms.into_iter().map(|t| lemma_key(t.as_ref())).filter(|k| !k.is_empty()).collect();
        if terms.is_empty() {
            return Err(Error::EmptyReferences);
        }
        Ok(ReferenceTermList { name: name.into(), terms })
    }

    /// One term per line; blank lines ignored.
    pub fn parse(name: impl Into<String>, text: &str) -> Result<Self> {
        Self::new(name, text.lines().map(str::trim).filter(|l| !l.is_empty()))
    }

    pub fn terms(&self) -> &BTreeSet<String> {
        &self.terms
    }

    pub fn contains(&self, key: &str) -> bool {
        self.terms.contains(key)
    }
}

pub fn reference_union(refs: &[ReferenceTermList]) -> BTreeSet<String> {
    refs.iter().flat_map(|r| r.terms.iter().cloned()).collect()
}

/// Summary of one pruning stage.
///
/// `before - removed_direct - removed_propagated == remaining` always holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub stage: String,
    pub before: usize,
    pub removed_direct: usize,
    pub removed_propagated: usize,
    pub remaining: usize,
    pub per_rule_hits: BTreeMap<String, usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub metrics: BTreeMap<String, f64>,
}

impl StageReport {
    pub fn new(stage: impl Into<String>, counts: PruneCounts) -> Self {
        StageReport {
            stage: stage.into(),
            before: counts.before,
            removed_direct: counts.removed_direct,
            removed_propagated: counts.removed_propagated,
            remaining: counts.remaining,
            per_rule_hits: BTreeMap::new(),
            metrics: BTreeMap::new(),
        }
    }
}

/// Removes `removed` with propagation and stamps survivors with `tag` when
/// `touched` says the stage examined them.
pub(crate) fn remove_and_tag(
    subtree: &Subtree,
    graph: &CategoryGraph,
    removed: &BTreeSet<CategoryId>,
    mode: PruneMode,
    tag: StageTag,
    touched: impl Fn(CategoryId) -> bool,
) -> Result<(Subtree, PruneCounts)> {
    let (mut pruned, counts) = prune_unreachable(subtree, graph, removed, mode)?;
    let survivors: Vec<CategoryId> = pruned.members().filter(|&id| touched(id)).collect();
    for id in survivors {
        pruned.set_stage(id, tag);
    }
    Ok((pruned, counts))
}

/// Removes members labeled irrelevant.
///
/// Every member at `level <= max_level` must carry a label; the error lists
/// the ones that do not.
pub fn apply_annotations(
    subtree: &Subtree,
    graph: &CategoryGraph,
    annotations: &AnnotationSet,
    max_level: u32,
    mode: PruneMode,
) -> Result<(Subtree, StageReport)> {
    let mut missing: Vec<String> = subtree
        .members()
        .filter(|&id| subtree.level(id).is_some_and(|l| l <= max_level))
        .filter(|&id| annotations.get(graph.category_title(id)).is_none())
        .map(|id| graph.category_title(id).as_str().into())
        .collect();
    if !missing.is_empty() {
        missing.sort();
        return Err(Error::IncompleteAnnotations { max_level, titles: missing });
    }
    let removed: BTreeSet<CategoryId> = subtree
        .members()
        .filter(|&id| annotations.get(graph.category_title(id)) == Some(Relevance::Irrelevant))
        .collect();
    let (pruned, counts) = remove_and_tag(subtree, graph, &removed, mode, StageTag::Manual, |id| {
        annotations.get(graph.category_title(id)).is_some()
    })?;
    Ok((pruned, StageReport::new("filter-manual", counts)))
}

/// Keeps a community iff one of its members' lemmatized titles is a
/// reference term. Communities holding a seed are always kept.
pub fn filter_communities(
    subtree: &Subtree,
    graph: &CategoryGraph,
    communities: &CommunityAssignment,
    refs: &[ReferenceTermList],
    mode: PruneMode,
) -> Result<(Subtree, StageReport)> {
    let union = reference_union(refs);
    if union.is_empty() {
        return Err(Error::EmptyReferences);
    }
    let count = communities.community_count();
    let mut keep = alloc::vec![false; count];
    for (&id, &c) in communities.members().iter().zip(communities.labels()) {
        if !subtree.contains(id) {
            return Err(Error::NotAMember(id));
        }
        if subtree.seeds().contains(&id) || union.contains(&lemma_key(graph.category_title(id).as_str())) {
            keep[c as usize] = true;
        }
    }
    for id in subtree.members() {
        if communities.community_of(id).is_none() {
            return Err(Error::Config(alloc::format!(
                "community assignment does not cover {}",
                graph.category_title(id)
            )));
        }
    }
    let removed: BTreeSet<CategoryId> = communities
        .members()
        .iter()
        .zip(communities.labels())
        .filter(|(_, &c)| !keep[c as usize])
        .map(|(&id, _)| id)
        .collect();
    let (pruned, counts) = remove_and_tag(subtree, graph, &removed, mode, StageTag::Community, |_| true)?;
    let mut report = StageReport::new("filter-communities", counts);
    let kept = keep.iter().filter(|&&k| k).count();
    report.metrics.insert("communities".into(), count as f64);
    report.metrics.insert("communities_removed".into(), (count - kept) as f64);
    report.metrics.insert("modularity".into(), communities.modularity());
    Ok((pruned, report))
}
