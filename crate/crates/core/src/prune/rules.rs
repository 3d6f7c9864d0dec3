use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use super::{remove_and_tag, StageReport};
use crate::error::{Error, Result};
use crate::graph::{CategoryGraph, PruneMode, StageTag, Subtree};
use crate::title::Title;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RuleKind {
    TitleSuffix,
    TitlePrefix,
    TitleContains,
    TitleExact,
    /// Matches members whose in-subtree parent has exactly this title.
    ParentOf,
}

impl RuleKind {
    pub fn as_str(self) -> &'static str {
        match self {
            RuleKind::TitleSuffix => "title_suffix",
            RuleKind::TitlePrefix => "title_prefix",
            RuleKind::TitleContains => "title_contains",
            RuleKind::TitleExact => "title_exact",
            RuleKind::ParentOf => "parent_of",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "title_suffix" => RuleKind::TitleSuffix,
            "title_prefix" => RuleKind::TitlePrefix,
            "title_contains" => RuleKind::TitleContains,
            "title_exact" => RuleKind::TitleExact,
            "parent_of" => RuleKind::ParentOf,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub kind: RuleKind,
    pub pattern: Title,
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.as_str(), self.pattern)
    }
}

impl Rule {
    /// Title rules compare whole tokens: the suffix "by subject" matches
    /// "novels by subject" but not "standby subject".
    fn matches_title(&self, title: &str) -> bool {
        let p = self.pattern.as_str();
        let boundary_before = |i: usize| i == 0 || title.as_bytes()[i - 1] == b' ';
        let boundary_after = |i: usize| i == title.len() || title.as_bytes()[i] == b' ';
        match self.kind {
            RuleKind::TitleExact => title == p,
            RuleKind::TitleSuffix => title.ends_with(p) && boundary_before(title.len() - p.len()),
            RuleKind::TitlePrefix => title.starts_with(p) && boundary_after(p.len()),
            RuleKind::TitleContains => {
                title.match_indices(p).any(|(i, _)| boundary_before(i) && boundary_after(i + p.len()))
            }
            RuleKind::ParentOf => false,
        }
    }
}

/// Ordered list of removal rules.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RuleSet {
    rules: Vec<Rule>,
}

impl RuleSet {
    pub fn new(rules: Vec<Rule>) -> Self {
        RuleSet { rules }
    }

    /// Parses `kind<TAB>pattern` lines. Blank lines and `#` comments are skipped.
    pub fn parse(text: &str) -> Result<Self> {
        let mut rules = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end_matches('\r');
            if line.trim().is_empty() || line.trim_start().starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: i + 1, message };
            let (kind, pattern) = line.split_once('\t').ok_or_else(|| err("expected kind<TAB>pattern".into()))?;
            let kind = RuleKind::parse(kind.trim()).ok_or_else(|| err(alloc::format!("unknown rule kind {kind:?}")))?;
            let pattern = Title::normalize(pattern).map_err(|e| err(e.to_string()))?;
            rules.push(Rule { kind, pattern });
        }
        Ok(RuleSet { rules })
    }

    pub fn rules(&self) -> &[Rule] {
        &self.rules
    }

    pub fn len(&self) -> usize {
        self.rules.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rules.is_empty()
    }
}

/// Removes every member matched by any rule and reports hits per rule.
/// Seeds are never matched.
pub fn apply_rules(
    subtree: &Subtree,
    graph: &CategoryGraph,
    rules: &RuleSet,
    mode: PruneMode,
) -> Result<(Subtree, StageReport)> {
    let mut hits: BTreeMap<String, usize> = rules.rules.iter().map(|r| (r.to_string(), 0)).collect();
    let mut removed = BTreeSet::new();
    for id in subtree.members() {
        if subtree.seeds().contains(&id) {
            continue;
        }
        let title = graph.category_title(id).as_str();
        for rule in &rules.rules {
            let hit = match rule.kind {
                RuleKind::ParentOf => {
                    graph.parents(id).iter().any(|&p| subtree.contains(p) && graph.category_title(p) == &rule.pattern)
                }
                _ => rule.matches_title(title),
            };
            if hit {
                *hits.get_mut(&rule.to_string()).expect("hit keys cover rules") += 1;
                removed.insert(id);
            }
        }
    }
    let (pruned, counts) = remove_and_tag(subtree, graph, &removed, mode, StageTag::Rule, |_| true)?;
    let mut report = StageReport::new("filter-rules", counts);
    report.per_rule_hits = hits;
    Ok((pruned, report))
}

/// Removal set computed one member at a time, for cross-checking [`apply_rules`].
#[cfg(test)]
pub(crate) fn naive_matches(
    subtree: &Subtree,
    graph: &CategoryGraph,
    rules: &RuleSet,
) -> BTreeSet<crate::graph::CategoryId> {
    let mut out = BTreeSet::new();
    for id in subtree.members() {
        if subtree.seeds().contains(&id) {
            continue;
        }
        let title = graph.category_title(id).as_str();
        let words: Vec<&str> = title.split(' ').collect();
        for rule in rules.rules() {
            let pat: Vec<&str> = rule.pattern.as_str().split(' ').collect();
            let hit = match rule.kind {
                RuleKind::TitleExact => words == pat,
                RuleKind::TitleSuffix => words.ends_with(&pat),
                RuleKind::TitlePrefix => words.starts_with(&pat),
                RuleKind::TitleContains => words.windows(pat.len()).any(|w| w == pat.as_slice()),
                RuleKind::ParentOf => graph
                    .parents(id)
                    .iter()
                    .filter(|&&p| subtree.contains(p))
                    .any(|&p| graph.category_title(p).as_str() == rule.pattern.as_str()),
            };
            if hit {
                out.insert(id);
            }
        }
    }
    out
}
