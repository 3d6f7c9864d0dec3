//! Category graph, seeded subtree extraction and removal propagation.
//!
//! Ids are dense `u32`s assigned at load. They are an internal detail: every
//! external format keys by [`Title`], and nothing computed here depends on id
//! order except tie-free iteration.

use alloc::collections::{BTreeMap, BTreeSet, VecDeque};
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::title::Title;

pub type CategoryId = u32;
pub type PageId = u32;

/// Counters collected while resolving raw links into a [`CategoryGraph`].
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadSummary {
    pub categories: usize,
    pub pages: usize,
    pub category_links: usize,
    pub page_links: usize,
    pub self_loops: usize,
    pub duplicate_links: usize,
    pub unknown_links: usize,
    pub invalid_titles: usize,
}

/// Parent/child links between categories plus category-page membership.
///
/// `parents` and `children` are exact transposes; all adjacency lists are
/// sorted and deduplicated. Cycles are allowed.
#[derive(Debug, Clone)]
pub struct CategoryGraph {
    categories: Vec<Title>,
    category_index: BTreeMap<Title, CategoryId>,
    parents: Vec<Vec<CategoryId>>,
    children: Vec<Vec<CategoryId>>,
    pages: Vec<Title>,
    page_index: BTreeMap<Title, PageId>,
    category_pages: Vec<Vec<PageId>>,
    summary: LoadSummary,
}

impl CategoryGraph {
    pub fn category_count(&self) -> usize {
        self.categories.len()
    }

    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn category_id(&self, title: &Title) -> Option<CategoryId> {
        self.category_index.get(title).copied()
    }

    pub fn category_title(&self, id: CategoryId) -> &Title {
        &self.categories[id as usize]
    }

    pub fn page_id(&self, title: &Title) -> Option<PageId> {
        self.page_index.get(title).copied()
    }

    pub fn page_title(&self, id: PageId) -> &Title {
        &self.pages[id as usize]
    }

    pub fn parents(&self, id: CategoryId) -> &[CategoryId] {
        &self.parents[id as usize]
    }

    pub fn children(&self, id: CategoryId) -> &[CategoryId] {
        &self.children[id as usize]
    }

    pub fn pages_of(&self, id: CategoryId) -> &[PageId] {
        &self.category_pages[id as usize]
    }

    pub fn summary(&self) -> &LoadSummary {
        &self.summary
    }

    pub fn category_ids(&self) -> impl Iterator<Item = CategoryId> {
        0..self.categories.len() as CategoryId
    }

    /// Iterates `(child, parent)` pairs in id order.
    pub fn category_links(&self) -> impl Iterator<Item = (CategoryId, CategoryId)> + '_ {
        self.parents.iter().enumerate().flat_map(|(c, ps)| ps.iter().map(move |&p| (c as CategoryId, p)))
    }

    pub fn resolve_seeds<'a, I>(&self, seeds: I) -> Result<Vec<CategoryId>>
    where
        I: IntoIterator<Item = &'a Title>,
    {
        let mut out = Vec::new();
        for title in seeds {
            let id = self.category_id(title).ok_or_else(|| Error::UnknownSeed(title.as_str().into()))?;
            if !out.contains(&id) {
                out.push(id);
            }
        }
        Ok(out)
    }
}

/// Accumulates titles and links, then resolves them into a [`CategoryGraph`].
///
/// Links may arrive before the titles they reference; resolution happens in
/// [`GraphBuilder::build`]. With `implicit_titles` set, link endpoints declare
/// themselves, which is how plain edge lists without a title table load.
#[derive(Debug, Default)]
pub struct GraphBuilder {
    implicit_titles: bool,
    categories: Vec<Title>,
    category_index: BTreeMap<Title, CategoryId>,
    pages: Vec<Title>,
    page_index: BTreeMap<Title, PageId>,
    category_links: Vec<(Title, Title)>,
    page_links: Vec<(Title, Title)>,
    invalid_titles: usize,
}

impl GraphBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_implicit_titles(mut self, implicit: bool) -> Self {
        self.implicit_titles = implicit;
        self
    }

    pub fn add_category(&mut self, raw: &str) -> Option<CategoryId> {
        let title = self.normalize(raw)?;
        Some(intern(&mut self.categories, &mut self.category_index, title))
    }

    pub fn add_page(&mut self, raw: &str) -> Option<PageId> {
        let title = self.normalize(raw)?;
        Some(intern(&mut self.pages, &mut self.page_index, title))
    }

    pub fn add_category_link(&mut self, child: &str, parent: &str) {
        if let (Some(c), Some(p)) = (self.normalize(child), self.normalize(parent)) {
            self.category_links.push((c, p));
        }
    }

    pub fn add_page_link(&mut self, page: &str, category: &str) {
        if let (Some(p), Some(c)) = (self.normalize(page), self.normalize(category)) {
            self.page_links.push((p, c));
        }
    }

    fn normalize(&mut self, raw: &str) -> Option<Title> {
        match Title::normalize(raw) {
            Ok(t) => Some(t),
            Err(_) => {
                self.invalid_titles += 1;
                None
            }
        }
    }

    pub fn build(mut self) -> CategoryGraph {
        let mut summary = LoadSummary { invalid_titles: self.invalid_titles, ..Default::default() };
        let category_links = core::mem::take(&mut self.category_links);
        let page_links = core::mem::take(&mut self.page_links);
        if self.implicit_titles {
            for (c, p) in &category_links {
                intern(&mut self.categories, &mut self.category_index, c.clone());
                intern(&mut self.categories, &mut self.category_index, p.clone());
            }
            for (p, c) in &page_links {
                intern(&mut self.pages, &mut self.page_index, p.clone());
                intern(&mut self.categories, &mut self.category_index, c.clone());
            }
        }

        let n = self.categories.len();
        let mut parents: Vec<Vec<CategoryId>> = alloc::vec![Vec::new(); n];
        for (child, parent) in &category_links {
            let (Some(&c), Some(&p)) = (self.category_index.get(child), self.category_index.get(parent)) else {
                summary.unknown_links += 1;
                continue;
            };
            if c == p {
                summary.self_loops += 1;
                continue;
            }
            parents[c as usize].push(p);
        }
        let mut children: Vec<Vec<CategoryId>> = alloc::vec![Vec::new(); n];
        for (c, ps) in parents.iter_mut().enumerate() {
            let before = ps.len();
            ps.sort_unstable();
            ps.dedup();
            summary.duplicate_links += before - ps.len();
            summary.category_links += ps.len();
            for &p in ps.iter() {
                children[p as usize].push(c as CategoryId);
            }
        }

        let mut category_pages: Vec<Vec<PageId>> = alloc::vec![Vec::new(); n];
        for (page, category) in &page_links {
            let (Some(&p), Some(&c)) = (self.page_index.get(page), self.category_index.get(category)) else {
                summary.unknown_links += 1;
                continue;
            };
            category_pages[c as usize].push(p);
        }
        for ps in category_pages.iter_mut() {
            let before = ps.len();
            ps.sort_unstable();
            ps.dedup();
            summary.duplicate_links += before - ps.len();
            summary.page_links += ps.len();
        }

        summary.categories = n;
        summary.pages = self.pages.len();
        CategoryGraph {
            categories: self.categories,
            category_index: self.category_index,
            parents,
            children,
            pages: self.pages,
            page_index: self.page_index,
            category_pages,
            summary,
        }
    }
}

fn intern(list: &mut Vec<Title>, index: &mut BTreeMap<Title, u32>, title: Title) -> u32 {
    if let Some(&id) = index.get(&title) {
        return id;
    }
    let id = list.len() as u32;
    list.push(title.clone());
    index.insert(title, id);
    id
}

/// Pipeline stage that admitted a member or last kept it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageTag {
    Extract,
    Manual,
    Community,
    Classifier,
    Rule,
}

impl StageTag {
    pub fn as_str(self) -> &'static str {
        match self {
            StageTag::Extract => "extract",
            StageTag::Manual => "manual",
            StageTag::Community => "community",
            StageTag::Classifier => "classifier",
            StageTag::Rule => "rule",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "extract" => StageTag::Extract,
            "manual" => StageTag::Manual,
            "community" => StageTag::Community,
            "classifier" => StageTag::Classifier,
            "rule" => StageTag::Rule,
            _ => return None,
        })
    }
}

impl fmt::Display for StageTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How removing a member affects the rest of the subtree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PruneMode {
    /// Keep whatever stays reachable from the seeds through surviving members.
    #[default]
    Reachability,
    /// Also drop every direct child of a removed member, then apply reachability.
    StrictChildren,
}

/// The evolving set of domain categories with their discovery levels.
///
/// Level 1 is the seed level; a member's level is its shortest
/// member-internal distance from any seed plus one.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Subtree {
    levels: Vec<u32>,
    stages: Vec<StageTag>,
    seeds: Vec<CategoryId>,
    len: usize,
}

impl Subtree {
    fn from_levels(levels: Vec<u32>, stages: Vec<StageTag>, seeds: Vec<CategoryId>) -> Self {
        let len = levels.iter().filter(|&&l| l > 0).count();
        Subtree { levels, stages, seeds, len }
    }

    /// Rebuilds a subtree from an explicit membership (e.g. a saved snapshot).
    ///
    /// Levels are recomputed from the seeds, so a snapshot whose stored levels
    /// disagree with the graph is detectable by comparing against the input.
    pub fn from_members(
        graph: &CategoryGraph,
        seeds: Vec<CategoryId>,
        members: &BTreeMap<CategoryId, StageTag>,
    ) -> Subtree {
        let n = graph.category_count();
        let mut allowed = alloc::vec![false; n];
        for &id in members.keys() {
            allowed[id as usize] = true;
        }
        let levels = bfs_levels(graph, &seeds, |c| allowed[c as usize]);
        let mut stages = alloc::vec![StageTag::Extract; n];
        for (&id, &tag) in members {
            stages[id as usize] = tag;
        }
        Subtree::from_levels(levels, stages, seeds)
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn contains(&self, id: CategoryId) -> bool {
        self.levels.get(id as usize).is_some_and(|&l| l > 0)
    }

    pub fn level(&self, id: CategoryId) -> Option<u32> {
        self.levels.get(id as usize).copied().filter(|&l| l > 0)
    }

    pub fn stage(&self, id: CategoryId) -> Option<StageTag> {
        self.contains(id).then(|| self.stages[id as usize])
    }

    pub fn seeds(&self) -> &[CategoryId] {
        &self.seeds
    }

    /// Members in ascending id order.
    pub fn members(&self) -> impl Iterator<Item = CategoryId> + '_ {
        self.levels.iter().enumerate().filter(|(_, &l)| l > 0).map(|(i, _)| i as CategoryId)
    }

    pub fn max_level(&self) -> u32 {
        self.levels.iter().copied().max().unwrap_or(0)
    }

    /// Number of members per level, index 0 holding level 1.
    pub fn level_histogram(&self) -> Vec<usize> {
        let mut hist = alloc::vec![0usize; self.max_level() as usize];
        for &l in self.levels.iter().filter(|&&l| l > 0) {
            hist[l as usize - 1] += 1;
        }
        hist
    }

    pub fn set_stage(&mut self, id: CategoryId, tag: StageTag) {
        if self.contains(id) {
            self.stages[id as usize] = tag;
        }
    }

    pub fn member_titles<'g>(&self, graph: &'g CategoryGraph) -> BTreeSet<&'g Title> {
        self.members().map(|id| graph.category_title(id)).collect()
    }

    /// Verifies seeds, reachability and shortest-path levels against `graph`.
    pub fn validate(&self, graph: &CategoryGraph) -> Result<()> {
        if self.levels.len() != graph.category_count() {
            return Err(Error::Config(String::from("subtree built for a different graph")));
        }
        let expected = bfs_levels(graph, &self.seeds, |c| self.contains(c));
        for (id, (&have, &want)) in self.levels.iter().zip(&expected).enumerate() {
            if have != want {
                return Err(Error::Integrity(alloc::format!(
                    "{}: stored level {have}, reachable level {want}",
                    graph.category_title(id as CategoryId)
                )));
            }
        }
        Ok(())
    }
}

/// Breadth-first levels over child links, restricted to `allowed` nodes.
/// Returns a dense vector with 0 for unreached categories.
fn bfs_levels(graph: &CategoryGraph, seeds: &[CategoryId], allowed: impl Fn(CategoryId) -> bool) -> Vec<u32> {
    let mut levels = alloc::vec![0u32; graph.category_count()];
    let mut queue = VecDeque::new();
    for &s in seeds {
        if allowed(s) && levels[s as usize] == 0 {
            levels[s as usize] = 1;
            queue.push_back(s);
        }
    }
    while let Some(node) = queue.pop_front() {
        let next = levels[node as usize] + 1;
        for &child in graph.children(node) {
            if levels[child as usize] == 0 && allowed(child) {
                levels[child as usize] = next;
                queue.push_back(child);
            }
        }
    }
    levels
}

/// Seeded breadth-first extraction over child links.
///
/// A category already in the subtree is never enqueued again, so cycles
/// terminate and each category keeps its first (shallowest) level.
pub fn bfs_subtree(graph: &CategoryGraph, seeds: &[Title]) -> Result<Subtree> {
    let seed_ids = graph.resolve_seeds(seeds)?;
    let levels = bfs_levels(graph, &seed_ids, |_| true);
    let stages = alloc::vec![StageTag::Extract; graph.category_count()];
    Ok(Subtree::from_levels(levels, stages, seed_ids))
}

/// Member counts removed by one pruning step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneCounts {
    pub before: usize,
    pub removed_direct: usize,
    pub removed_propagated: usize,
    pub remaining: usize,
}

/// Removes `removed` from the subtree and recomputes reachability and levels.
pub fn prune_unreachable(
    subtree: &Subtree,
    graph: &CategoryGraph,
    removed: &BTreeSet<CategoryId>,
    mode: PruneMode,
) -> Result<(Subtree, PruneCounts)> {
    for &id in removed {
        if !subtree.contains(id) {
            return Err(Error::NotAMember(id));
        }
        if subtree.seeds.contains(&id) {
            return Err(Error::SeedRemoval(graph.category_title(id).as_str().into()));
        }
    }
    let mut killed = alloc::vec![false; subtree.levels.len()];
    for &id in removed {
        killed[id as usize] = true;
    }
    if mode == PruneMode::StrictChildren {
        for &id in removed {
            for &child in graph.children(id) {
                // seeds are never removed implicitly
                if subtree.contains(child) && !subtree.seeds.contains(&child) {
                    killed[child as usize] = true;
                }
            }
        }
    }
    let levels = bfs_levels(graph, &subtree.seeds, |c| subtree.contains(c) && !killed[c as usize]);
    let pruned = Subtree::from_levels(levels, subtree.stages.clone(), subtree.seeds.clone());
    let counts = PruneCounts {
        before: subtree.len(),
        removed_direct: removed.len(),
        removed_propagated: subtree.len() - removed.len() - pruned.len(),
        remaining: pruned.len(),
    };
    Ok((pruned, counts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn t(s: &str) -> Title {
        Title::normalize(s).unwrap()
    }

    fn graph(edges: &[(&str, &str)]) -> CategoryGraph {
        let mut b = GraphBuilder::new().with_implicit_titles(true);
        for (parent, child) in edges {
            b.add_category_link(child, parent);
        }
        b.build()
    }

    fn levels_by_title(g: &CategoryGraph, s: &Subtree) -> BTreeMap<String, u32> {
        s.members().map(|id| (g.category_title(id).to_string(), s.level(id).unwrap())).collect()
    }

    #[test]
    fn transposes_and_dedups() {
        let mut b = GraphBuilder::new();
        for c in ["A", "B", "C"] {
            b.add_category(c);
        }
        b.add_category_link("B", "A");
        b.add_category_link("B", "A");
        b.add_category_link("C", "B");
        let g = b.build();
        let (a, bb, c) =
            (g.category_id(&t("a")).unwrap(), g.category_id(&t("b")).unwrap(), g.category_id(&t("c")).unwrap());
        assert_eq!(g.children(a), &[bb]);
        assert_eq!(g.parents(c), &[bb]);
        assert_eq!(g.summary().duplicate_links, 1);
        assert_eq!(g.summary().category_links, 2);
    }

    #[test]
    fn unknown_titles_and_self_loops_are_skipped() {
        let mut b = GraphBuilder::new();
        b.add_category("A");
        b.add_category_link("A", "ghost");
        b.add_category_link("A", "A");
        let g = b.build();
        assert_eq!(g.summary().unknown_links, 1);
        assert_eq!(g.summary().self_loops, 1);
        assert!(g.parents(0).is_empty());
    }

    #[test]
    fn chain_levels() {
        let g = graph(&[("S", "A"), ("A", "B")]);
        let s = bfs_subtree(&g, &[t("S")]).unwrap();
        let want: BTreeMap<String, u32> =
            [("s", 1), ("a", 2), ("b", 3)].iter().map(|(k, v)| (k.to_string(), *v)).collect();
        assert_eq!(levels_by_title(&g, &s), want);
    }

    #[test]
    fn cycle_terminates() {
        let g = graph(&[("S", "A"), ("A", "B"), ("B", "S")]);
        let s = bfs_subtree(&g, &[t("S")]).unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.level(g.category_id(&t("b")).unwrap()), Some(3));
    }

    #[test]
    fn diamond_visits_once() {
        let g = graph(&[("S", "A"), ("S", "B"), ("A", "C"), ("B", "C")]);
        let s = bfs_subtree(&g, &[t("S")]).unwrap();
        assert_eq!(s.len(), 4);
        assert_eq!(s.level(g.category_id(&t("c")).unwrap()), Some(3));
        s.validate(&g).unwrap();
    }

    #[test]
    fn unknown_seed_is_named() {
        let g = graph(&[("S", "A")]);
        assert_eq!(bfs_subtree(&g, &[t("nope")]), Err(Error::UnknownSeed("nope".into())));
    }

    fn diamond() -> (CategoryGraph, Subtree) {
        let g = graph(&[("S", "A"), ("S", "B"), ("A", "C"), ("B", "C")]);
        let s = bfs_subtree(&g, &[t("S")]).unwrap();
        (g, s)
    }

    fn ids(g: &CategoryGraph, names: &[&str]) -> BTreeSet<CategoryId> {
        names.iter().map(|n| g.category_id(&t(n)).unwrap()).collect()
    }

    #[test]
    fn reachability_keeps_alternative_path() {
        let (g, s) = diamond();
        let (p, counts) = prune_unreachable(&s, &g, &ids(&g, &["A"]), PruneMode::Reachability).unwrap();
        assert!(p.contains(g.category_id(&t("c")).unwrap()));
        assert_eq!(counts, PruneCounts { before: 4, removed_direct: 1, removed_propagated: 0, remaining: 3 });
    }

    #[test]
    fn strict_children_drops_child() {
        let (g, s) = diamond();
        let (p, counts) = prune_unreachable(&s, &g, &ids(&g, &["A"]), PruneMode::StrictChildren).unwrap();
        assert!(!p.contains(g.category_id(&t("c")).unwrap()));
        assert_eq!(counts.removed_propagated, 1);
        p.validate(&g).unwrap();
    }

    #[test]
    fn removing_both_parents_leaves_seed() {
        let (g, s) = diamond();
        for mode in [PruneMode::Reachability, PruneMode::StrictChildren] {
            let (p, _) = prune_unreachable(&s, &g, &ids(&g, &["A", "B"]), mode).unwrap();
            assert_eq!(p.members().collect::<Vec<_>>(), vec![g.category_id(&t("s")).unwrap()]);
        }
    }

    #[test]
    fn seed_removal_is_rejected() {
        let (g, s) = diamond();
        let err = prune_unreachable(&s, &g, &ids(&g, &["S"]), PruneMode::Reachability).unwrap_err();
        assert_eq!(err, Error::SeedRemoval("s".into()));
    }

    #[test]
    fn levels_recomputed_after_prune() {
        // S→A→C and S→B→D→C: dropping A pushes C from level 3 to level 4
        let g = graph(&[("S", "A"), ("A", "C"), ("S", "B"), ("B", "D"), ("D", "C")]);
        let s = bfs_subtree(&g, &[t("S")]).unwrap();
        let (p, _) = prune_unreachable(&s, &g, &ids(&g, &["A"]), PruneMode::Reachability).unwrap();
        assert_eq!(p.level(g.category_id(&t("c")).unwrap()), Some(4));
    }
}
