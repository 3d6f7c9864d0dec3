//! Louvain modularity maximization over the undirected projection of
//! parent-child links.
//!
//! Node visit order in each local-move phase is a permutation drawn from a
//! ChaCha stream seeded by [`LouvainConfig::seed`]; among equally good target
//! communities the smallest id wins. A node moves only for a strictly
//! positive gain, so runs are reproducible for a fixed `(seed, resolution)`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CategoryGraph, CategoryId, Subtree};

const GAIN_EPSILON: f64 = 1e-12;
const MAX_PASSES: usize = 1_000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LouvainConfig {
    pub resolution: f64,
    pub seed: u64,
}

impl Default for LouvainConfig {
    fn default() -> Self {
        LouvainConfig { resolution: 1.0, seed: 0 }
    }
}

/// Newman-Girvan modularity of an unweighted partition at resolution 1.
pub fn modularity(partition: &[usize], edges: &[(usize, usize)]) -> Result<f64> {
    modularity_with_resolution(partition, edges, 1.0)
}

/// `Q = Σ_c (e_c / m - γ (d_c / 2m)²)` where `e_c` counts edges inside `c` and
/// `d_c` is the degree total of `c`. Counts accumulate as integers, so the
/// result does not depend on edge order. An edgeless graph has `Q = 0`.
pub fn modularity_with_resolution(partition: &[usize], edges: &[(usize, usize)], resolution: f64) -> Result<f64> {
    let mut per_community: BTreeMap<usize, (u64, u64)> = BTreeMap::new();
    for &(u, v) in edges {
        let cu = *partition.get(u).ok_or(Error::MissingNode(u))?;
        let cv = *partition.get(v).ok_or(Error::MissingNode(v))?;
        per_community.entry(cu).or_default().1 += 1;
        per_community.entry(cv).or_default().1 += 1;
        if cu == cv {
            per_community.entry(cu).or_default().0 += 1;
        }
    }
    if edges.is_empty() {
        return Ok(0.0);
    }
    let m = edges.len() as f64;
    Ok(per_community
        .values()
        .map(|&(inner, degree)| {
            let share = degree as f64 / (2.0 * m);
            inner as f64 / m - resolution * share * share
        })
        .sum())
}

/// Result of [`louvain_edges`]: dense community labels for nodes `0..n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Partition {
    pub labels: Vec<usize>,
    pub community_count: usize,
    pub modularity: f64,
    /// Modularity of the singleton start and after each aggregation level.
    pub history: Vec<f64>,
}

/// Weighted graph for one aggregation level.
struct Level {
    adjacency: Vec<Vec<(usize, f64)>>,
    self_weight: Vec<f64>,
    degree: Vec<f64>,
    total: f64,
}

impl Level {
    fn from_edges(n: usize, edges: &[(usize, usize)]) -> Level {
        let mut adjacency = alloc::vec![Vec::new(); n];
        for &(u, v) in edges {
            adjacency[u].push((v, 1.0));
            adjacency[v].push((u, 1.0));
        }
        Level::finish(adjacency, alloc::vec![0.0; n])
    }

    fn finish(adjacency: Vec<Vec<(usize, f64)>>, self_weight: Vec<f64>) -> Level {
        let degree: Vec<f64> = adjacency
            .iter()
            .zip(&self_weight)
            .map(|(adj, &s)| adj.iter().map(|&(_, w)| w).sum::<f64>() + 2.0 * s)
            .collect();
        let total = degree.iter().sum();
        Level { adjacency, self_weight, degree, total }
    }

    fn len(&self) -> usize {
        self.adjacency.len()
    }

    /// Local moves until a full pass changes nothing. Returns dense labels
    /// (numbered by first node) and whether anything moved.
    fn local_moves(&self, resolution: f64, rng: &mut ChaCha8Rng) -> (Vec<usize>, bool) {
        let n = self.len();
        let mut community: Vec<usize> = (0..n).collect();
        let mut tot: Vec<f64> = self.degree.clone();
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(rng);
        let mut link_weight = alloc::vec![0.0f64; n];
        let mut touched: Vec<usize> = Vec::new();
        let mut any_move = false;
        for _ in 0..MAX_PASSES {
            let mut moved = false;
            for &node in &order {
                let own = community[node];
                let k = self.degree[node];
                for &(nb, w) in &self.adjacency[node] {
                    let c = community[nb];
                    if link_weight[c] == 0.0 {
                        touched.push(c);
                    }
                    link_weight[c] += w;
                }
                tot[own] -= k;
                let gain = |c: usize, w: f64| w - resolution * tot[c] * k / self.total;
                let stay = gain(own, link_weight[own]);
                touched.sort_unstable();
                let mut best = (own, stay);
                for &c in &touched {
                    if c == own {
                        continue;
                    }
                    let g = gain(c, link_weight[c]);
                    if g > best.1 + GAIN_EPSILON || (best.0 != own && g == best.1 && c < best.0) {
                        best = (c, g);
                    }
                }
                tot[best.0] += k;
                if best.0 != own {
                    community[node] = best.0;
                    moved = true;
                }
                for &c in &touched {
                    link_weight[c] = 0.0;
                }
                touched.clear();
            }
            if !moved {
                break;
            }
            any_move = true;
        }
        (renumber(&community), any_move)
    }

    fn aggregate(&self, labels: &[usize], count: usize) -> Level {
        let mut self_weight = alloc::vec![0.0; count];
        let mut links: Vec<BTreeMap<usize, f64>> = alloc::vec![BTreeMap::new(); count];
        for u in 0..self.len() {
            let cu = labels[u];
            self_weight[cu] += self.self_weight[u];
            for &(v, w) in &self.adjacency[u] {
                let cv = labels[v];
                if cu == cv {
                    // each internal edge is seen from both ends
                    self_weight[cu] += w / 2.0;
                } else {
                    *links[cu].entry(cv).or_default() += w;
                }
            }
        }
        let adjacency = links.into_iter().map(|m| m.into_iter().collect()).collect();
        Level::finish(adjacency, self_weight)
    }
}

/// Dense relabeling in order of first appearance.
fn renumber(labels: &[usize]) -> Vec<usize> {
    let mut map = BTreeMap::new();
    labels
        .iter()
        .map(|&l| {
            let next = map.len();
            *map.entry(l).or_insert(next)
        })
        .collect()
}

/// Louvain on a plain undirected graph with nodes `0..n`.
///
/// Self-loops are ignored and parallel edges collapsed before clustering.
pub fn louvain_edges(n: usize, edges: &[(usize, usize)], config: LouvainConfig) -> Result<Partition> {
    let mut simple: Vec<(usize, usize)> = Vec::with_capacity(edges.len());
    for &(u, v) in edges {
        if u >= n {
            return Err(Error::MissingNode(u));
        }
        if v >= n {
            return Err(Error::MissingNode(v));
        }
        if u != v {
            simple.push((u.min(v), u.max(v)));
        }
    }
    simple.sort_unstable();
    simple.dedup();

    let mut labels: Vec<usize> = (0..n).collect();
    let singleton_q = modularity_with_resolution(&labels, &simple, config.resolution)?;
    let mut history = alloc::vec![singleton_q];
    if simple.is_empty() {
        return Ok(Partition { labels, community_count: n, modularity: singleton_q, history });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut level = Level::from_edges(n, &simple);
    loop {
        let (level_labels, moved) = level.local_moves(config.resolution, &mut rng);
        if !moved {
            break;
        }
        for l in labels.iter_mut() {
            *l = level_labels[*l];
        }
        let count = level_labels.iter().max().map_or(0, |m| m + 1);
        history.push(modularity_with_resolution(&labels, &simple, config.resolution)?);
        level = level.aggregate(&level_labels, count);
    }

    let labels = renumber(&labels);
    let community_count = labels.iter().max().map_or(0, |m| m + 1);
    let modularity = modularity_with_resolution(&labels, &simple, config.resolution)?;
    Ok(Partition { labels, community_count, modularity, history })
}

/// Community labels for subtree members.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommunityAssignment {
    members: Vec<CategoryId>,
    labels: Vec<u32>,
    modularity: f64,
    history: Vec<f64>,
}

impl CommunityAssignment {
    /// Builds an assignment from explicit labels, renumbering them densely.
    pub fn from_labels(pairs: impl IntoIterator<Item = (CategoryId, u32)>, modularity: f64) -> Self {
        let mut pairs: Vec<(CategoryId, u32)> = pairs.into_iter().collect();
        pairs.sort_unstable();
        pairs.dedup_by_key(|p| p.0);
        let dense = renumber(&pairs.iter().map(|p| p.1 as usize).collect::<Vec<_>>());
        CommunityAssignment {
            members: pairs.iter().map(|p| p.0).collect(),
            labels: dense.into_iter().map(|l| l as u32).collect(),
            modularity,
            history: Vec::new(),
        }
    }

    /// Members in ascending id order, parallel to [`CommunityAssignment::labels`].
    pub fn members(&self) -> &[CategoryId] {
        &self.members
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn community_of(&self, id: CategoryId) -> Option<u32> {
        self.members.binary_search(&id).ok().map(|i| self.labels[i])
    }

    pub fn community_count(&self) -> usize {
        self.labels.iter().max().map_or(0, |&m| m as usize + 1)
    }

    pub fn modularity(&self) -> f64 {
        self.modularity
    }

    pub fn history(&self) -> &[f64] {
        &self.history
    }

    /// Community sizes indexed by community id.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = alloc::vec![0; self.community_count()];
        for &l in &self.labels {
            sizes[l as usize] += 1;
        }
        sizes
    }
}

/// Undirected, unweighted projection of member-to-member parent links, in
/// local indices over the ascending member list.
pub(crate) fn member_edges(subtree: &Subtree, graph: &CategoryGraph) -> (Vec<CategoryId>, Vec<(usize, usize)>) {
    let members: Vec<CategoryId> = subtree.members().collect();
    let mut edges = Vec::new();
    for (local, &id) in members.iter().enumerate() {
        for &parent in graph.parents(id) {
            if let Ok(p) = members.binary_search(&parent) {
                edges.push((local, p));
            }
        }
    }
    (members, edges)
}

pub fn louvain(subtree: &Subtree, graph: &CategoryGraph, config: LouvainConfig) -> Result<CommunityAssignment> {
    let (members, edges) = member_edges(subtree, graph);
    let partition = louvain_edges(members.len(), &edges, config)?;
    Ok(CommunityAssignment {
        members,
        labels: partition.labels.into_iter().map(|l| l as u32).collect(),
        modularity: partition.modularity,
        history: partition.history,
    })
}
