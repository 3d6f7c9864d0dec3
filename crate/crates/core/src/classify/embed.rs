//! Uniform random walks and skip-gram with negative sampling.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CategoryGraph, CategoryId, Subtree};
use crate::math;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbeddingConfig {
    pub dimension: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    /// Initial rate, decayed linearly towards zero over training.
    pub learning_rate: f64,
    pub rng_seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            dimension: 64,
            walks_per_node: 10,
            walk_length: 40,
            window: 5,
            negatives: 5,
            epochs: 3,
            learning_rate: 0.025,
            rng_seed: 0,
        }
    }
}

impl EmbeddingConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = self.walks_per_node > 0
            && self.walk_length > 0
            && self.window > 0
            && self.negatives > 0
            && self.epochs > 0
            && self.learning_rate > 0.0;
        if !positive || self.dimension < 2 {
            return Err(Error::Config(alloc::format!("invalid embedding config {self:?}")));
        }
        Ok(())
    }
}

/// Undirected projection of parent-child links restricted to a node set.
#[derive(Debug, Clone)]
pub struct WalkGraph {
    nodes: Vec<CategoryId>,
    adjacency: Vec<Vec<u32>>,
}

impl WalkGraph {
    pub fn from_subtree(subtree: &Subtree, graph: &CategoryGraph) -> Self {
        Self::from_nodes(&subtree.members().collect(), graph)
    }

    pub fn from_nodes(nodes: &BTreeSet<CategoryId>, graph: &CategoryGraph) -> Self {
        let nodes: Vec<CategoryId> = nodes.iter().copied().collect();
        let local = |id: CategoryId| nodes.binary_search(&id).ok().map(|i| i as u32);
        let adjacency = nodes
            .iter()
            .map(|&id| {
                let mut adj: Vec<u32> =
                    graph.parents(id).iter().chain(graph.children(id)).filter_map(|&n| local(n)).collect();
                adj.sort_unstable();
                adj.dedup();
                adj
            })
            .collect();
        WalkGraph { nodes, adjacency }
    }

    pub fn nodes(&self) -> &[CategoryId] {
        &self.nodes
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// `walks_per_node` rounds; each round starts one walk at every node in id
/// order. A walk stops early at a node without neighbors.
pub fn random_walks(graph: &WalkGraph, cfg: &EmbeddingConfig) -> Vec<Vec<CategoryId>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
    let mut walks = Vec::with_capacity(graph.nodes.len() * cfg.walks_per_node);
    for _ in 0..cfg.walks_per_node {
        for start in 0..graph.nodes.len() {
            let mut walk = Vec::with_capacity(cfg.walk_length);
            let mut current = start;
            walk.push(graph.nodes[current]);
            while walk.len() < cfg.walk_length {
                let adj = &graph.adjacency[current];
                if adj.is_empty() {
                    break;
                }
                current = adj[rng.random_range(0..adj.len())] as usize;
                walk.push(graph.nodes[current]);
            }
            walks.push(walk);
        }
    }
    walks
}

/// Trained node vectors, sorted by category id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeEmbeddings {
    pub dimension: usize,
    pub ids: Vec<CategoryId>,
    pub vectors: Vec<f64>,
    /// Mean loss per (center, context) pair for each epoch.
    pub epoch_losses: Vec<f64>,
}

impl NodeEmbeddings {
    pub fn get(&self, id: CategoryId) -> Option<&[f64]> {
        let i = self.ids.binary_search(&id).ok()?;
        Some(&self.vectors[i * self.dimension..(i + 1) * self.dimension])
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Negative sampling table over unigram counts raised to 0.75.
struct NoiseTable {
    cumulative: Vec<f64>,
}

impl NoiseTable {
    fn new(counts: &[u64]) -> Self {
        let mut acc = 0.0;
        let cumulative = counts
            .iter()
            .map(|&c| {
                acc += math::powf(c as f64, 0.75);
                acc
            })
            .collect();
        NoiseTable { cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> usize {
        let total = *self.cumulative.last().expect("non-empty vocabulary");
        let x = rng.random::<f64>() * total;
        self.cumulative.partition_point(|&c| c <= x).min(self.cumulative.len() - 1)
    }
}

/// Skip-gram with negative sampling over the walk corpus, single-threaded.
pub fn train_node_embeddings(walks: &[Vec<CategoryId>], cfg: &EmbeddingConfig) -> Result<NodeEmbeddings> {
    cfg.validate()?;
    let ids: Vec<CategoryId> = walks.iter().flatten().copied().collect::<BTreeSet<_>>().into_iter().collect();
    if ids.is_empty() {
        return Err(Error::Config("empty walk corpus".into()));
    }
    let index = |id: CategoryId| ids.binary_search(&id).expect("id from corpus");
    let corpus: Vec<Vec<usize>> = walks.iter().map(|w| w.iter().map(|&id| index(id)).collect()).collect();
    let mut counts = alloc::vec![0u64; ids.len()];
    for w in &corpus {
        for &i in w {
            counts[i] += 1;
        }
    }
    let noise = NoiseTable::new(&counts);

    let dim = cfg.dimension;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed ^ 0x005e_ed0f_5eed);
    let mut input: Vec<f64> = (0..ids.len() * dim).map(|_| (rng.random::<f64>() - 0.5) / dim as f64).collect();
    let mut output = alloc::vec![0.0f64; ids.len() * dim];
    let mut grad = alloc::vec![0.0f64; dim];

    let positions: usize = corpus.iter().map(Vec::len).sum();
    let total_steps = (positions * cfg.epochs).max(1) as f64;
    let mut step = 0usize;
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for _ in 0..cfg.epochs {
        let (mut loss, mut pairs) = (0.0f64, 0usize);
        for walk in &corpus {
            for (pos, &center) in walk.iter().enumerate() {
                let lr = cfg.learning_rate * (1.0 - step as f64 / total_steps).max(1e-4);
                step += 1;
                let lo = pos.saturating_sub(cfg.window);
                let hi = (pos + cfg.window + 1).min(walk.len());
                for (ctx_pos, &context) in walk.iter().enumerate().take(hi).skip(lo) {
                    if ctx_pos == pos {
                        continue;
                    }
                    grad.iter_mut().for_each(|g| *g = 0.0);
                    let u = center * dim;
                    for k in 0..=cfg.negatives {
                        let (target, label) = if k == 0 {
                            (context, 1.0)
                        } else {
                            let n = noise.sample(&mut rng);
                            if n == context {
                                continue;
                            }
                            (n, 0.0)
                        };
                        let v = target * dim;
                        let dot: f64 = (0..dim).map(|d| input[u + d] * output[v + d]).sum();
                        loss += if label == 1.0 { math::softplus(-dot) } else { math::softplus(dot) };
                        let g = (label - math::sigmoid(dot)) * lr;
                        for d in 0..dim {
                            grad[d] += g * output[v + d];
                            output[v + d] += g * input[u + d];
                        }
                    }
                    for d in 0..dim {
                        input[u + d] += grad[d];
                    }
                    pairs += 1;
                }
            }
        }
        let mean = if pairs == 0 { 0.0 } else { loss / pairs as f64 };
        if !mean.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: epoch_losses.len() });
        }
        epoch_losses.push(mean);
    }
    Ok(NodeEmbeddings { dimension: dim, ids, vectors: input, epoch_losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{bfs_subtree, GraphBuilder};
    use crate::title::Title;
    use alloc::format;
    use alloc::vec;

    fn two_cliques() -> (CategoryGraph, BTreeSet<CategoryId>) {
        let mut b = GraphBuilder::new().with_implicit_titles(true);
        for side in ["a", "b"] {
            for i in 0..6 {
                for j in 0..i {
                    b.add_category_link(&format!("{side}{i}"), &format!("{side}{j}"));
                }
            }
        }
        let g = b.build();
        let all = g.category_ids().collect();
        (g, all)
    }

    fn cosine(x: &[f64], y: &[f64]) -> f64 {
        let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
        let nx: f64 = x.iter().map(|a| a * a).sum::<f64>();
        let ny: f64 = y.iter().map(|a| a * a).sum::<f64>();
        dot / math::sqrt(nx * ny)
    }

    fn clique_separation(seed: u64) -> (f64, f64, Vec<f64>) {
        let (g, nodes) = two_cliques();
        let wg = WalkGraph::from_nodes(&nodes, &g);
        let cfg = EmbeddingConfig { dimension: 16, walk_length: 20, epochs: 5, rng_seed: seed, ..Default::default() };
        let emb = train_node_embeddings(&random_walks(&wg, &cfg), &cfg).unwrap();
        let side = |id: CategoryId| g.category_title(id).as_str().as_bytes()[0];
        let (mut intra, mut inter, mut ni, mut ne) = (0.0, 0.0, 0, 0);
        for &x in &emb.ids {
            for &y in &emb.ids {
                if x >= y {
                    continue;
                }
                let c = cosine(emb.get(x).unwrap(), emb.get(y).unwrap());
                if side(x) == side(y) {
                    intra += c;
                    ni += 1;
                } else {
                    inter += c;
                    ne += 1;
                }
            }
        }
        (intra / ni as f64, inter / ne as f64, emb.epoch_losses)
    }

    #[test]
    fn cliques_separate() {
        for seed in [1, 2] {
            let (intra, inter, losses) = clique_separation(seed);
            assert!(intra > inter, "seed {seed}: intra {intra} inter {inter}");
            assert!(losses.iter().all(|l| l.is_finite()));
            assert!(losses.last().unwrap() < &losses[0], "{losses:?}");
        }
    }

    #[test]
    fn isolated_node_walks_have_length_one() {
        let mut b = GraphBuilder::new();
        b.add_category("alone");
        let g = b.build();
        let wg = WalkGraph::from_nodes(&[0].into_iter().collect(), &g);
        let walks = random_walks(&wg, &EmbeddingConfig { walks_per_node: 3, ..Default::default() });
        assert_eq!(walks, vec![vec![0], vec![0], vec![0]]);
    }

    #[test]
    fn two_node_path_alternates() {
        let mut b = GraphBuilder::new().with_implicit_titles(true);
        b.add_category_link("b", "a");
        let g = b.build();
        let s = bfs_subtree(&g, &[Title::normalize("a").unwrap()]).unwrap();
        let cfg = EmbeddingConfig { walk_length: 3, walks_per_node: 2, ..Default::default() };
        for w in random_walks(&WalkGraph::from_subtree(&s, &g), &cfg) {
            assert_eq!(w.len(), 3);
            assert!(w.windows(2).all(|p| p[0] != p[1]));
        }
    }

    #[test]
    fn walks_are_reproducible() {
        let (g, nodes) = two_cliques();
        let wg = WalkGraph::from_nodes(&nodes, &g);
        let cfg = EmbeddingConfig { rng_seed: 42, ..Default::default() };
        assert_eq!(random_walks(&wg, &cfg), random_walks(&wg, &cfg));
        let other = EmbeddingConfig { rng_seed: 43, ..cfg };
        assert_ne!(random_walks(&wg, &cfg), random_walks(&wg, &other));
    }

    #[test]
    fn tiny_dimension_stays_finite() {
        let walks = vec![vec![0, 1, 0, 1], vec![1, 0]];
        let cfg = EmbeddingConfig { dimension: 2, epochs: 1, ..Default::default() };
        let emb = train_node_embeddings(&walks, &cfg).unwrap();
        assert!(emb.vectors.iter().all(|v| v.is_finite()));
        assert_eq!(emb.len(), 2);
    }

    #[test]
    fn seed_changes_vectors() {
        let walks = vec![vec![0, 1, 2, 1, 0], vec![2, 1, 0]];
        let a = train_node_embeddings(&walks, &EmbeddingConfig { rng_seed: 1, ..Default::default() }).unwrap();
        let b = train_node_embeddings(&walks, &EmbeddingConfig { rng_seed: 2, ..Default::default() }).unwrap();
        assert_ne!(a.vectors, b.vectors);
        assert!(train_node_embeddings(&[], &EmbeddingConfig::default()).is_err());
    }
}
