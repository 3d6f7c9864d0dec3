//! Independent oracles and fixture generators shared by the integration and
//! acceptance suites. Every `check_*` returns the first discrepancy found.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vocabforge_core::classify::{FeatureVector, Label, LabeledEntry, LabeledSet, MlpConfig, MlpModel, SparseVector};
use vocabforge_core::graph::{bfs_subtree, prune_unreachable};
use vocabforge_core::keyphrase::{lemmatize, tokenize, CompiledLexicon};
use vocabforge_core::{CategoryGraph, CategoryId, GraphBuilder, PruneMode, Title};

pub type Check = Result<(), String>;

// ---------------------------------------------------------------- graphs

pub fn node_title(i: usize) -> String {
    format!("c{i:05}")
}

/// Categories `0..n` get ids equal to their index; edges are `(parent, child)`.
pub fn graph_from_edges(n: usize, edges: &[(usize, usize)]) -> CategoryGraph {
    let mut b = GraphBuilder::new();
    for i in 0..n {
        b.add_category(&node_title(i));
    }
    for &(p, c) in edges {
        b.add_category_link(&node_title(c), &node_title(p));
    }
    b.build()
}

/// Mostly-downward random DAG plus a sprinkling of back edges and self-loops.
pub fn random_edges(n: usize, rng: &mut ChaCha8Rng) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for c in 1..n {
        let parents = rng.random_range(1..=3);
        for _ in 0..parents {
            edges.push((rng.random_range(0..c), c));
        }
    }
    for _ in 0..n / 10 + 1 {
        let a = rng.random_range(0..n);
        let b = rng.random_range(0..n);
        edges.push((a, b));
    }
    // Some nodes become unreachable from the low-numbered seeds.
    edges.retain(|_| rng.random_range(0..20) != 0);
    edges
}

/// Shortest-path depth by Bellman-Ford style relaxation to a fixpoint; `0`
/// marks unreachable nodes.
pub fn oracle_levels(n: usize, edges: &[(usize, usize)], seeds: &[usize], alive: &dyn Fn(usize) -> bool) -> Vec<u32> {
    let mut dist = vec![u32::MAX; n];
    for &s in seeds {
        dist[s] = 1;
    }
    loop {
        let mut changed = false;
        for &(p, c) in edges {
            if p != c && alive(p) && alive(c) && dist[p] != u32::MAX && dist[p] + 1 < dist[c] {
                dist[c] = dist[p] + 1;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    dist.into_iter().map(|d| if d == u32::MAX { 0 } else { d }).collect()
}

fn compare_levels(what: &str, n: usize, got: &vocabforge_core::Subtree, want: &[u32]) -> Check {
    for (i, &w) in want.iter().enumerate().take(n) {
        let g = got.level(i as CategoryId).unwrap_or(0);
        if g != w {
            return Err(format!("{what}: node {i} level {g}, oracle {w}"));
        }
    }
    Ok(())
}

/// BFS membership/levels and both prune modes against the relaxation oracle,
/// plus idempotence and the union-vs-sequential removal identity.
pub fn check_graph_case(seed: u64, n: usize) -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = random_edges(n, &mut rng);
    let g = graph_from_edges(n, &edges);
    let seed_count = rng.random_range(1..=3.min(n));
    let mut seeds: Vec<usize> = (0..n).collect();
    seeds.shuffle(&mut rng);
    seeds.truncate(seed_count);
    let titles: Vec<Title> = seeds.iter().map(|&s| Title::normalize(&node_title(s)).unwrap()).collect();
    let s = bfs_subtree(&g, &titles).map_err(|e| e.to_string())?;
    let want = oracle_levels(n, &edges, &seeds, &|_| true);
    compare_levels("bfs", n, &s, &want)?;
    s.validate(&g).map_err(|e| e.to_string())?;

    let is_seed = |i: usize| seeds.contains(&i);
    let candidates: Vec<usize> = (0..n).filter(|&i| want[i] > 0 && !is_seed(i)).collect();
    let removed: BTreeSet<CategoryId> =
        candidates.iter().filter(|_| rng.random_range(0..20) == 0).map(|&i| i as CategoryId).collect();

    let (reach, counts) = prune_unreachable(&s, &g, &removed, PruneMode::Reachability).map_err(|e| e.to_string())?;
    let want_reach = oracle_levels(n, &edges, &seeds, &|i| want[i] > 0 && !removed.contains(&(i as CategoryId)));
    compare_levels("reachability", n, &reach, &want_reach)?;
    if counts.before - counts.removed_direct - counts.removed_propagated != counts.remaining {
        return Err(format!("count identity broken: {counts:?}"));
    }

    let mut killed = removed.clone();
    for &(p, c) in &edges {
        if removed.contains(&(p as CategoryId)) && want[c] > 0 && !is_seed(c) {
            killed.insert(c as CategoryId);
        }
    }
    let (strict, _) = prune_unreachable(&s, &g, &removed, PruneMode::StrictChildren).map_err(|e| e.to_string())?;
    let want_strict = oracle_levels(n, &edges, &seeds, &|i| want[i] > 0 && !killed.contains(&(i as CategoryId)));
    compare_levels("strict", n, &strict, &want_strict)?;

    let (again, _) =
        prune_unreachable(&reach, &g, &BTreeSet::new(), PruneMode::Reachability).map_err(|e| e.to_string())?;
    if again.members().collect::<Vec<_>>() != reach.members().collect::<Vec<_>>() {
        return Err("reachability prune is not idempotent".into());
    }

    let (r1, r2): (BTreeSet<_>, BTreeSet<_>) = removed.iter().partition(|&&id| id % 2 == 0);
    let (step1, _) = prune_unreachable(&s, &g, &r1, PruneMode::Reachability).map_err(|e| e.to_string())?;
    let r2: BTreeSet<CategoryId> = r2.into_iter().filter(|&id| step1.contains(id)).collect();
    let (step2, _) = prune_unreachable(&step1, &g, &r2, PruneMode::Reachability).map_err(|e| e.to_string())?;
    if step2.members().collect::<Vec<_>>() != reach.members().collect::<Vec<_>>() {
        return Err("sequential removal differs from union removal".into());
    }
    Ok(())
}

// ---------------------------------------------------------------- modularity

/// All set partitions of `0..n` as restricted-growth strings.
pub fn set_partitions(n: usize) -> Vec<Vec<usize>> {
    fn grow(prefix: &mut Vec<usize>, max: usize, n: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == n {
            out.push(prefix.clone());
            return;
        }
        for c in 0..=max + 1 {
            prefix.push(c);
            grow(prefix, max.max(c), n, out);
            prefix.pop();
        }
    }
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    grow(&mut vec![0], 0, n, &mut out);
    out
}

/// `Q = 1/2m Σ_ij [A_ij - k_i k_j / 2m] δ(c_i, c_j)` over the adjacency matrix.
pub fn oracle_modularity(n: usize, edges: &[(usize, usize)], part: &[usize]) -> f64 {
    let mut a = vec![vec![0.0f64; n]; n];
    for &(u, v) in edges {
        a[u][v] += 1.0;
        a[v][u] += 1.0;
    }
    let k: Vec<f64> = a.iter().map(|row| row.iter().sum()).collect();
    let two_m: f64 = k.iter().sum();
    if two_m == 0.0 {
        return 0.0;
    }
    let mut q = 0.0;
    for i in 0..n {
        for j in 0..n {
            if part[i] == part[j] {
                q += a[i][j] - k[i] * k[j] / two_m;
            }
        }
    }
    q / two_m
}

pub fn best_partition(n: usize, edges: &[(usize, usize)]) -> (f64, Vec<usize>) {
    set_partitions(n)
        .into_iter()
        .map(|p| (oracle_modularity(n, edges, &p), p))
        .max_by(|a, b| a.0.total_cmp(&b.0))
        .expect("at least one partition")
}

pub fn clique(nodes: std::ops::Range<usize>) -> Vec<(usize, usize)> {
    let v: Vec<usize> = nodes.collect();
    let mut e = Vec::new();
    for (i, &a) in v.iter().enumerate() {
        for &b in &v[i + 1..] {
            e.push((a, b));
        }
    }
    e
}

pub fn two_triangles_bridge() -> (usize, Vec<(usize, usize)>) {
    let mut e = clique(0..3);
    e.extend(clique(3..6));
    e.push((2, 3));
    (6, e)
}

/// A named undirected graph: `(name, node count, edges)`.
pub type NamedGraph<N> = (N, usize, Vec<(usize, usize)>);

/// Fixtures with clear community structure (cliques joined by at most one bridge).
pub fn separable_fixtures() -> Vec<NamedGraph<&'static str>> {
    let (n, tb) = two_triangles_bridge();
    let mut disjoint = clique(0..3);
    disjoint.extend(clique(3..6));
    let mut k4k4 = clique(0..4);
    k4k4.extend(clique(4..8));
    k4k4.push((3, 4));
    let mut k4k4_apart = clique(0..4);
    k4k4_apart.extend(clique(4..8));
    let mut three = clique(0..3);
    three.extend(clique(3..6));
    three.extend(clique(6..8));
    let mut k3k5 = clique(0..3);
    k3k5.extend(clique(3..8));
    k3k5.push((0, 7));
    vec![
        ("two triangles + bridge", n, tb),
        ("two disjoint triangles", 6, disjoint),
        ("two K4 + bridge", 8, k4k4),
        ("two disjoint K4", 8, k4k4_apart),
        ("K3 + K3 + K2", 8, three),
        ("K3 + K5 + bridge", 8, k3k5),
    ]
}

/// Separable fixtures plus unstructured graphs, all with n ≤ 8.
pub fn small_fixtures(seed: u64) -> Vec<NamedGraph<String>> {
    let mut out: Vec<NamedGraph<String>> =
        separable_fixtures().into_iter().map(|(name, n, e)| (name.to_string(), n, e)).collect();
    out.push(("path of 8".into(), 8, (0..7).map(|i| (i, i + 1)).collect()));
    out.push(("cycle of 7".into(), 7, (0..7).map(|i| (i, (i + 1) % 7)).collect()));
    out.push(("star of 6".into(), 6, (1..6).map(|i| (0, i)).collect()));
    out.push(("single edge".into(), 2, vec![(0, 1)]));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..6 {
        let n = rng.random_range(3..=8);
        let mut e = Vec::new();
        for a in 0..n {
            for b in a + 1..n {
                if rng.random_bool(0.4) {
                    e.push((a, b));
                }
            }
        }
        if e.is_empty() {
            e.push((0, 1));
        }
        out.push((format!("random #{k}"), n, e));
    }
    out
}

// ---------------------------------------------------------------- matcher

const WORDS: &[&str] = &[
    "neural",
    "network",
    "networks",
    "fuzzy",
    "system",
    "systems",
    "immune",
    "artificial",
    "radio",
    "frequency",
    "identification",
    "data",
    "mining",
    "learning",
    "learned",
    "machine",
    "deep",
    "maximum",
    "likelihood",
    "estimation",
    "graph",
    "graphs",
    "the",
    "of",
];
const SEPARATORS: &[&str] = &[" ", " ", " ", "-", ", ", ". ", " (", ") ", "\n", "/"];

pub fn random_matcher_case(rng: &mut ChaCha8Rng) -> (Vec<String>, String) {
    let term_count = rng.random_range(1..=30);
    let terms = (0..term_count)
        .map(|_| {
            let len = rng.random_range(1..=4);
            (0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
        })
        .collect();
    let words = rng.random_range(0..=80);
    let mut text = String::new();
    for i in 0..words {
        if i > 0 {
            text.push_str(SEPARATORS[rng.random_range(0..SEPARATORS.len())]);
        }
        let w = WORDS[rng.random_range(0..WORDS.len())];
        if rng.random_bool(0.1) {
            text.push_str(&w.to_uppercase());
        } else {
            text.push_str(w);
        }
    }
    (terms, text)
}

/// Every pattern key found by sliding it over the lemmatized token stream.
pub fn naive_extract(lexicon: &CompiledLexicon, text: &str) -> BTreeMap<String, Vec<(usize, usize)>> {
    let tokens = tokenize(text);
    let lemmas: Vec<String> = tokens.iter().map(|t| lemmatize(&t.text)).collect();
    let mut out = BTreeMap::new();
    for key in lexicon.keys() {
        let pat: Vec<&str> = key.split(' ').collect();
        let mut spans = Vec::new();
        for start in 0..lemmas.len() {
            if start + pat.len() <= lemmas.len() && (0..pat.len()).all(|k| lemmas[start + k] == pat[k]) {
                spans.push((tokens[start].start, tokens[start + pat.len() - 1].end));
            }
        }
        if !spans.is_empty() {
            out.insert(key.to_string(), spans);
        }
    }
    out
}

pub fn automaton_extract(lexicon: &CompiledLexicon, text: &str) -> BTreeMap<String, Vec<(usize, usize)>> {
    lexicon
        .extract(text)
        .matches
        .into_iter()
        .map(|(id, spans)| {
            let mut spans: Vec<(usize, usize)> = spans.into_iter().map(|s| (s.start, s.end)).collect();
            spans.sort_unstable();
            (lexicon.key(id).to_string(), spans)
        })
        .collect()
}

/// Runs `cases` randomized lexicon/text pairs; returns the number checked.
pub fn check_matcher_cases(cases: usize, seed: u64) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for case in 0..cases {
        let (terms, text) = random_matcher_case(&mut rng);
        let lexicon = CompiledLexicon::compile(&terms).map_err(|e| format!("case {case}: {e}"))?;
        let got = automaton_extract(&lexicon, &text);
        let want = naive_extract(&lexicon, &text);
        if got != want {
            return Err(format!("case {case}: terms {terms:?} text {text:?}\n got {got:?}\nwant {want:?}"));
        }
    }
    Ok(cases)
}

// ---------------------------------------------------------------- statistics

pub fn two_pass_stddev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// `(value, fraction of values <= value)` for each distinct value.
pub fn oracle_ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let distinct: BTreeSet<u64> = values.iter().map(|v| v.to_bits()).collect();
    let mut points: Vec<(f64, f64)> = distinct
        .into_iter()
        .map(f64::from_bits)
        .map(|v| (v, values.iter().filter(|&&x| x <= v).count() as f64 / values.len() as f64))
        .collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0));
    points
}

// ---------------------------------------------------------------- classifier

fn dense(x: Vec<f64>) -> FeatureVector {
    FeatureVector { graph: x, text: SparseVector { dimension: 0, entries: vec![] } }
}

/// `n` points in [-3, 3]², labeled by the side of the line x + y = 0, with
/// a band of width 1.0 around the separator left empty.
pub fn separable_set(n: usize, seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(n);
    while entries.len() < n {
        let x: f64 = rng.random_range(-3.0..3.0);
        let y: f64 = rng.random_range(-3.0..3.0);
        let d = (x + y) / std::f64::consts::SQRT_2;
        if d.abs() < 0.5 {
            continue;
        }
        let label = if d > 0.0 { Label::Positive } else { Label::Negative };
        let want = if entries.len() % 2 == 0 { Label::Positive } else { Label::Negative };
        if label != want {
            continue;
        }
        entries.push(LabeledEntry { id: entries.len() as CategoryId, features: dense(vec![x, y]), label });
    }
    LabeledSet::new(entries).expect("distinct ids")
}

pub fn permuted_labels(set: &LabeledSet, seed: u64) -> LabeledSet {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut labels: Vec<Label> = set.entries().iter().map(|e| e.label).collect();
    labels.shuffle(&mut rng);
    let entries = set.entries().iter().zip(labels).map(|(e, label)| LabeledEntry { label, ..e.clone() }).collect();
    LabeledSet::new(entries).expect("distinct ids")
}

fn random_input(rng: &mut ChaCha8Rng, graph_dim: usize, text_dim: usize, scale: f64) -> FeatureVector {
    let graph = (0..graph_dim).map(|_| rng.random_range(-scale..scale)).collect();
    let mut idx: Vec<u32> = (0..text_dim as u32).collect();
    idx.shuffle(rng);
    let mut picked: Vec<u32> = idx.into_iter().take(rng.random_range(0..=text_dim.min(5))).collect();
    picked.sort_unstable();
    let mut entries: Vec<(u32, f64)> = picked.into_iter().map(|i| (i, rng.random_range(0.1..1.0))).collect();
    let norm = entries.iter().map(|e| e.1 * e.1).sum::<f64>().sqrt();
    entries.iter_mut().for_each(|e| e.1 /= norm.max(f64::MIN_POSITIVE));
    FeatureVector { graph, text: SparseVector { dimension: text_dim, entries } }
}

/// Largest relative error between analytic and central-difference gradients
/// (step 1e-5) over `probes` random (input, label) pairs, every parameter.
pub fn max_gradient_error(probes: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let h = 1e-5;
    for probe in 0..probes {
        let cfg = MlpConfig { hidden: 8, rng_seed: seed + probe as u64, ..Default::default() };
        let mut model = MlpModel::init(4, 16, &cfg, 0);
        for v in model.b1.iter_mut() {
            *v = rng.random_range(-0.5..0.5);
        }
        let x = random_input(&mut rng, 4, 16, 2.0);
        let label = if rng.random_bool(0.5) { Label::Positive } else { Label::Negative };
        let grad = model.gradient(&x, label).expect("dimensions match");
        for p in 0..model.parameter_count() {
            let orig = model.parameter(p);
            model.set_parameter(p, orig + h);
            let up = model.loss(&x, label).unwrap();
            model.set_parameter(p, orig - h);
            let down = model.loss(&x, label).unwrap();
            model.set_parameter(p, orig);
            let numeric = (up - down) / (2.0 * h);
            let analytic = grad.component(&model, p);
            let err = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(err);
        }
    }
    worst
}

/// Largest |p0 + p1 - 1| for random inputs in [-100, 100].
pub fn max_softmax_deviation(samples: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let model = MlpModel::init(6, 8, &MlpConfig { hidden: 16, rng_seed: seed, ..Default::default() }, 0);
    (0..samples)
        .map(|_| {
            let x = random_input(&mut rng, 6, 8, 100.0);
            let out = model.output(&x).unwrap();
            assert!(out.iter().all(|p| p.is_finite()));
            (out[0] + out[1] - 1.0).abs()
        })
        .fold(0.0, f64::max)
}
