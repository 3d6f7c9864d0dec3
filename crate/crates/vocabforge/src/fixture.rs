//! Synthetic desk-scale dataset with planted structure.
//!
//! The generated category graph holds a relevant computing tree under three
//! seeds, plus irrelevant material planted so that each pruning stage has
//! something to catch:
//!
//! * arts branches hanging directly off the seeds (level 2), labeled
//!   irrelevant in the annotation file;
//! * a dense philosophy cluster attached to the computing tree by a single
//!   edge, invisible to annotation (level ≥ 4) but isolated by communities;
//! * arts-vocabulary leaves below relevant categories at level ≥ 4, which
//!   only the classifier can tell apart;
//! * administrative "… by subject" and "acme …" categories for the rules.
//!
//! Back and cross edges add cycles, and a chain reaches level 9 so core and
//! ancillary terms both occur. Pages, redirects (including a chain, a cycle
//! and an over-long chain), a keyphrase corpus, reference lists, rules, the
//! annotation files, equivalent MediaWiki SQL dumps and `truth.json` are
//! written next to a ready-to-run `config.toml`.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{AppError, Result};
use crate::formats::write_atomic;

pub const FIXTURE_SEEDS: [&str; 3] = ["computer science", "information science", "statistics"];

const CS_ADJ: [&str; 24] = [
    "distributed",
    "parallel",
    "quantum",
    "probabilistic",
    "numerical",
    "statistical",
    "computational",
    "formal",
    "secure",
    "embedded",
    "adaptive",
    "stochastic",
    "discrete",
    "algebraic",
    "neural",
    "semantic",
    "symbolic",
    "concurrent",
    "relational",
    "bayesian",
    "linear",
    "combinatorial",
    "digital",
    "cognitive",
];
const CS_NOUN: [&str; 12] = [
    "algorithms",
    "computing",
    "systems",
    "learning",
    "networks",
    "databases",
    "protocols",
    "cryptography",
    "optimization",
    "programming",
    "analysis",
    "models",
];
const ARTS_ADJ: [&str; 14] = [
    "baroque",
    "renaissance",
    "impressionist",
    "romantic",
    "medieval",
    "folk",
    "gothic",
    "rococo",
    "modernist",
    "surrealist",
    "byzantine",
    "victorian",
    "flemish",
    "cubist",
];
const ARTS_NOUN: [&str; 12] = [
    "painting",
    "sculpture",
    "opera",
    "poetry",
    "ballet",
    "theatre",
    "tapestry",
    "pottery",
    "choral music",
    "frescoes",
    "novels",
    "dance",
];
const ARTS_PAGE: [&str; 8] =
    ["portraits", "altarpieces", "librettos", "sonnets", "costumes", "murals", "ceramics", "hymns"];
const PHIL_ADJ: [&str; 10] = [
    "stoic",
    "platonic",
    "existentialist",
    "scholastic",
    "pragmatist",
    "idealist",
    "cynic",
    "epicurean",
    "skeptic",
    "hegelian",
];
const PHIL_NOUN: [&str; 8] =
    ["ethics", "metaphysics", "epistemology", "aesthetics", "ontology", "theodicy", "virtue", "dialectics"];
const PAGE_NAME: [&str; 20] = [
    "bayes",
    "markov",
    "turing",
    "shannon",
    "huffman",
    "dijkstra",
    "fourier",
    "kalman",
    "viterbi",
    "hamming",
    "gauss",
    "newton",
    "euler",
    "boolean",
    "lambda",
    "monte carlo",
    "bloom",
    "merkle",
    "rabin",
    "knuth",
];
const PAGE_KIND: [&str; 12] = [
    "algorithm",
    "method",
    "theorem",
    "filter",
    "code",
    "chain",
    "transform",
    "test",
    "estimator",
    "heuristic",
    "tree",
    "machine",
];
const UNIGRAM_PAGES: [&str; 8] =
    ["entropy", "compiler", "bootstrapping", "hashing", "recursion", "overfitting", "kernel", "checksum"];
const GENERIC_PHRASES: [&str; 8] = [
    "experimental evaluation",
    "case study",
    "novel approach",
    "empirical results",
    "proposed framework",
    "benchmark comparison",
    "open problems",
    "future directions",
];

/// Size parameters of a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureSpec {
    pub categories: usize,
    pub pages: usize,
    pub docs: usize,
    pub seed: u64,
}

impl Default for FixtureSpec {
    fn default() -> Self {
        FixtureSpec { categories: 200, pages: 500, docs: 30, seed: 7 }
    }
}

pub const MIN_CATEGORIES: usize = 60;

/// Planted ground truth, written to `truth.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: FixtureSpec,
    pub seeds: Vec<String>,
    /// Relevant categories, seeds included.
    pub relevant: Vec<String>,
    /// Irrelevant categories keyed by the stage expected to remove them.
    pub irrelevant: BTreeMap<String, Vec<String>>,
    pub pages: Vec<String>,
    pub redirects: BTreeMap<String, Vec<(String, String)>>,
    pub max_level: u32,
}

impl Truth {
    pub fn irrelevant_all(&self) -> BTreeSet<&str> {
        self.irrelevant.values().flatten().map(String::as_str).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Kind {
    Seed,
    Relevant,
    Arts,
    Cluster,
    ArtsLeaf,
    Rule,
}

struct Node {
    title: String,
    kind: Kind,
}

struct Builder {
    rng: ChaCha8Rng,
    nodes: Vec<Node>,
    /// `(child, parent)` in creation order.
    edges: Vec<(usize, usize)>,
    used: BTreeSet<String>,
    names: BTreeMap<&'static str, (Vec<String>, usize)>,
}

impl Builder {
    fn name_pool(rng: &mut ChaCha8Rng, adj: &[&str], noun: &[&str]) -> Vec<String> {
        let mut pool: Vec<String> = adj.iter().flat_map(|a| noun.iter().map(move |n| format!("{a} {n}"))).collect();
        pool.shuffle(rng);
        pool
    }

    /// Next unused title from the named pool, numbered once the pool runs dry.
    fn fresh(&mut self, pool: &'static str) -> String {
        loop {
            let (names, next) = self.names.get_mut(pool).expect("pool exists");
            let i = *next;
            *next += 1;
            let t = if i < names.len() {
                names[i].clone()
            } else {
                format!("{} {}", names[i % names.len()], i / names.len() + 1)
            };
            if self.used.insert(t.clone()) {
                return t;
            }
        }
    }

    fn add(&mut self, title: String, kind: Kind) -> usize {
        self.used.insert(title.clone());
        self.nodes.push(Node { title, kind });
        self.nodes.len() - 1
    }

    fn link(&mut self, child: usize, parent: usize) {
        if child != parent && !self.edges.contains(&(child, parent)) {
            self.edges.push((child, parent));
        }
    }

    /// Shortest-path levels from the seeds, seeds at level 1, 0 when unreachable.
    fn levels(&self) -> Vec<u32> {
        let mut children = vec![Vec::new(); self.nodes.len()];
        for &(c, p) in &self.edges {
            children[p].push(c);
        }
        let mut levels = vec![0u32; self.nodes.len()];
        let mut queue = VecDeque::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if n.kind == Kind::Seed {
                levels[i] = 1;
                queue.push_back(i);
            }
        }
        while let Some(n) = queue.pop_front() {
            for &c in &children[n] {
                if levels[c] == 0 {
                    levels[c] = levels[n] + 1;
                    queue.push_back(c);
                }
            }
        }
        levels
    }
}

/// Underscore form with a capital first letter, as titles appear in dumps.
fn dump_title(t: &str) -> String {
    let mut s = t.replace(' ', "_");
    if let Some(f) = s.get(..1) {
        let up = f.to_uppercase();
        s.replace_range(..1, &up);
    }
    s
}

fn sql_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('\'');
    for c in s.chars() {
        match c {
            '\\' => out.push_str("\\\\"),
            '\'' => out.push_str("\\'"),
            '"' => out.push_str("\\\""),
            '\n' => out.push_str("\\n"),
            '\r' => out.push_str("\\r"),
            '\0' => out.push_str("\\0"),
            '\u{1a}' => out.push_str("\\Z"),
            c => out.push(c),
        }
    }
    out.push('\'');
    out
}

/// A dump-style SQL file with batched multi-row INSERT statements.
fn sql_dump(table: &str, columns: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = String::new();
    let _ =
        writeln!(out, "-- MySQL dump 10.19  Distrib 10.3.38-MariaDB\n--\n-- Table structure for table `{table}`\n--\n");
    let _ =
        writeln!(out, "DROP TABLE IF EXISTS `{table}`;\n/*!40101 SET @saved_cs_client = @@character_set_client */;");
    let _ = writeln!(out, "CREATE TABLE `{table}` (");
    for (i, c) in columns.iter().enumerate() {
        let _ =
            writeln!(out, "  `{c}` varbinary(255) NOT NULL DEFAULT ''{}", if i + 1 < columns.len() { "," } else { "" });
    }
    let _ = writeln!(out, ") ENGINE=InnoDB DEFAULT CHARSET=binary;\n\nLOCK TABLES `{table}` WRITE;");
    for batch in rows.chunks(40) {
        let _ = write!(out, "INSERT INTO `{table}` VALUES ");
        for (i, row) in batch.iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            let _ = write!(out, "({})", row.join(","));
        }
        out.push_str(";\n");
    }
    out.push_str("UNLOCK TABLES;\n");
    out
}

/// Writes the dataset into `dir` and returns the planted truth.
pub fn gen_fixture(dir: &Path, spec: FixtureSpec) -> Result<Truth> {
    if spec.categories < MIN_CATEGORIES || spec.pages == 0 || spec.docs == 0 {
        return Err(AppError::Usage(format!(
            "fixture needs at least {MIN_CATEGORIES} categories and positive page and document counts"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut names = BTreeMap::new();
    names.insert("cs", (Builder::name_pool(&mut rng, &CS_ADJ, &CS_NOUN), 0));
    names.insert("arts", (Builder::name_pool(&mut rng, &ARTS_ADJ, &ARTS_NOUN), 0));
    names.insert("phil", (Builder::name_pool(&mut rng, &PHIL_ADJ, &PHIL_NOUN), 0));
    let mut b = Builder { rng, nodes: Vec::new(), edges: Vec::new(), used: BTreeSet::new(), names };

    let n = spec.categories;
    let arts_total = n * 30 / 100;
    let arts_roots = (n * 4 / 100).max(3);
    let cluster_size = (n * 6 / 100).max(6);
    let arts_leaves = (n * 7 / 100).max(4);
    let by_subject = (n / 70).max(2);
    let rule_total = by_subject + 3 + 2;
    let relevant_total = n - FIXTURE_SEEDS.len() - arts_total - cluster_size - arts_leaves - rule_total;

    // Relevant tree: seeds, a chain reaching level 9, then random attachment
    // below shallow members with bounded fan-out.
    let seeds: Vec<usize> = FIXTURE_SEEDS.iter().map(|s| b.add(s.to_string(), Kind::Seed)).collect();
    let mut relevant: Vec<usize> = Vec::new();
    let mut depth: Vec<u32> = vec![1; seeds.len()];
    let mut fanout: Vec<usize> = vec![0; seeds.len()];
    let mut parent = seeds[0];
    for _ in 0..8 {
        let t = b.fresh("cs");
        let id = b.add(t, Kind::Relevant);
        b.link(id, parent);
        depth.push(depth[parent] + 1);
        fanout.push(0);
        fanout[parent] += 1;
        relevant.push(id);
        parent = id;
    }
    while relevant.len() < relevant_total {
        let candidates: Vec<usize> =
            seeds.iter().chain(&relevant).copied().filter(|&i| depth[i] <= 5 && fanout[i] < 4).collect();
        let p = *candidates.choose(&mut b.rng).expect("open slots remain");
        let t = b.fresh("cs");
        let id = b.add(t, Kind::Relevant);
        b.link(id, p);
        depth.push(depth[p] + 1);
        fanout.push(0);
        fanout[p] += 1;
        relevant.push(id);
    }
    // Cross edges that never shorten a path, and back edges closing cycles.
    let tree_levels = b.levels();
    for _ in 0..n / 20 {
        let c = *relevant.choose(&mut b.rng).expect("relevant");
        let p = *relevant.choose(&mut b.rng).expect("relevant");
        if tree_levels[p] >= tree_levels[c] {
            b.link(c, p);
        }
    }
    for _ in 0..n / 25 {
        let deep =
            **relevant.iter().filter(|&&i| tree_levels[i] >= 4).collect::<Vec<_>>().choose(&mut b.rng).expect("deep");
        let shallow = **relevant
            .iter()
            .filter(|&&i| tree_levels[i] == 2)
            .collect::<Vec<_>>()
            .choose(&mut b.rng)
            .expect("shallow");
        b.link(shallow, deep);
    }
    let levels = b.levels();
    let deep_relevant: Vec<usize> = relevant.iter().copied().filter(|&i| levels[i] >= 3).collect();
    let leaf_relevant: BTreeSet<usize> = {
        let parents: BTreeSet<usize> = b.edges.iter().map(|&(_, p)| p).collect();
        relevant.iter().copied().filter(|i| !parents.contains(i)).collect()
    };

    // Arts branches under the seeds: roots at level 2, children and grandchildren.
    let mut arts = Vec::new();
    for r in 0..arts_roots {
        let t = b.fresh("arts");
        let id = b.add(t, Kind::Arts);
        b.link(id, seeds[r % seeds.len()]);
        arts.push(id);
    }
    // Shallow branches (levels 2-4) so every arts category lies within the
    // annotated categories or their children, the classifier's negative pool.
    let mut arts_level: Vec<u32> = vec![2; arts.len()];
    while arts.len() < arts_total {
        let open: Vec<usize> = (0..arts.len()).filter(|&k| arts_level[k] <= 3).collect();
        let k = *open.choose(&mut b.rng).expect("arts");
        let p = arts[k];
        arts_level.push(arts_level[k] + 1);
        let t = b.fresh("arts");
        let id = b.add(t, Kind::Arts);
        b.link(id, p);
        arts.push(id);
    }
    // Cross-domain co-parents: annotated arts categories at level 3 also sit
    // below a deep relevant category, so graph position alone does not
    // separate the classifier's negatives from its positives.
    for k in 0..arts.len() {
        if arts_level[k] == 3 && b.rng.random_bool(0.6) {
            let p = *deep_relevant.choose(&mut b.rng).expect("deep");
            b.link(arts[k], p);
        }
    }

    // Philosophy cluster behind one bridge from a relevant leaf at level ≥ 3.
    let bridge = **deep_relevant
        .iter()
        .filter(|i| leaf_relevant.contains(i))
        .collect::<Vec<_>>()
        .choose(&mut b.rng)
        .expect("deep relevant leaf");
    let mut cluster = Vec::new();
    for _ in 0..cluster_size {
        let t = b.fresh("phil");
        cluster.push(b.add(t, Kind::Cluster));
    }
    b.link(cluster[0], bridge);
    for i in 1..cluster.len() {
        for j in 0..i {
            if j == 0 || b.rng.random_bool(0.6) {
                b.link(cluster[i], cluster[j]);
            }
        }
    }
    // One edge back up closes a cycle inside the cluster.
    b.link(cluster[0], cluster[cluster.len() - 1]);

    // Arts-vocabulary leaves under relevant categories at level ≥ 3.
    for _ in 0..arts_leaves {
        let p = **deep_relevant.iter().filter(|&&i| i != bridge).collect::<Vec<_>>().choose(&mut b.rng).expect("deep");
        let t = b.fresh("arts");
        let id = b.add(t, Kind::ArtsLeaf);
        b.link(id, p);
    }

    // Rule targets.
    let rule_parent = |b: &mut Builder| *deep_relevant.choose(&mut b.rng).expect("deep");
    for k in 0..by_subject {
        let noun = CS_NOUN[k % CS_NOUN.len()];
        let t = format!("{noun} by subject");
        let t = if b.used.contains(&t) { format!("{noun} by subject {k}") } else { t };
        let id = b.add(t, Kind::Rule);
        let p = rule_parent(&mut b);
        b.link(id, p);
    }
    let scheme = b.add("classification system by subject".into(), Kind::Rule);
    let p = rule_parent(&mut b);
    b.link(scheme, p);
    for t in ["dewey decimal classification", "universal decimal classification"] {
        let id = b.add(t.into(), Kind::Rule);
        b.link(id, scheme);
    }
    for t in ["acme computing products", "acme software releases"] {
        let id = b.add(t.into(), Kind::Rule);
        let p = rule_parent(&mut b);
        b.link(id, p);
    }
    debug_assert_eq!(b.nodes.len(), n);

    let levels = b.levels();
    let title = |i: usize| b.nodes[i].title.clone();

    // Pages: mostly under relevant categories, some shared, some irrelevant.
    let mut page_pool: Vec<String> =
        PAGE_NAME.iter().flat_map(|a| PAGE_KIND.iter().map(move |k| format!("{a} {k}"))).collect();
    page_pool.shuffle(&mut b.rng);
    let mut arts_pages: Vec<String> =
        ARTS_ADJ.iter().flat_map(|a| ARTS_PAGE.iter().map(move |k| format!("{a} {k}"))).collect();
    arts_pages.shuffle(&mut b.rng);
    let relevant_cats: Vec<usize> = seeds.iter().chain(&relevant).copied().collect();
    let irrelevant_cats: Vec<usize> =
        (0..n).filter(|&i| !matches!(b.nodes[i].kind, Kind::Seed | Kind::Relevant)).collect();
    let mut pages: Vec<String> = Vec::new();
    let mut page_links: Vec<(String, usize)> = Vec::new();
    let mut page_used: BTreeSet<String> = b.used.clone();
    let mut relevant_pages = Vec::new();
    let (mut next_cs, mut next_arts) = (0usize, 0usize);
    for k in 0..spec.pages {
        let is_relevant = k % 10 < 7;
        let t = if k == 0 {
            "bayes' theorem".to_string()
        } else if is_relevant && k / 10 < UNIGRAM_PAGES.len() && k % 10 == 1 {
            UNIGRAM_PAGES[k / 10].to_string()
        } else {
            loop {
                let t = if is_relevant {
                    next_cs += 1;
                    let i = next_cs - 1;
                    if i < page_pool.len() {
                        page_pool[i].clone()
                    } else {
                        format!("{} {}", page_pool[i % page_pool.len()], i / page_pool.len() + 1)
                    }
                } else {
                    next_arts += 1;
                    let i = next_arts - 1;
                    if i < arts_pages.len() {
                        arts_pages[i].clone()
                    } else {
                        format!("{} {}", arts_pages[i % arts_pages.len()], i / arts_pages.len() + 1)
                    }
                };
                if !page_used.contains(&t) {
                    break t;
                }
            }
        };
        page_used.insert(t.clone());
        let cats = if is_relevant || k == 0 { &relevant_cats } else { &irrelevant_cats };
        let c = *cats.choose(&mut b.rng).expect("categories");
        page_links.push((t.clone(), c));
        if b.rng.random_bool(0.1) {
            let c2 = *cats.choose(&mut b.rng).expect("categories");
            if c2 != c {
                page_links.push((t.clone(), c2));
            }
        }
        if is_relevant || k == 0 {
            relevant_pages.push(t.clone());
        }
        pages.push(t);
    }

    // Redirects: plain aliases, a two-step chain, a cycle, a seven-step chain.
    let mut redirects: BTreeMap<String, Vec<(String, String)>> = BTreeMap::new();
    let mut plain = Vec::new();
    for (k, p) in relevant_pages.iter().enumerate().filter(|(k, _)| k % 6 == 2) {
        let alias = if k % 12 == 2 { format!("{p} (computing)") } else { format!("the {p}") };
        plain.push((alias, p.clone()));
    }
    let target = relevant_pages[relevant_pages.len() / 2].clone();
    let chain =
        vec![(format!("{target} (short)"), format!("{target} (long)")), (format!("{target} (long)"), target.clone())];
    let cycle = vec![
        ("circular alias one".to_string(), "circular alias two".to_string()),
        ("circular alias two".to_string(), "circular alias one".to_string()),
    ];
    let far = relevant_pages[relevant_pages.len() / 3].clone();
    let mut long_chain = Vec::new();
    for s in 1..=7 {
        let from = format!("{far} (hop {s})");
        let to = if s == 7 { far.clone() } else { format!("{far} (hop {})", s + 1) };
        long_chain.push((from, to));
    }
    redirects.insert("plain".into(), plain);
    redirects.insert("chain".into(), chain);
    redirects.insert("cycle".into(), cycle);
    redirects.insert("long_chain".into(), long_chain);
    let all_redirects: Vec<(String, String)> = redirects.values().flatten().cloned().collect();

    // TSV graph files.
    let mut titles_tsv = String::new();
    for (i, node) in b.nodes.iter().enumerate() {
        let _ = writeln!(titles_tsv, "{}\t{}\t14", i + 1, node.title);
    }
    for (k, p) in pages.iter().enumerate() {
        let _ = writeln!(titles_tsv, "{}\t{p}\t0", n + k + 1);
    }
    let mut edges_tsv = String::from("# child\tparent\n");
    for &(c, p) in &b.edges {
        let _ = writeln!(edges_tsv, "{}\t{}", dump_title(&b.nodes[c].title), b.nodes[p].title);
    }
    let mut pages_tsv = String::new();
    for (pg, c) in &page_links {
        let _ = writeln!(pages_tsv, "{pg}\t{}", title(*c));
    }
    let mut redirects_tsv = String::new();
    for (a, t) in &all_redirects {
        let _ = writeln!(redirects_tsv, "{a}\t{t}");
    }
    write_atomic(&dir.join("titles.tsv"), titles_tsv.as_bytes())?;
    write_atomic(&dir.join("cat_edges.tsv"), edges_tsv.as_bytes())?;
    write_atomic(&dir.join("cat_pages.tsv"), pages_tsv.as_bytes())?;
    write_atomic(&dir.join("redirects.tsv"), redirects_tsv.as_bytes())?;

    // Equivalent SQL dumps. Page ids: categories, pages, redirect aliases,
    // then one file page whose link the loader skips.
    let q = |s: &str| sql_escape(&dump_title(s));
    let mut page_rows = Vec::new();
    let mut page_id: BTreeMap<String, usize> = BTreeMap::new();
    let push_page = |rows: &mut Vec<Vec<String>>, ns: u32, t: &str, redirect: bool| {
        let id = rows.len() + 1;
        rows.push(vec![
            id.to_string(),
            ns.to_string(),
            q(t),
            u8::from(redirect).to_string(),
            "0".into(),
            format!("0.{:06}", (id * 7919) % 1_000_000),
            "'20240101000000'".into(),
            "'20240101000000'".into(),
            (1000 + id).to_string(),
            (100 * id).to_string(),
            "'wikitext'".into(),
            "NULL".into(),
        ]);
        id
    };
    for node in &b.nodes {
        push_page(&mut page_rows, 14, &node.title, false);
    }
    for p in &pages {
        let id = push_page(&mut page_rows, 0, p, false);
        page_id.insert(p.clone(), id);
    }
    let mut redirect_rows = Vec::new();
    let mut alias_seen = BTreeSet::new();
    for (a, t) in &all_redirects {
        if alias_seen.insert(a.clone()) {
            let id = push_page(&mut page_rows, 0, a, true);
            redirect_rows.push(vec![id.to_string(), "0".into(), q(t), "''".into(), "''".into()]);
        }
    }
    let file_id = push_page(&mut page_rows, 6, "Fixture diagram.svg", false);
    let link_row = |from: usize, to: &str, kind: &str, key: &str| {
        vec![
            from.to_string(),
            q(to),
            sql_escape(&key.to_uppercase()),
            "'2024-01-01 00:00:00'".into(),
            "''".into(),
            "'uppercase'".into(),
            format!("'{kind}'"),
        ]
    };
    let mut link_rows = Vec::new();
    for &(c, p) in &b.edges {
        link_rows.push(link_row(c + 1, &b.nodes[p].title, "subcat", &b.nodes[c].title));
    }
    for (pg, c) in &page_links {
        link_rows.push(link_row(page_id[pg], &title(*c), "page", pg));
    }
    link_rows.push(link_row(file_id, FIXTURE_SEEDS[0], "file", "fixture diagram.svg"));
    let category_rows: Vec<Vec<String>> = b
        .nodes
        .iter()
        .enumerate()
        .map(|(i, node)| vec![(i + 1).to_string(), q(&node.title), "0".into(), "0".into(), "0".into()])
        .collect();
    let sql = dir.join("sql");
    write_atomic(
        &sql.join("category.sql"),
        sql_dump("category", &["cat_id", "cat_title", "cat_pages", "cat_subcats", "cat_files"], &category_rows)
            .as_bytes(),
    )?;
    write_atomic(
        &sql.join("page.sql"),
        sql_dump(
            "page",
            &[
                "page_id",
                "page_namespace",
                "page_title",
                "page_is_redirect",
                "page_is_new",
                "page_random",
                "page_touched",
                "page_links_updated",
                "page_latest",
                "page_len",
                "page_content_model",
                "page_lang",
            ],
            &page_rows,
        )
        .as_bytes(),
    )?;
    write_atomic(
        &sql.join("categorylinks.sql"),
        sql_dump(
            "categorylinks",
            &["cl_from", "cl_to", "cl_sortkey", "cl_timestamp", "cl_sortkey_prefix", "cl_collation", "cl_type"],
            &link_rows,
        )
        .as_bytes(),
    )?;
    write_atomic(
        &sql.join("redirect.sql"),
        sql_dump("redirect", &["rd_from", "rd_namespace", "rd_title", "rd_interwiki", "rd_fragment"], &redirect_rows)
            .as_bytes(),
    )?;

    // Reference lists: most relevant categories with children, a few relevant
    // leaves, the bridge excluded, and some page titles.
    let parents: BTreeSet<usize> = b.edges.iter().map(|&(_, p)| p).collect();
    let mut ref_terms: Vec<String> = Vec::new();
    for &i in &relevant_cats {
        let internal =
            parents.contains(&i) && b.edges.iter().any(|&(c, p)| p == i && b.nodes[c].kind == Kind::Relevant);
        let keep = if internal { 0.7 } else { 0.15 };
        if i != bridge && b.rng.random_bool(keep) {
            ref_terms.push(title(i));
        }
    }
    for p in relevant_pages.iter().step_by(3) {
        ref_terms.push(p.clone());
    }
    ref_terms.push(UNIGRAM_PAGES[0].to_string());
    ref_terms.extend(GENERIC_PHRASES[..2].iter().map(|s| s.to_string()));
    let (mut acm, mut cso) = (String::new(), String::new());
    for (k, t) in ref_terms.iter().enumerate() {
        if k % 3 != 2 {
            let _ = writeln!(acm, "{t}");
        }
        if k % 3 != 0 {
            let _ = writeln!(cso, "{t}");
        }
    }
    write_atomic(&dir.join("references/acm.txt"), acm.as_bytes())?;
    write_atomic(&dir.join("references/cso.txt"), cso.as_bytes())?;

    // Annotations cover every category at level ≤ 3.
    let relevant_set: BTreeSet<usize> = relevant_cats.iter().copied().collect();
    let label = |i: usize| if relevant_set.contains(&i) { "relevant" } else { "irrelevant" };
    let mut annotations = String::from("# title\trelevance\n");
    for (i, &level) in levels.iter().enumerate().take(n) {
        if (1..=3).contains(&level) {
            let _ = writeln!(annotations, "{}\t{}", title(i), label(i));
        }
    }
    write_atomic(&dir.join("annotations.tsv"), annotations.as_bytes())?;

    // A labeled random sample for per-level precision of pruning variants.
    let mut sample: Vec<usize> = (0..n).filter(|&i| levels[i] >= 2).collect();
    sample.shuffle(&mut b.rng);
    sample.truncate(40.min(sample.len()));
    sample.sort_unstable();
    let mut sample_tsv = String::new();
    for &i in &sample {
        let _ = writeln!(sample_tsv, "{}\t{}", title(i), label(i));
    }
    write_atomic(&dir.join("sample_annotations.tsv"), sample_tsv.as_bytes())?;

    let rules =
        "# kind\tpattern\ntitle_suffix\tby subject\nparent_of\tclassification system by subject\ntitle_prefix\tacme\n";
    write_atomic(&dir.join("rules.tsv"), rules.as_bytes())?;

    // Corpus: abstracts mentioning vocabulary terms, with gold keyphrases
    // that are partly in and partly outside the vocabulary.
    let vocab_terms: Vec<String> = relevant.iter().map(|&i| title(i)).chain(relevant_pages.iter().cloned()).collect();
    let arts_terms: Vec<String> = arts.iter().map(|&i| title(i)).collect();
    let mut corpus = String::new();
    for d in 0..spec.docs {
        let k = b.rng.random_range(4..=6);
        let terms: Vec<String> = vocab_terms.choose_multiple(&mut b.rng, k).cloned().collect();
        let generic = GENERIC_PHRASES.choose(&mut b.rng).expect("generic").to_string();
        let mut text = format!(
            "We study {} and its relation to {}. Building on {}, we propose a method for {}.",
            terms[0], terms[1], terms[2], terms[3]
        );
        for t in &terms[4..] {
            let _ = write!(text, " Applications to {t} are discussed.");
        }
        if d % 4 == 0 {
            let art = arts_terms.choose(&mut b.rng).expect("arts");
            let _ = write!(text, " An analogy with {art} motivates the design.");
        }
        let _ = write!(text, " An {generic} confirms the findings.");
        let mut gold: Vec<String> = terms.iter().take(3).cloned().collect();
        if terms[3].ends_with('s') {
            gold.push(terms[3].trim_end_matches('s').to_string());
        }
        gold.push(generic);
        gold.push(format!("{} theory", terms[0]));
        let line = json!({ "id": format!("doc-{:03}", d + 1), "abstract": text, "keyphrases": gold });
        let _ = writeln!(corpus, "{line}");
    }
    write_atomic(&dir.join("corpus.jsonl"), corpus.as_bytes())?;

    let config = format!(
        r#"# Generated fixture pipeline configuration.
output_dir = "out"
rng_seed = {seed}
seeds = ["computer science", "information science", "statistics"]

[input]
format = "tsv"
titles = "titles.tsv"
cat_edges = "cat_edges.tsv"
cat_pages = "cat_pages.tsv"
redirects = "redirects.tsv"
category_sql = "sql/category.sql"
page_sql = "sql/page.sql"
categorylinks_sql = "sql/categorylinks.sql"
redirect_sql = "sql/redirect.sql"
references = ["references/acm.txt", "references/cso.txt"]
annotations = ["annotations.tsv"]
sample_annotations = "sample_annotations.tsv"
rules = "rules.tsv"
corpus = "corpus.jsonl"

[classifier.embedding]
dimension = 16
walks_per_node = 10
walk_length = 20
epochs = 3

[classifier.text]
buckets_log2 = 12

[vocab]
name = "fixture"
"#,
        seed = spec.seed
    );
    write_atomic(&dir.join("config.toml"), config.as_bytes())?;

    let mut irrelevant: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for (i, node) in b.nodes.iter().enumerate() {
        let key = match node.kind {
            Kind::Seed | Kind::Relevant => continue,
            Kind::Arts => "filter-manual",
            Kind::Cluster => "filter-communities",
            Kind::ArtsLeaf => "filter-classifier",
            Kind::Rule => "filter-rules",
        };
        irrelevant.entry(key.into()).or_default().push(title(i));
    }
    let truth = Truth {
        spec,
        seeds: FIXTURE_SEEDS.iter().map(|s| s.to_string()).collect(),
        relevant: relevant_cats.iter().map(|&i| title(i)).collect(),
        irrelevant,
        pages,
        redirects,
        max_level: levels.iter().copied().max().unwrap_or(0),
    };
    let mut bytes = serde_json::to_vec_pretty(&truth).map_err(|e| AppError::Internal(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(&dir.join("truth.json"), &bytes)?;
    Ok(truth)
}

pub fn read_truth(path: &Path) -> Result<Truth> {
    serde_json::from_str(&crate::formats::read_text(path)?).map_err(|e| AppError::data(path, e.to_string()))
}
