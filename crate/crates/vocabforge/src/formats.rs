//! Text artifact formats: subtree snapshots, normalized graph tables,
//! annotation and label files, and the four-file vocabulary distribution.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vocabforge_core::classify::Label;
use vocabforge_core::prune::{AnnotationSet, Relevance};
use vocabforge_core::vocab::{VocabCategory, VocabMeta, VocabPage, Vocabulary, FORMAT_VERSION};
use vocabforge_core::{CategoryGraph, CategoryId, StageTag, Subtree, Title};

use crate::error::{AppError, Result};
use crate::ingest::{ingest_file, Assembled, GraphAssembler, RecordKind, TsvKind};

pub fn read_text(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| AppError::io(path, e))?;
    String::from_utf8(bytes).map_err(|_| AppError::data(path, "file is not valid UTF-8"))
}

/// Writes via a temporary sibling and rename so readers never see half a file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| AppError::io(dir, e))?;
    }
    let tmp = path.with_extension(format!("{}.tmp", path.extension().and_then(|e| e.to_str()).unwrap_or_default()));
    std::fs::write(&tmp, bytes).map_err(|e| AppError::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| AppError::io(path, e))
}

/// Data lines of a TSV file with 1-based line numbers; blank and `#` lines
/// are skipped and CR before LF is dropped.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.strip_suffix('\r').unwrap_or(l)))
        .filter(|(_, l)| !l.trim().is_empty() && !l.starts_with('#'))
}

fn line_error(path: &Path, line: usize, message: impl std::fmt::Display) -> AppError {
    AppError::data(path, format!("line {line}: {message}"))
}

// ---------------------------------------------------------------------------
// Subtree snapshots

/// `title<TAB>level<TAB>stage_tag`, sorted by `(level, title)`.
pub fn snapshot_tsv(subtree: &Subtree, graph: &CategoryGraph) -> String {
    let mut rows: Vec<(u32, &Title, StageTag)> = subtree
        .members()
        .map(|id| {
            (
                subtree.level(id).expect("member has a level"),
                graph.category_title(id),
                subtree.stage(id).expect("member has a stage"),
            )
        })
        .collect();
    rows.sort();
    let mut out = String::with_capacity(rows.len() * 32);
    for (level, title, stage) in rows {
        let _ = writeln!(out, "{title}\t{level}\t{stage}");
    }
    out
}

/// Parses a snapshot against `graph`. Seeds come from the pipeline config;
/// the stored levels must equal the levels the graph implies.
pub fn parse_snapshot(path: &Path, text: &str, graph: &CategoryGraph, seeds: &[CategoryId]) -> Result<Subtree> {
    let mut members: BTreeMap<CategoryId, StageTag> = BTreeMap::new();
    let mut stored: BTreeMap<CategoryId, u32> = BTreeMap::new();
    for (line, row) in data_lines(text) {
        let fields: Vec<&str> = row.split('\t').collect();
        let [title, level, stage] = fields[..] else {
            return Err(line_error(path, line, "expected title<TAB>level<TAB>stage"));
        };
        let title = Title::normalize(title).map_err(|e| line_error(path, line, e))?;
        let id = graph
            .category_id(&title)
            .ok_or_else(|| line_error(path, line, format!("category {title} is not in the graph")))?;
        let level: u32 = level.parse().map_err(|_| line_error(path, line, format!("bad level {level:?}")))?;
        let stage = StageTag::parse(stage).ok_or_else(|| line_error(path, line, format!("bad stage tag {stage:?}")))?;
        if members.insert(id, stage).is_some() {
            return Err(line_error(path, line, format!("duplicate category {title}")));
        }
        stored.insert(id, level);
    }
    for &s in seeds {
        if !members.contains_key(&s) {
            return Err(AppError::data(path, format!("seed {} is missing from the snapshot", graph.category_title(s))));
        }
    }
    let subtree = Subtree::from_members(graph, seeds.to_vec(), &members);
    for (&id, &level) in &stored {
        if subtree.level(id) != Some(level) {
            return Err(AppError::data(
                path,
                format!(
                    "{}: stored level {level} does not match the graph (recomputed {:?})",
                    graph.category_title(id),
                    subtree.level(id)
                ),
            ));
        }
    }
    Ok(subtree)
}

// ---------------------------------------------------------------------------
// Normalized graph tables

/// Writes the graph as the four TSV tables. Reloading them reproduces the
/// same titles, ids and links.
pub fn write_graph_tables(dir: &Path, graph: &CategoryGraph, redirects: &[(Title, Title)]) -> Result<Vec<String>> {
    let mut titles = String::new();
    let mut row = 0usize;
    for id in graph.category_ids() {
        let _ = writeln!(titles, "{row}\t{}\t14", graph.category_title(id));
        row += 1;
    }
    for p in 0..graph.page_count() as u32 {
        let _ = writeln!(titles, "{row}\t{}\t0", graph.page_title(p));
        row += 1;
    }
    let mut edges = String::new();
    for (child, parent) in graph.category_links() {
        let _ = writeln!(edges, "{}\t{}", graph.category_title(child), graph.category_title(parent));
    }
    let mut pages = String::new();
    for c in graph.category_ids() {
        for &p in graph.pages_of(c) {
            let _ = writeln!(pages, "{}\t{}", graph.page_title(p), graph.category_title(c));
        }
    }
    let mut red = String::new();
    for (alias, target) in redirects {
        let _ = writeln!(red, "{alias}\t{target}");
    }
    let files =
        [(TsvKind::Titles, titles), (TsvKind::CatEdges, edges), (TsvKind::CatPages, pages), (TsvKind::Redirects, red)];
    let mut names = Vec::new();
    for (kind, text) in files {
        write_atomic(&dir.join(kind.file_name()), text.as_bytes())?;
        names.push(kind.file_name().to_string());
    }
    Ok(names)
}

pub fn read_graph_tables(dir: &Path) -> Result<Assembled> {
    let mut asm = GraphAssembler::new();
    for kind in [TsvKind::Titles, TsvKind::CatEdges, TsvKind::CatPages, TsvKind::Redirects] {
        let path = dir.join(kind.file_name());
        ingest_file(&mut asm, &path, RecordKind::Tsv(kind), 0).map_err(|e| AppError::data(&path, e.to_string()))?;
    }
    Ok(asm.finish())
}

// ---------------------------------------------------------------------------
// Annotations, label overrides

pub fn read_annotations(path: &Path) -> Result<AnnotationSet> {
    AnnotationSet::parse(&read_text(path)?).map_err(|e| AppError::data(path, e.to_string()))
}

/// Merges several annotation files; conflicting labels are an error.
pub fn read_annotation_files(paths: &[impl AsRef<Path>]) -> Result<AnnotationSet> {
    let mut all = AnnotationSet::new();
    for path in paths {
        let path = path.as_ref();
        for (title, rel) in read_annotations(path)?.iter() {
            all.insert(title.clone(), rel).map_err(|e| AppError::data(path, e.to_string()))?;
        }
    }
    Ok(all)
}

pub fn annotation_line(title: &Title, relevance: Relevance) -> String {
    format!("{title}\t{}\n", relevance.as_str())
}

/// `title<TAB>positive|negative`, used in place of classifier predictions.
pub fn read_label_overrides(path: &Path) -> Result<BTreeMap<Title, Label>> {
    let text = read_text(path)?;
    let mut out = BTreeMap::new();
    for (line, row) in data_lines(&text) {
        let (title, label) = row.split_once('\t').ok_or_else(|| line_error(path, line, "expected title<TAB>label"))?;
        let title = Title::normalize(title).map_err(|e| line_error(path, line, e))?;
        let label = match label.trim() {
            "positive" => Label::Positive,
            "negative" => Label::Negative,
            other => return Err(line_error(path, line, format!("unknown label {other:?}"))),
        };
        if out.insert(title.clone(), label).is_some_and(|prev| prev != label) {
            return Err(line_error(path, line, format!("{title} labeled twice with different labels")));
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Vocabulary distribution: categories.tsv, pages.tsv, links.tsv, meta.json

pub const VOCAB_FILES: [&str; 4] = ["categories.tsv", "pages.tsv", "links.tsv", "meta.json"];

/// `meta.json` on disk. The file counts let a loader detect truncation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MetaFile {
    #[serde(flatten)]
    meta: VocabMeta,
    category_count: usize,
    page_count: usize,
}

pub fn vocab_files(vocab: &Vocabulary) -> Result<[(&'static str, Vec<u8>); 4]> {
    let mut cats = String::new();
    let mut links = String::new();
    for c in &vocab.categories {
        let parents: Vec<&str> = c.parents.iter().map(Title::as_str).collect();
        let _ = writeln!(
            cats,
            "{}\t{}\t{}\t{}",
            c.title,
            c.level,
            if c.core { "core" } else { "ancillary" },
            parents.join("|")
        );
    }
    let mut sorted_links: Vec<(&Title, &Title)> =
        vocab.categories.iter().flat_map(|c| c.parents.iter().map(move |p| (&c.title, p))).collect();
    sorted_links.sort();
    for (child, parent) in sorted_links {
        let _ = writeln!(links, "{child}\t{parent}");
    }
    let mut pages = String::new();
    for p in &vocab.pages {
        let cats: Vec<&str> = p.categories.iter().map(Title::as_str).collect();
        let _ = writeln!(pages, "{}\t{}\t{}", p.title, if p.canonical { "canonical" } else { "alias" }, cats.join("|"));
    }
    let meta =
        MetaFile { meta: vocab.meta.clone(), category_count: vocab.categories.len(), page_count: vocab.pages.len() };
    let mut json = serde_json::to_vec_pretty(&meta).map_err(|e| AppError::Internal(e.to_string()))?;
    json.push(b'\n');
    Ok([
        ("categories.tsv", cats.into_bytes()),
        ("pages.tsv", pages.into_bytes()),
        ("links.tsv", links.into_bytes()),
        ("meta.json", json),
    ])
}

pub fn save_vocab(vocab: &Vocabulary, dir: &Path) -> Result<()> {
    for (name, bytes) in vocab_files(vocab)? {
        write_atomic(&dir.join(name), &bytes)?;
    }
    Ok(())
}

fn title_list(path: &Path, line: usize, field: &str) -> Result<Vec<Title>> {
    if field.is_empty() {
        return Ok(Vec::new());
    }
    field.split('|').map(|t| Title::normalize(t).map_err(|e| line_error(path, line, e))).collect()
}

pub fn load_vocab(dir: &Path) -> Result<Vocabulary> {
    let meta_path = dir.join("meta.json");
    let meta: MetaFile = serde_json::from_str(&read_text(&meta_path)?)
        .map_err(|e| AppError::data(&meta_path, format!("invalid metadata: {e}")))?;
    if meta.meta.format_version != FORMAT_VERSION {
        return Err(AppError::data(
            &meta_path,
            format!("format version {} is not supported (expected {FORMAT_VERSION})", meta.meta.format_version),
        ));
    }

    let cat_path = dir.join("categories.tsv");
    let mut categories = Vec::new();
    for (line, row) in data_lines(&read_text(&cat_path)?) {
        let fields: Vec<&str> = row.split('\t').collect();
        let [title, level, flag, parents] = fields[..] else {
            return Err(line_error(&cat_path, line, "expected 4 fields"));
        };
        let core = match flag {
            "core" => true,
            "ancillary" => false,
            other => return Err(line_error(&cat_path, line, format!("bad core flag {other:?}"))),
        };
        categories.push(VocabCategory {
            title: Title::normalize(title).map_err(|e| line_error(&cat_path, line, e))?,
            level: level.parse().map_err(|_| line_error(&cat_path, line, format!("bad level {level:?}")))?,
            parents: title_list(&cat_path, line, parents)?,
            core,
        });
    }

    let page_path = dir.join("pages.tsv");
    let mut pages = Vec::new();
    for (line, row) in data_lines(&read_text(&page_path)?) {
        let fields: Vec<&str> = row.split('\t').collect();
        let [title, kind, cats] = fields[..] else {
            return Err(line_error(&page_path, line, "expected 3 fields"));
        };
        let canonical = match kind {
            "canonical" => true,
            "alias" => false,
            other => return Err(line_error(&page_path, line, format!("bad page kind {other:?}"))),
        };
        pages.push(VocabPage {
            title: Title::normalize(title).map_err(|e| line_error(&page_path, line, e))?,
            canonical,
            categories: title_list(&page_path, line, cats)?,
        });
    }

    let link_path = dir.join("links.tsv");
    let mut links = BTreeSet::new();
    for (line, row) in data_lines(&read_text(&link_path)?) {
        let (child, parent) = row.split_once('\t').ok_or_else(|| line_error(&link_path, line, "expected 2 fields"))?;
        let child = Title::normalize(child).map_err(|e| line_error(&link_path, line, e))?;
        let parent = Title::normalize(parent).map_err(|e| line_error(&link_path, line, e))?;
        links.insert((child, parent));
    }
    let declared: BTreeSet<(Title, Title)> =
        categories.iter().flat_map(|c| c.parents.iter().map(|p| (c.title.clone(), p.clone()))).collect();
    if let Some((c, p)) = links.symmetric_difference(&declared).next() {
        return Err(AppError::data(&link_path, format!("link {c} -> {p} disagrees with categories.tsv")));
    }
    if categories.len() != meta.category_count || pages.len() != meta.page_count {
        return Err(AppError::data(&meta_path, "category or page count disagrees with the TSV files"));
    }

    let vocab = Vocabulary { categories, pages, meta: meta.meta };
    vocab.validate().map_err(|e| AppError::data(dir, e.to_string()))?;
    let sorted = Vocabulary::new(vocab.categories.clone(), vocab.pages.clone(), vocab.meta.clone())
        .map_err(|e| AppError::data(dir, e.to_string()))?;
    if sorted != vocab {
        return Err(AppError::data(dir, "vocabulary files are not in canonical order"));
    }
    Ok(vocab)
}
