//! Resumable pipeline stages communicating only through files in the
//! output directory.
//!
//! Every stage writes its artifacts, a JSON report under `reports/`, and a
//! metadata record under `meta/` holding the stage's configuration hash, the
//! hashes of the upstream stages it consumed, the effective rng seeds and a
//! SHA-256 digest of each output. Before running, a stage re-verifies its
//! upstream records so artifacts from different configurations never mix
//! silently; `--force` downgrades those checks to warnings.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs::OpenOptions;
use std::path::{Path, PathBuf};
use std::rc::Rc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use vocabforge_core::classify::{
    assemble_training_set, filter_by_predictions, predict, random_walks, train_mlp, train_node_embeddings,
    FeatureExtractor, Label, LabeledEntry, LabeledSet, WalkGraph,
};
use vocabforge_core::keyphrase::{
    compare_reports, coverage, evaluate_category_sample, sample_with_levels, score_document, tag_abstract,
    CompiledLexicon, Corpus, EvalReport, TermIndex,
};
use vocabforge_core::prune::{
    apply_annotations, apply_rules, filter_communities, louvain, AnnotationSet, CommunityAssignment, LouvainConfig,
    ReferenceTermList, RuleSet,
};
use vocabforge_core::vocab::{
    attach_pages, compare_vocabs, level_histogram, prune_unigrams, split_core_ancillary, AttachConfig, Vocabulary,
};
use vocabforge_core::{graph::bfs_subtree, CategoryGraph, CategoryId, Subtree, Title};

use crate::config::{InputFormat, PipelineConfig};
use crate::corpus::{ecdf_tsv, per_document_tsv, read_corpus};
use crate::error::{AppError, Result};
use crate::formats::{
    load_vocab, parse_snapshot, read_annotation_files, read_graph_tables, read_label_overrides, read_text,
    snapshot_tsv, vocab_files, write_atomic, write_graph_tables,
};
use crate::ingest::{ingest_file, Assembled, GraphAssembler, RecordKind, Table, TsvKind};
use crate::model_io::{embeddings_bytes, model_bytes, read_embeddings, read_model};

pub const META_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Ingest,
    Extract,
    FilterManual,
    Communities,
    FilterCommunities,
    TrainClassifier,
    FilterClassifier,
    FilterRules,
    AttachPages,
    Compare,
    Evaluate,
    Coverage,
    Tag,
}

impl Stage {
    pub const ALL: [Stage; 13] = [
        Stage::Ingest,
        Stage::Extract,
        Stage::FilterManual,
        Stage::Communities,
        Stage::FilterCommunities,
        Stage::TrainClassifier,
        Stage::FilterClassifier,
        Stage::FilterRules,
        Stage::AttachPages,
        Stage::Compare,
        Stage::Evaluate,
        Stage::Coverage,
        Stage::Tag,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Extract => "extract",
            Stage::FilterManual => "filter-manual",
            Stage::Communities => "communities",
            Stage::FilterCommunities => "filter-communities",
            Stage::TrainClassifier => "train-classifier",
            Stage::FilterClassifier => "filter-classifier",
            Stage::FilterRules => "filter-rules",
            Stage::AttachPages => "attach-pages",
            Stage::Compare => "compare",
            Stage::Evaluate => "evaluate",
            Stage::Coverage => "coverage",
            Stage::Tag => "tag",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.into_iter().find(|st| st.name() == s)
    }

    /// Stages whose artifacts this stage reads. Every entry precedes the
    /// stage in [`Stage::ALL`], so the stage graph is acyclic by construction.
    pub fn upstream(self) -> &'static [Stage] {
        match self {
            Stage::Ingest => &[],
            Stage::Extract => &[Stage::Ingest],
            Stage::FilterManual => &[Stage::Extract],
            Stage::Communities => &[Stage::FilterManual],
            Stage::FilterCommunities => &[Stage::FilterManual, Stage::Communities],
            Stage::TrainClassifier => &[Stage::Extract, Stage::FilterCommunities],
            Stage::FilterClassifier => &[Stage::FilterCommunities, Stage::TrainClassifier],
            Stage::FilterRules => &[Stage::FilterClassifier],
            Stage::AttachPages => &[Stage::Ingest, Stage::FilterRules],
            Stage::Compare => {
                &[Stage::AttachPages, Stage::FilterManual, Stage::FilterCommunities, Stage::FilterClassifier]
            }
            Stage::Evaluate | Stage::Coverage | Stage::Tag => &[Stage::AttachPages],
        }
    }

    fn snapshot_path(self) -> String {
        format!("subtree/{}.tsv", self.name())
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Provenance record written to `meta/<stage>.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageMeta {
    pub version: u32,
    pub stage: String,
    pub enabled: bool,
    pub config_hash: String,
    pub upstream: BTreeMap<String, String>,
    pub rng_seeds: BTreeMap<String, u64>,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub stage: Stage,
    pub config_hash: String,
    pub summary: String,
    pub warnings: Vec<String>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut s = String::with_capacity(64);
    for b in digest.iter() {
        let _ = write!(s, "{b:02x}");
    }
    s
}

/// Removes the lock file when dropped.
struct LockGuard(PathBuf);

impl Drop for LockGuard {
    fn drop(&mut self) {
        let _ = std::fs::remove_file(&self.0);
    }
}

/// Artifacts and report assembled by one stage run.
#[derive(Default)]
struct StageRun {
    enabled: bool,
    outputs: Vec<(String, Vec<u8>)>,
    report: Value,
    summary: String,
    warnings: Vec<String>,
}

impl StageRun {
    fn output(&mut self, rel: impl Into<String>, bytes: impl Into<Vec<u8>>) {
        self.outputs.push((rel.into(), bytes.into()));
    }
}

pub struct Pipeline {
    cfg: PipelineConfig,
    force: bool,
    out: PathBuf,
    pool: rayon::ThreadPool,
    graph: RefCell<Option<Rc<Assembled>>>,
}

impl Pipeline {
    pub fn new(cfg: PipelineConfig, force: bool) -> Result<Self> {
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.threads)
            .build()
            .map_err(|e| AppError::Internal(format!("thread pool: {e}")))?;
        let out = cfg.output_dir.clone();
        Ok(Pipeline { cfg, force, out, pool, graph: RefCell::new(None) })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.cfg
    }

    pub fn output_dir(&self) -> &Path {
        &self.out
    }

    fn lock(&self) -> Result<LockGuard> {
        std::fs::create_dir_all(&self.out).map_err(|e| AppError::io(&self.out, e))?;
        let path = self.out.join(".lock");
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(_) => Ok(LockGuard(path)),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(AppError::Locked(path)),
            Err(e) => Err(AppError::io(&path, e)),
        }
    }

    pub fn run(&self, stage: Stage) -> Result<StageOutcome> {
        let _lock = self.lock()?;
        self.run_unlocked(stage)
    }

    /// Runs every stage in order, stopping at the first failure.
    pub fn run_all(&self, mut on_done: impl FnMut(&StageOutcome)) -> Result<Vec<StageOutcome>> {
        let _lock = self.lock()?;
        let mut outcomes = Vec::with_capacity(Stage::ALL.len());
        for stage in Stage::ALL {
            let outcome = self.run_unlocked(stage)?;
            on_done(&outcome);
            outcomes.push(outcome);
        }
        Ok(outcomes)
    }

    pub fn read_meta(&self, stage: Stage) -> Result<Option<StageMeta>> {
        let path = self.out.join("meta").join(format!("{}.json", stage.name()));
        if !path.exists() {
            return Ok(None);
        }
        let meta: StageMeta = serde_json::from_str(&read_text(&path)?)
            .map_err(|e| AppError::data(&path, format!("invalid stage metadata: {e}")))?;
        if meta.version != META_VERSION || meta.stage != stage.name() {
            return Err(AppError::data(&path, "stage metadata has the wrong version or stage name"));
        }
        Ok(Some(meta))
    }

    /// Loads and verifies the metadata of every direct upstream stage.
    fn check_upstream(&self, stage: Stage, warnings: &mut Vec<String>) -> Result<BTreeMap<String, String>> {
        let mut hashes = BTreeMap::new();
        for &up in stage.upstream() {
            let meta = self.read_meta(up)?.ok_or_else(|| AppError::MissingPrerequisite {
                stage: stage.name().into(),
                required: up.name().into(),
                reason: format!("no artifacts from {up} in {}; run it first", self.out.display()),
            })?;
            let mut problems = Vec::new();
            for (rel, digest) in &meta.outputs {
                let path = self.out.join(rel);
                match std::fs::read(&path) {
                    Ok(bytes) if &sha256_hex(&bytes) == digest => {}
                    Ok(_) => problems.push(format!("{rel} was modified after {up} wrote it")),
                    Err(_) => problems.push(format!("{rel} is missing")),
                }
            }
            for (grand, hash) in &meta.upstream {
                let current = Stage::parse(grand).and_then(|g| self.read_meta(g).ok().flatten());
                if current.as_ref().map(|m| &m.config_hash) != Some(hash) {
                    problems.push(format!("{up} was produced from a different {grand} run; rerun {up}"));
                }
            }
            for p in problems {
                if self.force {
                    warnings.push(format!("forced past: {p}"));
                } else {
                    return Err(AppError::Provenance { stage: stage.name().into(), message: p });
                }
            }
            hashes.insert(up.name().to_string(), meta.config_hash);
        }
        Ok(hashes)
    }

    fn enabled(&self, stage: Stage) -> bool {
        let t = &self.cfg.stages;
        match stage {
            Stage::FilterManual => t.manual,
            Stage::Communities | Stage::FilterCommunities => t.communities,
            Stage::TrainClassifier | Stage::FilterClassifier => t.classifier,
            Stage::FilterRules => t.rules,
            _ => true,
        }
    }

    /// Effective random seeds a stage uses.
    fn rng_seeds(&self, stage: Stage) -> BTreeMap<String, u64> {
        let mut seeds = BTreeMap::new();
        seeds.insert("rng_seed".to_string(), self.cfg.rng_seed);
        match stage {
            Stage::Communities => {
                seeds.insert("louvain".into(), self.cfg.louvain_seed());
            }
            Stage::TrainClassifier => {
                seeds.insert("negatives".into(), self.cfg.sample_seed());
                seeds.insert("embedding".into(), self.cfg.embedding_seed());
                seeds.insert("mlp".into(), self.cfg.mlp_seed());
            }
            _ => {}
        }
        seeds
    }

    /// Configuration a stage's output depends on, excluding paths, output
    /// directory and thread count.
    fn settings(&self, stage: Stage) -> Value {
        let c = &self.cfg;
        let enabled = self.enabled(stage);
        match stage {
            Stage::Ingest => json!({ "format": c.input.format, "page_columns": c.input.page_columns }),
            Stage::Extract => json!({ "seeds": c.seeds }),
            Stage::FilterManual => json!({ "enabled": enabled, "manual": c.manual, "mode": c.prune_mode }),
            Stage::Communities => json!({ "enabled": enabled, "resolution": c.communities.resolution }),
            Stage::FilterCommunities => json!({ "enabled": enabled, "mode": c.prune_mode }),
            Stage::TrainClassifier => json!({
                "enabled": enabled,
                "negative_depth": c.classifier.negative_depth,
                "embedding": c.embedding(),
                "mlp": c.mlp(),
                "text": c.classifier.text,
            }),
            Stage::FilterClassifier => json!({
                "enabled": enabled,
                "threshold": c.classifier.threshold,
                "mode": c.classifier.mode,
                "text": c.classifier.text,
            }),
            Stage::FilterRules => json!({ "enabled": enabled, "mode": c.prune_mode }),
            Stage::AttachPages => json!({ "vocab": c.vocab }),
            Stage::Compare => json!({ "sample_levels": c.keyphrase.sample_levels, "name": c.vocab.name }),
            Stage::Evaluate | Stage::Coverage => json!({
                "prune_unigrams": c.keyphrase.prune_unigrams,
                "include_title": c.keyphrase.include_title,
                "name": c.vocab.name,
            }),
            Stage::Tag => json!({ "include_title": c.keyphrase.include_title }),
        }
    }

    /// Input files a stage reads, keyed by config name.
    fn inputs(&self, stage: Stage) -> Vec<(String, PathBuf)> {
        let i = &self.cfg.input;
        let mut out: Vec<(String, PathBuf)> = Vec::new();
        fn add(out: &mut Vec<(String, PathBuf)>, key: &str, p: &Option<PathBuf>) {
            if let Some(p) = p {
                out.push((key.to_string(), p.clone()));
            }
        }
        let enabled = self.enabled(stage);
        match stage {
            Stage::Ingest => match i.format {
                InputFormat::Tsv => {
                    add(&mut out, "input.titles", &i.titles);
                    add(&mut out, "input.cat_edges", &i.cat_edges);
                    add(&mut out, "input.cat_pages", &i.cat_pages);
                    add(&mut out, "input.redirects", &i.redirects);
                }
                InputFormat::Sql => {
                    add(&mut out, "input.category_sql", &i.category_sql);
                    add(&mut out, "input.page_sql", &i.page_sql);
                    add(&mut out, "input.categorylinks_sql", &i.categorylinks_sql);
                    add(&mut out, "input.redirect_sql", &i.redirect_sql);
                }
            },
            Stage::FilterManual if enabled => {
                for (n, p) in i.annotations.iter().enumerate() {
                    out.push((format!("input.annotations.{n}"), p.clone()));
                }
            }
            Stage::TrainClassifier if enabled => {
                if i.label_overrides.is_some() {
                    add(&mut out, "input.label_overrides", &i.label_overrides);
                } else {
                    for (n, p) in i.annotations.iter().enumerate() {
                        out.push((format!("input.annotations.{n}"), p.clone()));
                    }
                    for (n, p) in i.references.iter().enumerate() {
                        out.push((format!("input.references.{n}"), p.clone()));
                    }
                }
            }
            Stage::FilterCommunities if enabled => {
                for (n, p) in i.references.iter().enumerate() {
                    out.push((format!("input.references.{n}"), p.clone()));
                }
            }
            Stage::FilterRules if enabled => add(&mut out, "input.rules", &i.rules),
            Stage::Compare => {
                for (n, p) in i.references.iter().enumerate() {
                    out.push((format!("input.references.{n}"), p.clone()));
                }
                add(&mut out, "input.sample_annotations", &i.sample_annotations);
            }
            Stage::Evaluate | Stage::Coverage => {
                add(&mut out, "input.corpus", &i.corpus);
                for (n, p) in i.references.iter().enumerate() {
                    out.push((format!("input.references.{n}"), p.clone()));
                }
            }
            Stage::Tag => add(&mut out, "input.corpus", &i.corpus),
            _ => {}
        }
        out
    }

    fn run_unlocked(&self, stage: Stage) -> Result<StageOutcome> {
        let mut warnings = Vec::new();
        let upstream = self.check_upstream(stage, &mut warnings)?;
        let mut input_digests = BTreeMap::new();
        for (key, path) in self.inputs(stage) {
            let bytes =
                std::fs::read(&path).map_err(|e| AppError::Config(format!("{key} = {}: {e}", path.display())))?;
            input_digests.insert(key, sha256_hex(&bytes));
        }
        let rng_seeds = self.rng_seeds(stage);
        // Only the seeds a stage consumes enter its hash, so a new global
        // seed does not invalidate deterministic stages.
        let consumed: BTreeMap<&String, &u64> = rng_seeds.iter().filter(|(k, _)| k.as_str() != "rng_seed").collect();
        let hash_input = json!({
            "stage": stage.name(),
            "settings": self.settings(stage),
            "inputs": input_digests,
            "upstream": upstream,
            "rng_seeds": consumed,
        });
        let config_hash = sha256_hex(hash_input.to_string().as_bytes());

        let mut run = StageRun { enabled: self.enabled(stage), warnings, ..Default::default() };
        self.execute(stage, &mut run)?;

        let report = json!({
            "stage": stage.name(),
            "enabled": run.enabled,
            "config_hash": config_hash,
            "rng_seeds": rng_seeds,
            "report": run.report,
        });
        let mut report_bytes = serde_json::to_vec_pretty(&report).map_err(|e| AppError::Internal(e.to_string()))?;
        report_bytes.push(b'\n');
        run.output(format!("reports/{}.json", stage.name()), report_bytes);

        let mut outputs = BTreeMap::new();
        for (rel, bytes) in &run.outputs {
            write_atomic(&self.out.join(rel), bytes)?;
            outputs.insert(rel.clone(), sha256_hex(bytes));
        }
        let meta = StageMeta {
            version: META_VERSION,
            stage: stage.name().into(),
            enabled: run.enabled,
            config_hash: config_hash.clone(),
            upstream,
            rng_seeds,
            inputs: input_digests,
            outputs,
        };
        let mut meta_bytes = serde_json::to_vec_pretty(&meta).map_err(|e| AppError::Internal(e.to_string()))?;
        meta_bytes.push(b'\n');
        write_atomic(&self.out.join("meta").join(format!("{}.json", stage.name())), &meta_bytes)?;
        Ok(StageOutcome { stage, config_hash, summary: run.summary, warnings: run.warnings })
    }

    fn execute(&self, stage: Stage, run: &mut StageRun) -> Result<()> {
        match stage {
            Stage::Ingest => self.ingest(run),
            Stage::Extract => self.extract(run),
            Stage::FilterManual => self.filter_manual(run),
            Stage::Communities => self.communities(run),
            Stage::FilterCommunities => self.filter_communities(run),
            Stage::TrainClassifier => self.train_classifier(run),
            Stage::FilterClassifier => self.filter_classifier(run),
            Stage::FilterRules => self.filter_rules(run),
            Stage::AttachPages => self.attach_pages(run),
            Stage::Compare => self.compare(run),
            Stage::Evaluate => self.evaluate(run),
            Stage::Coverage => self.coverage(run),
            Stage::Tag => self.tag(run),
        }
    }

    // -----------------------------------------------------------------------
    // Shared loaders

    fn graph(&self) -> Result<Rc<Assembled>> {
        if let Some(g) = self.graph.borrow().as_ref() {
            return Ok(Rc::clone(g));
        }
        let g = Rc::new(read_graph_tables(&self.out.join("graph"))?);
        *self.graph.borrow_mut() = Some(Rc::clone(&g));
        Ok(g)
    }

    fn seed_titles(&self) -> Result<Vec<Title>> {
        self.cfg
            .seeds
            .iter()
            .map(|s| Title::normalize(s).map_err(|e| AppError::Config(format!("seed {s:?}: {e}"))))
            .collect()
    }

    fn seed_ids(&self, graph: &CategoryGraph) -> Result<Vec<CategoryId>> {
        let seeds = self.seed_titles()?;
        Ok(graph.resolve_seeds(&seeds)?)
    }

    pub fn snapshot(&self, stage: Stage) -> Result<Subtree> {
        let assembled = self.graph()?;
        let graph = &assembled.graph;
        let path = self.out.join(stage.snapshot_path());
        parse_snapshot(&path, &read_text(&path)?, graph, &self.seed_ids(graph)?)
    }

    fn references(&self) -> Result<Vec<ReferenceTermList>> {
        self.cfg
            .input
            .references
            .iter()
            .map(|p| {
                let name = p.file_stem().and_then(|s| s.to_str()).unwrap_or("reference").to_string();
                ReferenceTermList::parse(name, &read_text(p)?).map_err(|e| AppError::data(p, e.to_string()))
            })
            .collect()
    }

    fn require<'a>(&self, stage: Stage, key: &str, value: Option<&'a PathBuf>) -> Result<&'a Path> {
        value.map(PathBuf::as_path).ok_or_else(|| AppError::Config(format!("stage {stage} needs {key} to be set")))
    }

    fn annotations(&self, stage: Stage) -> Result<AnnotationSet> {
        if self.cfg.input.annotations.is_empty() {
            return Err(AppError::Config(format!("stage {stage} needs input.annotations to be set")));
        }
        read_annotation_files(&self.cfg.input.annotations)
    }

    fn emit_snapshot(&self, stage: Stage, subtree: &Subtree, graph: &CategoryGraph, run: &mut StageRun) {
        run.output(stage.snapshot_path(), snapshot_tsv(subtree, graph));
    }

    /// Copies `from`'s snapshot unchanged for a disabled stage.
    fn pass_through(&self, stage: Stage, from: Stage, run: &mut StageRun) -> Result<()> {
        let subtree = self.snapshot(from)?;
        let assembled = self.graph()?;
        self.emit_snapshot(stage, &subtree, &assembled.graph, run);
        run.report = json!({ "skipped": true, "remaining": subtree.len() });
        run.summary = format!("disabled; passed {} categories through", subtree.len());
        Ok(())
    }

    // -----------------------------------------------------------------------
    // Stages

    fn ingest(&self, run: &mut StageRun) -> Result<()> {
        let i = &self.cfg.input;
        let files: Vec<(PathBuf, RecordKind)> = match i.format {
            InputFormat::Tsv => {
                self.require(Stage::Ingest, "input.cat_edges", i.cat_edges.as_ref())?;
                [
                    (&i.titles, TsvKind::Titles),
                    (&i.cat_edges, TsvKind::CatEdges),
                    (&i.cat_pages, TsvKind::CatPages),
                    (&i.redirects, TsvKind::Redirects),
                ]
                .into_iter()
                .filter_map(|(p, k)| p.clone().map(|p| (p, RecordKind::Tsv(k))))
                .collect()
            }
            InputFormat::Sql => {
                self.require(Stage::Ingest, "input.page_sql", i.page_sql.as_ref())?;
                self.require(Stage::Ingest, "input.categorylinks_sql", i.categorylinks_sql.as_ref())?;
                [
                    (&i.category_sql, Table::Category),
                    (&i.page_sql, Table::Page),
                    (&i.categorylinks_sql, Table::Categorylinks),
                    (&i.redirect_sql, Table::Redirect),
                ]
                .into_iter()
                .filter_map(|(p, t)| p.clone().map(|p| (p, RecordKind::Sql(t))))
                .collect()
            }
        };
        // Files parse independently in parallel; records are merged in the
        // fixed file order above.
        let page_columns = i.page_columns;
        let parsed: Vec<Result<GraphAssembler>> = self.pool.install(|| {
            files
                .par_iter()
                .map(|(path, kind)| {
                    let mut asm = GraphAssembler::new();
                    ingest_file(&mut asm, path, *kind, page_columns)
                        .map_err(|e| AppError::data(path, e.to_string()))?;
                    Ok(asm)
                })
                .collect()
        });
        let mut merged = GraphAssembler::new();
        for asm in parsed {
            merged.absorb(asm?);
        }
        let assembled = merged.finish();
        let dir = self.out.join("graph");
        let names = write_graph_tables(&dir, &assembled.graph, &assembled.redirects)?;
        // Register the tables as outputs so downstream stages can verify them.
        for name in names {
            let rel = format!("graph/{name}");
            let bytes = std::fs::read(self.out.join(&rel)).map_err(|e| AppError::io(self.out.join(&rel), e))?;
            run.output(rel, bytes);
        }
        let s = &assembled.summary;
        run.summary = format!(
            "{} categories, {} category links, {} pages, {} page links, {} redirects",
            s.graph.categories, s.graph.category_links, s.graph.pages, s.graph.page_links, s.redirects
        );
        if s.graph.unknown_links > 0 {
            run.warnings.push(format!("{} links referenced unknown titles and were skipped", s.graph.unknown_links));
        }
        if s.graph.self_loops > 0 {
            run.warnings.push(format!("{} self-loop links dropped", s.graph.self_loops));
        }
        run.report = serde_json::to_value(s).map_err(|e| AppError::Internal(e.to_string()))?;
        *self.graph.borrow_mut() = Some(Rc::new(assembled));
        Ok(())
    }

    fn extract(&self, run: &mut StageRun) -> Result<()> {
        let assembled = self.graph()?;
        let graph = &assembled.graph;
        let subtree = bfs_subtree(graph, &self.seed_titles()?)?;
        self.emit_snapshot(Stage::Extract, &subtree, graph, run);
        run.summary = format!("{} categories over {} levels", subtree.len(), subtree.max_level());
        run.report = json!({
            "remaining": subtree.len(),
            "max_level": subtree.max_level(),
            "level_histogram": subtree.level_histogram(),
        });
        Ok(())
    }

    fn prune_report(
        &self,
        stage: Stage,
        subtree: &Subtree,
        graph: &CategoryGraph,
        report: impl Serialize,
        run: &mut StageRun,
    ) -> Result<()> {
        self.emit_snapshot(stage, subtree, graph, run);
        run.report = serde_json::to_value(report).map_err(|e| AppError::Internal(e.to_string()))?;
        run.report["max_level"] = json!(subtree.max_level());
        run.report["level_histogram"] = json!(subtree.level_histogram());
        Ok(())
    }

    fn filter_manual(&self, run: &mut StageRun) -> Result<()> {
        if !run.enabled {
            return self.pass_through(Stage::FilterManual, Stage::Extract, run);
        }
        let annotations = self.annotations(Stage::FilterManual)?;
        let subtree = self.snapshot(Stage::Extract)?;
        let assembled = self.graph()?;
        let graph = &assembled.graph;
        let (pruned, report) =
            apply_annotations(&subtree, graph, &annotations, self.cfg.manual.max_level, self.cfg.prune_mode)?;
        run.summary = format!(
            "{} removed as irrelevant, {} unreachable afterwards, {} remain",
            report.removed_direct, report.removed_propagated, report.remaining
        );
        self.prune_report(Stage::FilterManual, &pruned, graph, report, run)
    }

    fn communities(&self, run: &mut StageRun) -> Result<()> {
        if !run.enabled {
            run.report = json!({ "skipped": true });
            run.summary = "disabled".into();
            return Ok(());
        }
        let subtree = self.snapshot(Stage::FilterManual)?;
        let assembled = self.graph()?;
        let graph = &assembled.graph;
        let cfg = LouvainConfig { resolution: self.cfg.communities.resolution, seed: self.cfg.louvain_seed() };
        let assignment = louvain(&subtree, graph, cfg)?;
        let mut rows: Vec<(u32, &Title)> = assignment
            .members()
            .iter()
            .zip(assignment.labels())
            .map(|(&id, &c)| (c, graph.category_title(id)))
            .collect();
        rows.sort();
        let mut tsv = String::new();
        for (c, t) in rows {
            let _ = writeln!(tsv, "{t}\t{c}");
        }
        run.output("communities.tsv", tsv);
        let mut sizes = assignment.sizes();
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let median = if sizes.is_empty() {
            0.0
        } else {
            let mut asc = sizes.clone();
            asc.sort_unstable();
            let n = asc.len();
            if n % 2 == 1 {
                asc[n / 2] as f64
            } else {
                (asc[n / 2 - 1] + asc[n / 2]) as f64 / 2.0
            }
        };
        run.summary = format!(
            "{} communities, modularity {:.4}, largest {}",
            assignment.community_count(),
            assignment.modularity(),
            sizes.first().copied().unwrap_or(0)
        );
        run.report = json!({
            "communities": assignment.community_count(),
            "modularity": assignment.modularity(),
            "modularity_history": assignment.history(),
            "largest": sizes.first().copied().unwrap_or(0),
            "mean_size": if sizes.is_empty() { 0.0 } else { subtree.len() as f64 / sizes.len() as f64 },
            "median_size": median,
            "sizes_descending": sizes,
        });
        Ok(())
    }

    fn read_communities(&self, graph: &CategoryGraph) -> Result<CommunityAssignment> {
        let path = self.out.join("communities.tsv");
        let text = read_text(&path)?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let err = |m: &str| AppError::data(&path, format!("line {}: {m}", n + 1));
            let (title, c) = line.split_once('\t').ok_or_else(|| err("expected title<TAB>community"))?;
            let title = Title::normalize(title).map_err(|e| err(&e.to_string()))?;
            let id = graph.category_id(&title).ok_or_else(|| err("category is not in the graph"))?;
            let c: u32 = c.parse().map_err(|_| err("bad community id"))?;
            pairs.push((id, c));
        }
        let report_path = self.out.join("reports/communities.json");
        let report: Value =
            serde_json::from_str(&read_text(&report_path)?).map_err(|e| AppError::data(&report_path, e.to_string()))?;
        let modularity = report["report"]["modularity"].as_f64().unwrap_or(0.0);
        Ok(CommunityAssignment::from_labels(pairs, modularity))
    }

    fn filter_communities(&self, run: &mut StageRun) -> Result<()> {
        if !run.enabled {
            return self.pass_through(Stage::FilterCommunities, Stage::FilterManual, run);
        }
        let refs = self.references()?;
        if refs.is_empty() {
            return Err(AppError::Config("stage filter-communities needs input.references to be set".into()));
        }
        let subtree = self.snapshot(Stage::FilterManual)?;
        let assembled = self.graph()?;
        let graph = &assembled.graph;
        let communities = self.read_communities(graph)?;
        let (pruned, report) = filter_communities(&subtree, graph, &communities, &refs, self.cfg.prune_mode)?;
        run.summary = format!(
            "{} of {} communities removed; {} categories remain",
            report.metrics.get("communities_removed").copied().unwrap_or(0.0),
            communities.community_count(),
            report.remaining
        );
        self.prune_report(Stage::FilterCommunities, &pruned, graph, report, run)
    }

    fn train_classifier(&self, run: &mut StageRun) -> Result<()> {
        if !run.enabled {
            run.report = json!({ "skipped": true });
            run.summary = "disabled".into();
            return Ok(());
        }
        let assembled = self.graph()?;
        let graph = &assembled.graph;
        if let Some(path) = &self.cfg.input.label_overrides {
            let labels = read_label_overrides(path)?;
            let mut tsv = String::new();
            for (t, l) in &labels {
                let _ = writeln!(tsv, "{t}\t{}", if *l == Label::Positive { "positive" } else { "negative" });
            }
            run.output("classifier/labels.tsv", tsv);
            let negatives = labels.values().filter(|l| **l == Label::Negative).count();
            run.summary = format!("using {} external labels ({negatives} negative)", labels.len());
            run.report = json!({ "source": "label_overrides", "labels": labels.len(), "negatives": negatives });
            return Ok(());
        }

        let refs = self.references()?;
        if refs.is_empty() {
            return Err(AppError::Config("stage train-classifier needs input.references to be set".into()));
        }
        let annotations = self.annotations(Stage::TrainClassifier)?;
        let origin = self.snapshot(Stage::Extract)?;
        let current = self.snapshot(Stage::FilterCommunities)?;
        let selection = assemble_training_set(
            &current,
            &origin,
            graph,
            &refs,
            &annotations,
            self.cfg.classifier.negative_depth,
            self.cfg.sample_seed(),
        )?;

        let emb_cfg = self.cfg.embedding();
        let walks = random_walks(&WalkGraph::from_subtree(&origin, graph), &emb_cfg);
        let embeddings = train_node_embeddings(&walks, &emb_cfg)?;
        let extractor = FeatureExtractor::new(&embeddings, self.cfg.classifier.text)?;
        let labeled: Vec<(CategoryId, Label)> = selection
            .positives
            .iter()
            .map(|&id| (id, Label::Positive))
            .chain(selection.negatives.iter().map(|&id| (id, Label::Negative)))
            .collect();
        let entries: Vec<LabeledEntry> = self.pool.install(|| {
            labeled
                .par_iter()
                .map(|&(id, label)| LabeledEntry {
                    id,
                    features: extractor.features(id, graph.category_title(id).as_str()),
                    label,
                })
                .collect()
        });
        let set = LabeledSet::new(entries)?;
        let (model, cv_f1) = train_mlp(&set, &self.cfg.mlp(), extractor.fingerprint())?;

        let mut rows: Vec<(&Title, &str)> = labeled
            .iter()
            .map(|&(id, l)| (graph.category_title(id), if l == Label::Positive { "positive" } else { "negative" }))
            .collect();
        rows.sort();
        let mut tsv = String::new();
        for (t, l) in rows {
            let _ = writeln!(tsv, "{t}\t{l}");
        }
        run.output("classifier/training.tsv", tsv);
        run.output("classifier/model.bin", model_bytes(&model));
        run.output("classifier/embeddings.bin", embeddings_bytes(&embeddings, graph));
        run.summary = format!(
            "{} positives, {} negatives (pool {}), {}-fold CV F1 {:.3}",
            selection.positives.len(),
            selection.negatives.len(),
            selection.pool_size,
            self.cfg.mlp().folds,
            cv_f1
        );
        run.report = json!({
            "source": "trained",
            "positives": selection.positives.len(),
            "negatives": selection.negatives.len(),
            "negative_pool": selection.pool_size,
            "cv_f1": cv_f1,
            "folds": self.cfg.mlp().folds,
            "embedded_categories": embeddings.len(),
            "embedding_epoch_losses": embeddings.epoch_losses,
            "feature_dimension": extractor.dimension(),
        });
        Ok(())
    }

    fn filter_classifier(&self, run: &mut StageRun) -> Result<()> {
        if !run.enabled {
            return self.pass_through(Stage::FilterClassifier, Stage::FilterCommunities, run);
        }
        let subtree = self.snapshot(Stage::FilterCommunities)?;
        let assembled = self.graph()?;
        let graph = &assembled.graph;
        let members: Vec<CategoryId> = subtree.members().collect();
        let mode = self.cfg.classifier.mode;

        let (negatives, predictions_tsv, source) = if self.cfg.input.label_overrides.is_some() {
            let labels = read_label_overrides(&self.out.join("classifier/labels.tsv"))?;
            let negatives: BTreeSet<CategoryId> = members
                .iter()
                .copied()
                .filter(|&id| labels.get(graph.category_title(id)) == Some(&Label::Negative))
                .collect();
            (negatives, None, "label_overrides")
        } else {
            let model = read_model(&self.out.join("classifier/model.bin"))?;
            let embeddings = read_embeddings(&self.out.join("classifier/embeddings.bin"), graph)?;
            let extractor = FeatureExtractor::new(&embeddings, self.cfg.classifier.text)?;
            if extractor.fingerprint() != model.feature_fingerprint {
                return Err(AppError::Provenance {
                    stage: Stage::FilterClassifier.name().into(),
                    message: "classifier.text differs from the configuration the model was trained with".into(),
                });
            }
            let threshold = self.cfg.classifier.threshold;
            let predictions: Vec<Result<(CategoryId, f64, Label)>> = self.pool.install(|| {
                members
                    .par_iter()
                    .map(|&id| {
                        let x = extractor.features(id, graph.category_title(id).as_str());
                        let p = predict(&model, &x, threshold)?;
                        Ok((id, p.probability, p.label))
                    })
                    .collect()
            });
            let mut rows = Vec::with_capacity(predictions.len());
            let mut negatives = BTreeSet::new();
            for p in predictions {
                let (id, prob, label) = p?;
                if label == Label::Negative {
                    negatives.insert(id);
                }
                rows.push((graph.category_title(id), prob));
            }
            rows.sort_by(|a, b| a.0.cmp(b.0));
            let mut tsv = String::new();
            for (t, p) in rows {
                let _ = writeln!(tsv, "{t}\t{p}");
            }
            (negatives, Some(tsv), "model")
        };
        if let Some(tsv) = predictions_tsv {
            run.output("classifier/predictions.tsv", tsv);
        }
        let (pruned, mut report) = filter_by_predictions(&subtree, graph, mode, |id| Ok(negatives.contains(&id)))?;
        report.metrics.insert("predicted_negative".into(), negatives.len() as f64);
        run.summary = format!(
            "{} predicted irrelevant ({source}); {} removed with children; {} remain",
            negatives.len(),
            report.removed_direct + report.removed_propagated,
            report.remaining
        );
        self.prune_report(Stage::FilterClassifier, &pruned, graph, report, run)
    }

    fn filter_rules(&self, run: &mut StageRun) -> Result<()> {
        if !run.enabled {
            return self.pass_through(Stage::FilterRules, Stage::FilterClassifier, run);
        }
        let path = self.require(Stage::FilterRules, "input.rules", self.cfg.input.rules.as_ref())?;
        let rules = RuleSet::parse(&read_text(path)?).map_err(|e| AppError::data(path, e.to_string()))?;
        let subtree = self.snapshot(Stage::FilterClassifier)?;
        let assembled = self.graph()?;
        let graph = &assembled.graph;
        let (pruned, report) = apply_rules(&subtree, graph, &rules, self.cfg.prune_mode)?;
        run.summary =
            format!("{} rules matched {} categories; {} remain", rules.len(), report.removed_direct, report.remaining);
        self.prune_report(Stage::FilterRules, &pruned, graph, report, run)
    }

    fn attach_pages(&self, run: &mut StageRun) -> Result<()> {
        let subtree = self.snapshot(Stage::FilterRules)?;
        let assembled = self.graph()?;
        let graph = &assembled.graph;
        let cfg = AttachConfig {
            max_redirect_chain: self.cfg.vocab.max_redirect_chain,
            core_max_level: self.cfg.vocab.core_max_level,
        };
        let (mut vocab, attach) = attach_pages(&subtree, graph, &assembled.redirects, cfg)?;
        let (split, core) = split_core_ancillary(&vocab, self.cfg.vocab.core_max_level);
        vocab = split;

        let mut config_hashes = BTreeMap::new();
        let mut counts = BTreeMap::new();
        let mut stages = Vec::new();
        for &s in &Stage::ALL[..Stage::ALL.iter().position(|&s| s == Stage::AttachPages).expect("listed")] {
            if let Some(meta) = self.read_meta(s)? {
                config_hashes.insert(s.name().to_string(), meta.config_hash);
                if meta.enabled {
                    stages.push(s.name().to_string());
                }
            }
            let snap = self.out.join(s.snapshot_path());
            if snap.exists() {
                counts.insert(s.name().to_string(), read_text(&snap)?.lines().count());
            }
        }
        counts.insert("categories".into(), vocab.categories.len());
        counts.insert("pages".into(), vocab.pages.iter().filter(|p| p.canonical).count());
        counts.insert("aliases".into(), vocab.pages.iter().filter(|p| !p.canonical).count());
        vocab.meta.stages = stages;
        vocab.meta.counts = counts;
        vocab.meta.config_hashes = config_hashes;
        vocab.meta.rng_seeds = [
            ("rng_seed".to_string(), self.cfg.rng_seed),
            ("louvain".into(), self.cfg.louvain_seed()),
            ("negatives".into(), self.cfg.sample_seed()),
            ("embedding".into(), self.cfg.embedding_seed()),
            ("mlp".into(), self.cfg.mlp_seed()),
        ]
        .into_iter()
        .collect();
        for (name, bytes) in vocab_files(&vocab)? {
            run.output(format!("vocab/{name}"), bytes);
        }
        if attach.aliases_dropped_long_chain > 0 {
            run.warnings.push(format!(
                "{} redirect aliases dropped: chain longer than {}",
                attach.aliases_dropped_long_chain, cfg.max_redirect_chain
            ));
        }
        run.summary = format!(
            "{} categories, {} pages, {} aliases; core fraction {:.3}",
            attach.categories, attach.canonical_pages, attach.aliases, core.core_fraction
        );
        run.report = json!({
            "attach": attach,
            "core": core,
            "levels": level_histogram(&vocab),
        });
        Ok(())
    }

    fn vocab(&self) -> Result<Vocabulary> {
        load_vocab(&self.out.join("vocab"))
    }

    fn compare(&self, run: &mut StageRun) -> Result<()> {
        let vocab = self.vocab()?;
        let refs = self.references()?;
        let name = self.cfg.vocab.name.clone();
        let own = (name.clone(), vocab.term_keys(None));
        let mut comparisons = Vec::new();
        if refs.len() <= 2 && !refs.is_empty() {
            let mut sets = vec![own.clone()];
            sets.extend(refs.iter().map(|r| (r.name.clone(), r.terms().clone())));
            comparisons.push(compare_vocabs(&sets)?);
        } else {
            for r in &refs {
                comparisons.push(compare_vocabs(&[own.clone(), (r.name.clone(), r.terms().clone())])?);
            }
        }
        let mut sample_rows = Value::Null;
        if let Some(path) = &self.cfg.input.sample_annotations {
            let sample = read_annotation_files(std::slice::from_ref(path))?;
            let assembled = self.graph()?;
            let graph = &assembled.graph;
            let base = self.snapshot(Stage::FilterManual)?;
            let levels: BTreeMap<Title, u32> =
                base.members().map(|id| (graph.category_title(id).clone(), base.level(id).expect("member"))).collect();
            let items = sample_with_levels(&sample, &levels);
            let mut variants = Vec::new();
            for (label, stage) in [
                ("CD", Stage::FilterCommunities),
                ("CD+ML", Stage::FilterClassifier),
                ("CD+ML+Rule", Stage::FilterRules),
            ] {
                let s = self.snapshot(stage)?;
                variants.push((
                    label.to_string(),
                    s.members().map(|id| graph.category_title(id).clone()).collect::<BTreeSet<_>>(),
                ));
            }
            let rows = evaluate_category_sample(&items, &variants, &self.cfg.keyphrase.sample_levels);
            sample_rows = json!({ "sampled": items.len(), "rows": rows });
        }
        run.summary = format!("{} distinct terms compared against {} reference lists", own.1.len(), refs.len());
        run.report = json!({
            "vocabulary": name,
            "venn": comparisons,
            "levels": level_histogram(&vocab),
            "category_sample": sample_rows,
        });
        Ok(())
    }

    /// The built vocabulary's terms, optionally without uncovered unigram
    /// pages, and the reference lists.
    fn lexicon_terms(&self) -> Result<(Vocabulary, usize, Vec<ReferenceTermList>)> {
        let vocab = self.vocab()?;
        let refs = self.references()?;
        if self.cfg.keyphrase.prune_unigrams && !refs.is_empty() {
            let (pruned, removed) = prune_unigrams(&vocab, &refs);
            return Ok((pruned, removed, refs));
        }
        Ok((vocab, 0, refs))
    }

    fn corpus(&self, stage: Stage) -> Result<Corpus> {
        let path = self.require(stage, "input.corpus", self.cfg.input.corpus.as_ref())?;
        let corpus = read_corpus(path, self.cfg.keyphrase.include_title)?;
        if corpus.is_empty() {
            return Err(AppError::data(path, "corpus has no documents"));
        }
        Ok(corpus)
    }

    fn score(&self, corpus: &Corpus, lexicon: &CompiledLexicon) -> EvalReport {
        let rows = self.pool.install(|| corpus.documents().par_iter().map(|d| score_document(lexicon, d)).collect());
        EvalReport::from_scores(rows)
    }

    fn evaluate(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus(Stage::Evaluate)?;
        let (vocab, unigrams_removed, refs) = self.lexicon_terms()?;
        let name = self.cfg.vocab.name.clone();
        let mut lexicons = vec![(name.clone(), CompiledLexicon::compile(vocab.terms())?)];
        for r in &refs {
            lexicons.push((r.name.clone(), CompiledLexicon::compile(r.terms().iter())?));
        }
        let mut reports = Vec::new();
        let mut summary = serde_json::Map::new();
        for (lex_name, lexicon) in &lexicons {
            let report = self.score(&corpus, lexicon);
            run.output(format!("eval/{lex_name}.per_doc.tsv"), per_document_tsv(&report));
            run.output(format!("eval/{lex_name}.ecdf.tsv"), ecdf_tsv(&report));
            summary.insert(
                lex_name.clone(),
                json!({
                    "terms": lexicon.len(),
                    "precision": report.precision,
                    "recall": report.recall,
                    "f1": report.f1,
                    "extracted": report.extracted,
                    "matched": report.matched,
                    "annotated": report.annotated,
                    "precision_mean": report.precision_mean,
                    "precision_stddev": report.precision_stddev,
                }),
            );
            reports.push((lex_name.clone(), report));
        }
        let mut comparisons = Vec::new();
        for (other, report) in &reports[1..] {
            let c = compare_reports(&reports[0].1, report)?;
            comparisons.push(json!({ "a": name, "b": other, "comparison": c }));
        }
        let body = json!({
            "documents": corpus.len(),
            "unigrams_removed": unigrams_removed,
            "lexicons": summary,
            "comparisons": comparisons,
        });
        let mut bytes = serde_json::to_vec_pretty(&body).map_err(|e| AppError::Internal(e.to_string()))?;
        bytes.push(b'\n');
        run.output("eval/summary.json", bytes);
        let own = &reports[0].1;
        run.summary = format!(
            "{}: P {:.3} R {:.3} F1 {:.3} over {} documents",
            name,
            own.precision,
            own.recall,
            own.f1,
            corpus.len()
        );
        run.report = body;
        Ok(())
    }

    fn coverage(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus(Stage::Coverage)?;
        let (vocab, unigrams_removed, refs) = self.lexicon_terms()?;
        let name = self.cfg.vocab.name.clone();
        let mut sets = vec![
            (name.clone(), vocab.term_keys(None)),
            (format!("{name}.core"), vocab.term_keys(Some(true))),
            (format!("{name}.ancillary"), vocab.term_keys(Some(false))),
        ];
        sets.extend(refs.iter().map(|r| (r.name.clone(), r.terms().clone())));
        let mut out = serde_json::Map::new();
        for (n, terms) in &sets {
            out.insert(
                n.clone(),
                serde_json::to_value(coverage(&corpus, terms)).map_err(|e| AppError::Internal(e.to_string()))?,
            );
        }
        let own = coverage(&corpus, &sets[0].1);
        run.summary = format!(
            "{}: {} unique gold phrases ({:.1}%), {} occurrences ({:.1}%)",
            name,
            own.unique_matched,
            100.0 * own.unique_fraction,
            own.total_matched,
            100.0 * own.total_fraction
        );
        run.report = json!({ "unigrams_removed": unigrams_removed, "coverage": out });
        Ok(())
    }

    fn tag(&self, run: &mut StageRun) -> Result<()> {
        let corpus = self.corpus(Stage::Tag)?;
        let vocab = self.vocab()?;
        let lexicon = CompiledLexicon::compile(vocab.terms())?;
        let index = TermIndex::new(&vocab);
        let lines: Vec<String> = self.pool.install(|| {
            corpus
                .documents()
                .par_iter()
                .map(|d| {
                    let t = tag_abstract(&index, &lexicon, &d.text);
                    json!({ "id": d.id, "matches": t.matches, "category_counts": t.category_counts }).to_string()
                })
                .collect()
        });
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        run.output("tags.jsonl", out);
        run.summary = format!("tagged {} documents", corpus.len());
        run.report = json!({ "documents": corpus.len() });
        Ok(())
    }
}
