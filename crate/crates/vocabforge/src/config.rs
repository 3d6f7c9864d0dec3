//! Pipeline configuration: one TOML file, every key overridable from the
//! command line by its dotted name (`--classifier.threshold 0.4`).

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use vocabforge_core::classify::{EmbeddingConfig, MlpConfig, NegativeDepth, TextFeatureConfig};
use vocabforge_core::PruneMode;

use crate::error::{AppError, Result};

pub const DEFAULT_SEEDS: [&str; 5] =
    ["computer science", "information science", "computer engineering", "statistics", "mathematics"];

fn default_seeds() -> Vec<String> {
    DEFAULT_SEEDS.iter().map(|s| s.to_string()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InputFormat {
    #[default]
    Tsv,
    Sql,
}

/// Input files. Relative paths resolve against the config file's directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InputConfig {
    pub format: InputFormat,
    pub cat_edges: Option<PathBuf>,
    pub cat_pages: Option<PathBuf>,
    pub titles: Option<PathBuf>,
    pub redirects: Option<PathBuf>,
    pub category_sql: Option<PathBuf>,
    pub categorylinks_sql: Option<PathBuf>,
    pub page_sql: Option<PathBuf>,
    pub redirect_sql: Option<PathBuf>,
    /// Column count of the `page` table, which differs between releases.
    pub page_columns: usize,
    pub references: Vec<PathBuf>,
    pub annotations: Vec<PathBuf>,
    /// Labeled sample for per-level precision/recall of the pruning variants.
    pub sample_annotations: Option<PathBuf>,
    pub rules: Option<PathBuf>,
    pub corpus: Option<PathBuf>,
    /// `title<TAB>positive|negative`; replaces the trained classifier.
    pub label_overrides: Option<PathBuf>,
}

impl Default for InputConfig {
    fn default() -> Self {
        InputConfig {
            format: InputFormat::Tsv,
            cat_edges: None,
            cat_pages: None,
            titles: None,
            redirects: None,
            category_sql: None,
            categorylinks_sql: None,
            page_sql: None,
            redirect_sql: None,
            page_columns: 12,
            references: Vec::new(),
            annotations: Vec::new(),
            sample_annotations: None,
            rules: None,
            corpus: None,
            label_overrides: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StageToggles {
    pub manual: bool,
    pub communities: bool,
    pub classifier: bool,
    pub rules: bool,
}

impl Default for StageToggles {
    fn default() -> Self {
        StageToggles { manual: true, communities: true, classifier: true, rules: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ManualConfig {
    pub max_level: u32,
}

impl Default for ManualConfig {
    fn default() -> Self {
        ManualConfig { max_level: 3 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CommunityConfig {
    pub resolution: f64,
    pub seed: Option<u64>,
}

impl Default for CommunityConfig {
    fn default() -> Self {
        CommunityConfig { resolution: 1.0, seed: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierConfig {
    pub threshold: f64,
    pub negative_depth: NegativeDepth,
    /// Seed for sampling negatives; derived from `rng_seed` when absent.
    pub sample_seed: Option<u64>,
    pub mode: PruneMode,
    pub embedding: EmbeddingSection,
    pub mlp: MlpSection,
    pub text: TextFeatureConfig,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        ClassifierConfig {
            threshold: 0.5,
            negative_depth: NegativeDepth::Children,
            sample_seed: None,
            mode: PruneMode::StrictChildren,
            embedding: EmbeddingSection::default(),
            mlp: MlpSection::default(),
            text: TextFeatureConfig::default(),
        }
    }
}

/// [`EmbeddingConfig`] with an optional seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingSection {
    pub dimension: usize,
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub seed: Option<u64>,
}

impl Default for EmbeddingSection {
    fn default() -> Self {
        let d = EmbeddingConfig::default();
        EmbeddingSection {
            dimension: d.dimension,
            walks_per_node: d.walks_per_node,
            walk_length: d.walk_length,
            window: d.window,
            negatives: d.negatives,
            epochs: d.epochs,
            learning_rate: d.learning_rate,
            seed: None,
        }
    }
}

impl EmbeddingSection {
    pub fn resolve(&self, seed: u64) -> EmbeddingConfig {
        EmbeddingConfig {
            dimension: self.dimension,
            walks_per_node: self.walks_per_node,
            walk_length: self.walk_length,
            window: self.window,
            negatives: self.negatives,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            rng_seed: seed,
        }
    }
}

/// [`MlpConfig`] with an optional seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MlpSection {
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub folds: usize,
    pub seed: Option<u64>,
}

impl Default for MlpSection {
    fn default() -> Self {
        let d = MlpConfig::default();
        MlpSection {
            hidden: d.hidden,
            epochs: d.epochs,
            batch_size: d.batch_size,
            learning_rate: d.learning_rate,
            folds: d.folds,
            seed: None,
        }
    }
}

impl MlpSection {
    pub fn resolve(&self, seed: u64) -> MlpConfig {
        MlpConfig {
            hidden: self.hidden,
            epochs: self.epochs,
            batch_size: self.batch_size,
            learning_rate: self.learning_rate,
            folds: self.folds,
            rng_seed: seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabSection {
    pub name: String,
    pub core_max_level: u32,
    pub max_redirect_chain: usize,
}

impl Default for VocabSection {
    fn default() -> Self {
        VocabSection { name: "vocabulary".into(), core_max_level: 7, max_redirect_chain: 5 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct KeyphraseConfig {
    /// Drop single-token page terms not covered by a reference list before
    /// evaluating and measuring coverage.
    pub prune_unigrams: bool,
    /// Prepend a corpus record's `title` to its abstract.
    pub include_title: bool,
    /// Levels reported by the labeled-sample evaluation.
    pub sample_levels: Vec<u32>,
}

impl Default for KeyphraseConfig {
    fn default() -> Self {
        KeyphraseConfig { prune_unigrams: true, include_title: false, sample_levels: (1..=7).collect() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub output_dir: PathBuf,
    pub rng_seed: u64,
    /// Worker threads for parallel stages; 0 lets the runtime decide.
    /// Results never depend on it.
    pub threads: usize,
    pub seeds: Vec<String>,
    /// Removal propagation for the manual, community and rule stages.
    pub prune_mode: PruneMode,
    pub input: InputConfig,
    pub stages: StageToggles,
    pub manual: ManualConfig,
    pub communities: CommunityConfig,
    pub classifier: ClassifierConfig,
    pub vocab: VocabSection,
    pub keyphrase: KeyphraseConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            output_dir: PathBuf::from("out"),
            rng_seed: 0,
            threads: 0,
            seeds: default_seeds(),
            prune_mode: PruneMode::Reachability,
            input: InputConfig::default(),
            stages: StageToggles::default(),
            manual: ManualConfig::default(),
            communities: CommunityConfig::default(),
            classifier: ClassifierConfig::default(),
            vocab: VocabSection::default(),
            keyphrase: KeyphraseConfig::default(),
        }
    }
}

/// Seed for one randomized component: explicit when configured, otherwise
/// mixed from the global seed and the component name.
pub fn derive_seed(global: u64, component: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325 ^ global;
    for b in component.bytes() {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    // splitmix64 finalizer
    h = (h ^ (h >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    h = (h ^ (h >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    h ^ (h >> 31)
}

impl PipelineConfig {
    pub fn louvain_seed(&self) -> u64 {
        self.communities.seed.unwrap_or_else(|| derive_seed(self.rng_seed, "louvain"))
    }

    pub fn embedding_seed(&self) -> u64 {
        self.classifier.embedding.seed.unwrap_or_else(|| derive_seed(self.rng_seed, "embedding"))
    }

    pub fn mlp_seed(&self) -> u64 {
        self.classifier.mlp.seed.unwrap_or_else(|| derive_seed(self.rng_seed, "mlp"))
    }

    pub fn sample_seed(&self) -> u64 {
        self.classifier.sample_seed.unwrap_or_else(|| derive_seed(self.rng_seed, "negatives"))
    }

    pub fn embedding(&self) -> EmbeddingConfig {
        self.classifier.embedding.resolve(self.embedding_seed())
    }

    pub fn mlp(&self) -> MlpConfig {
        self.classifier.mlp.resolve(self.mlp_seed())
    }

    /// Checks value ranges. File existence is checked per stage, when the
    /// file is actually needed.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(AppError::Config(m.into()));
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if !(0.0..=1.0).contains(&self.classifier.threshold) {
            return bad("classifier.threshold must be in [0, 1]");
        }
        #[allow(clippy::neg_cmp_op_on_partial_ord)] // also rejects NaN
        if !(self.communities.resolution > 0.0) {
            return bad("communities.resolution must be positive");
        }
        if self.input.page_columns < 4 {
            return bad("input.page_columns must be at least 4");
        }
        self.embedding().validate()?;
        self.mlp().validate()?;
        self.classifier.text.validate()?;
        Ok(())
    }

    /// Makes relative input paths absolute against `base`.
    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        let i = &mut self.input;
        for p in [
            &mut i.cat_edges,
            &mut i.cat_pages,
            &mut i.titles,
            &mut i.redirects,
            &mut i.category_sql,
            &mut i.categorylinks_sql,
            &mut i.page_sql,
            &mut i.redirect_sql,
            &mut i.sample_annotations,
            &mut i.rules,
            &mut i.corpus,
            &mut i.label_overrides,
        ]
        .into_iter()
        .flatten()
        {
            fix(p);
        }
        i.references.iter_mut().for_each(fix);
        i.annotations.iter_mut().for_each(fix);
    }
}

/// Sets `path` (dotted) in `table` to `raw`, parsed as a TOML value when
/// possible and as a plain string otherwise.
pub fn apply_override(table: &mut toml::Table, path: &str, raw: &str) -> Result<()> {
    let value: toml::Value = match format!("v = {raw}").parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(AppError::Usage(format!("malformed option name --{path}")));
    }
    let (last, parents) = keys.split_last().expect("non-empty");
    let mut cur = table;
    for key in parents {
        let entry = cur.entry(key.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry.as_table_mut().ok_or_else(|| AppError::Usage(format!("--{path}: {key} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Loads the config file (if any), applies `overrides` in order, and
/// resolves relative paths against the config file's directory (or the
/// working directory when there is no file).
pub fn load_config(path: Option<&Path>, overrides: &[(String, String)]) -> Result<PipelineConfig> {
    let (mut table, base) = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| AppError::io(p, e))?;
            let table: toml::Table = text.parse().map_err(|e| AppError::Config(format!("{}: {e}", p.display())))?;
            let base = p.parent().map(Path::to_path_buf).unwrap_or_default();
            (table, base)
        }
        None => (toml::Table::new(), PathBuf::new()),
    };
    for (k, v) in overrides {
        apply_override(&mut table, k, v)?;
    }
    let mut cfg: PipelineConfig = toml::Value::Table(table).try_into().map_err(|e| AppError::Config(e.to_string()))?;
    let base = if base.as_os_str().is_empty() { PathBuf::from(".") } else { base };
    cfg.resolve_paths(&base);
    cfg.validate()?;
    Ok(cfg)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        let cfg = load_config(None, &[]).unwrap();
        assert_eq!(cfg.seeds.len(), 5);
        assert_eq!(cfg.classifier.mode, PruneMode::StrictChildren);
    }

    #[test]
    fn dotted_overrides_parse_values() {
        let o = |k: &str, v: &str| (k.to_string(), v.to_string());
        let cfg = load_config(
            None,
            &[
                o("classifier.threshold", "0.25"),
                o("classifier.mlp.hidden", "16"),
                o("vocab.name", "wiki"),
                o("seeds", "[\"a\", \"b\"]"),
                o("prune_mode", "strict_children"),
            ],
        )
        .unwrap();
        assert_eq!(cfg.classifier.threshold, 0.25);
        assert_eq!(cfg.classifier.mlp.hidden, 16);
        assert_eq!(cfg.vocab.name, "wiki");
        assert_eq!(cfg.seeds, vec!["a", "b"]);
        assert_eq!(cfg.prune_mode, PruneMode::StrictChildren);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let o = |k: &str, v: &str| vec![(k.to_string(), v.to_string())];
        for (k, v) in [("classifier.thresold", "0.2"), ("classifier.threshold", "2.0"), ("seeds", "[]")] {
            let err = load_config(None, &o(k, v)).unwrap_err();
            assert_eq!(err.exit_code(), crate::error::EXIT_USAGE, "{k}");
        }
    }

    #[test]
    fn seeds_derive_per_component() {
        let cfg = PipelineConfig::default();
        assert_ne!(cfg.louvain_seed(), cfg.mlp_seed());
        let mut other = cfg.clone();
        other.rng_seed = 1;
        assert_ne!(cfg.louvain_seed(), other.louvain_seed());
        other.communities.seed = Some(7);
        assert_eq!(other.louvain_seed(), 7);
    }
}
