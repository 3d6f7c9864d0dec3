//! Generators and end-to-end helpers shared by the integration and
//! acceptance suites of the std crate.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};
use vocabforge::config::load_config;
use vocabforge::fixture::{gen_fixture, FixtureSpec, Truth};
use vocabforge::pipeline::Pipeline;

// ------------------------------------------------------------ SQL generator

/// Characters that stress the quoting rules: delimiters, escapes, statement
/// punctuation, comment openers and multi-byte text.
const TRICKY: &[&str] = &[
    "'", "\"", "\\", "\n", "\r", "\t", "\0", "\u{1a}", "\u{8}", ",", "(", ")", ";", "--", "/*", "*/", "#", "%", "_",
    " ", "é", "日本", "🦀", "VALUES", "),(", "');", "`",
];

/// Appends one character to a `quote`-delimited literal, choosing randomly
/// among the encodings that decode back to it.
fn sql_char(rng: &mut ChaCha8Rng, quote: char, ch: char, enc: &mut String, dec: &mut String) {
    match ch {
        q if q == quote => {
            enc.push(if rng.random_bool(0.5) { '\\' } else { q });
            enc.push(q);
        }
        '\'' | '"' => {
            if rng.random_bool(0.5) {
                enc.push('\\');
            }
            enc.push(ch);
        }
        '\\' => enc.push_str("\\\\"),
        '\n' => enc.push_str(if rng.random_bool(0.5) { "\\n" } else { "\n" }),
        '\r' => enc.push_str("\\r"),
        '\t' => enc.push_str(if rng.random_bool(0.5) { "\\t" } else { "\t" }),
        '\0' => enc.push_str("\\0"),
        '\u{1a}' => enc.push_str("\\Z"),
        '\u{8}' => enc.push_str("\\b"),
        '%' | '_' if rng.random_bool(0.5) => {
            // LIKE-pattern escapes keep their backslash.
            enc.push('\\');
            enc.push(ch);
            dec.push('\\');
        }
        _ => enc.push(ch),
    }
    dec.push(ch);
}

/// One string value encoded for a `quote`-delimited SQL literal, with the
/// exact text the parser must recover.
fn sql_string(rng: &mut ChaCha8Rng, quote: char) -> (String, String) {
    let mut enc = String::new();
    let mut dec = String::new();
    enc.push(quote);
    for _ in 0..rng.random_range(0..12) {
        if rng.random_bool(0.4) {
            let w: String = (0..rng.random_range(1..6)).map(|_| rng.random_range(b'a'..=b'z') as char).collect();
            enc.push_str(&w);
            dec.push_str(&w);
            continue;
        }
        for ch in TRICKY[rng.random_range(0..TRICKY.len())].chars() {
            sql_char(rng, quote, ch, &mut enc, &mut dec);
        }
        if rng.random_bool(0.05) {
            // Unknown escape: the backslash is dropped.
            enc.push_str("\\q");
            dec.push('q');
        }
    }
    enc.push(quote);
    (enc, dec)
}

fn sql_number(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..6) {
        0 => "NULL".into(),
        1 => format!("-{}", rng.random_range(0..1000)),
        2 => format!("{}.{}", rng.random_range(0..100), rng.random_range(0..100)),
        3 => format!("{}e{}", rng.random_range(1..9), rng.random_range(0..5)),
        _ => rng.random_range(0..u32::MAX).to_string(),
    }
}

fn pad(rng: &mut ChaCha8Rng) -> &'static str {
    [" ", "", "", "\n", "  ", "\t"][rng.random_range(0..6)]
}

/// A `category`-table dump (five columns per tuple) of `tuples` records
/// spread over several `INSERT` statements, interleaved with comments,
/// DDL, locks and inserts into other tables. Returns the dump and the
/// exact record list it encodes.
pub fn adversarial_dump(tuples: usize, seed: u64) -> (String, Vec<Vec<String>>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = String::from(
        "-- MySQL dump 10.13\n/*!40101 SET @OLD_CHARACTER_SET_CLIENT=@@CHARACTER_SET_CLIENT */;\n\
         DROP TABLE IF EXISTS `category`;\n\
         CREATE TABLE `category` (\n  `cat_id` int(10) unsigned NOT NULL,\n  `cat_title` varbinary(255) NOT NULL DEFAULT '',\n  \
         PRIMARY KEY (`cat_id`)\n) ENGINE=InnoDB DEFAULT CHARSET=binary;\n\
         LOCK TABLES `category` WRITE;\n/*!40000 ALTER TABLE `category` DISABLE KEYS */;\n",
    );
    let mut records = Vec::with_capacity(tuples);
    let mut left = tuples;
    while left > 0 {
        match rng.random_range(0..8) {
            0 => out.push_str("# hash comment with 'quote and VALUES (\n"),
            1 => out.push_str("/* block ; comment ) with ' quote */\n"),
            2 => {
                // Another table, including a tuple that would break our schema.
                let (s, _) = sql_string(&mut rng, '\'');
                out.push_str(&format!("INSERT INTO `categorylinks` VALUES (1,{s}),(2,'x;y');\n"));
            }
            3 => out.push_str("-- insert into `category` values (9,'not real',0,0,0);\n"),
            _ => {}
        }
        let n = rng.random_range(1..=left.min(200));
        left -= n;
        out.push_str(if rng.random_bool(0.5) {
            "INSERT INTO `category` VALUES "
        } else {
            "insert into category values"
        });
        for i in 0..n {
            if i > 0 {
                out.push(',');
                out.push_str(pad(&mut rng));
            }
            let id = rng.random_range(0..1_000_000u32).to_string();
            let (title_enc, title) = sql_string(&mut rng, '\'');
            let pages = sql_number(&mut rng);
            let (extra_enc, extra) = sql_string(&mut rng, '"');
            let files = sql_number(&mut rng);
            let p = pad(&mut rng);
            out.push_str(&format!("({p}{id},{title_enc}{p},{p}{pages}, {extra_enc},{files}{p})"));
            records.push(vec![id, title, pages, extra, files]);
        }
        out.push_str(";\n");
    }
    out.push_str("/*!40000 ALTER TABLE `category` ENABLE KEYS */;\nUNLOCK TABLES;\n");
    (out, records)
}

/// Streams a plain `category` dump of `tuples` records to `path`.
pub fn write_large_dump(path: &Path, tuples: usize) -> std::io::Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    let per_statement = 1000;
    for start in (0..tuples).step_by(per_statement) {
        w.write_all(b"INSERT INTO `category` VALUES ")?;
        for i in start..(start + per_statement).min(tuples) {
            if i > start {
                w.write_all(b",")?;
            }
            write!(w, "({i},'Category_{i}_O\\'Brien',{},{},0)", i % 97, i % 13)?;
        }
        w.write_all(b";\n")?;
    }
    w.flush()
}

/// Peak resident set size of this process in KiB, where the platform reports it.
pub fn peak_rss_kib() -> Option<u64> {
    let status = std::fs::read_to_string("/proc/self/status").ok()?;
    let line = status.lines().find(|l| l.starts_with("VmHWM:"))?;
    line.split_whitespace().nth(1)?.parse().ok()
}

// ---------------------------------------------------------------- pipeline

pub struct Fixture {
    pub dir: tempfile::TempDir,
    pub truth: Truth,
}

impl Fixture {
    pub fn new(spec: FixtureSpec) -> Fixture {
        let dir = tempfile::tempdir().expect("tempdir");
        let truth = gen_fixture(dir.path(), spec).expect("fixture");
        Fixture { dir, truth }
    }

    pub fn config(&self) -> PathBuf {
        self.dir.path().join("config.toml")
    }

    /// Runs every stage into `out` (relative to the fixture) with the given
    /// thread count and extra overrides.
    pub fn run_all(&self, out: &str, threads: usize, extra: &[(&str, &str)]) -> vocabforge::Result<PathBuf> {
        let out_dir = self.dir.path().join(out);
        let mut overrides = vec![
            ("output_dir".to_string(), out_dir.display().to_string()),
            ("threads".to_string(), threads.to_string()),
        ];
        overrides.extend(extra.iter().map(|(k, v)| (k.to_string(), v.to_string())));
        let cfg = load_config(Some(&self.config()), &overrides)?;
        Pipeline::new(cfg, false)?.run_all(|_| {})?;
        Ok(out_dir)
    }

    /// Fraction of planted-relevant categories kept, and fraction of
    /// planted-irrelevant ones leaked, in the final snapshot.
    pub fn scores(&self, out: &Path) -> (f64, f64, Vec<String>) {
        let text = std::fs::read_to_string(out.join("subtree/filter-rules.tsv")).expect("final snapshot");
        let kept: BTreeSet<&str> = text.lines().filter_map(|l| l.split('\t').next()).collect();
        let relevant: BTreeSet<&str> = self.truth.relevant.iter().map(String::as_str).collect();
        let irrelevant = self.truth.irrelevant_all();
        let recall = relevant.intersection(&kept).count() as f64 / relevant.len() as f64;
        let leaked: Vec<String> = irrelevant.intersection(&kept).map(|s| s.to_string()).collect();
        (recall, leaked.len() as f64 / irrelevant.len() as f64, leaked)
    }
}

/// sha256 of every file under `dir`, keyed by relative path.
pub fn tree_digest(dir: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir).expect("read_dir").map(|e| e.expect("entry").path()).collect();
        entries.sort();
        for p in entries {
            if p.is_dir() {
                walk(root, &p, out);
            } else {
                let rel = p.strip_prefix(root).expect("prefix").to_string_lossy().replace('\\', "/");
                let digest = Sha256::digest(std::fs::read(&p).expect("read"));
                out.insert(rel, digest.iter().map(|b| format!("{b:02x}")).collect());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Paths whose digests differ between two trees (including one-sided files).
pub fn tree_diff(a: &BTreeMap<String, String>, b: &BTreeMap<String, String>) -> Vec<String> {
    let keys: BTreeSet<&String> = a.keys().chain(b.keys()).collect();
    keys.into_iter().filter(|k| a.get(*k) != b.get(*k)).cloned().collect()
}
