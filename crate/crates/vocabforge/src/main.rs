use std::ffi::OsString;
use std::io::{BufReader, IsTerminal};
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use vocabforge::config::load_config;
use vocabforge::error::{EXIT_OK, EXIT_USAGE};
use vocabforge::fixture::{gen_fixture, FixtureSpec};
use vocabforge::pipeline::{Pipeline, Stage};
use vocabforge::review::annotate_review;
use vocabforge::{AppError, Result};

/// Build and evaluate domain subject-heading vocabularies from a category graph.
///
/// Any configuration key can be overridden on the `run` and `review` command
/// lines with a flag of the same dotted name, e.g. `--classifier.threshold 0.6`
/// or `--vocab.core_max_level=6`.
#[derive(Parser, Debug)]
#[command(name = "vocabforge", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one pipeline stage, or `all` of them in order.
    Run {
        /// ingest, extract, filter-manual, communities, filter-communities,
        /// train-classifier, filter-classifier, filter-rules, attach-pages,
        /// compare, evaluate, coverage, tag, or all.
        stage: String,
        /// TOML configuration file; relative paths inside it resolve against its directory.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Proceed even if upstream artifacts were produced by a different configuration.
        #[arg(long)]
        force: bool,
        /// Global random seed from which every component seed is derived.
        #[arg(long)]
        seed_rng: Option<u64>,
        /// Worker threads (0 = one per core); never changes any output.
        #[arg(long)]
        threads: Option<usize>,
        /// Remove every child of a removed category, even one with another surviving parent.
        #[arg(long)]
        strict_children: bool,
    },
    /// Write a synthetic dataset with planted relevant and irrelevant structure.
    GenFixture {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 7)]
        seed: u64,
        #[arg(long, default_value_t = 200)]
        categories: usize,
        #[arg(long, default_value_t = 500)]
        pages: usize,
        #[arg(long, default_value_t = 30)]
        docs: usize,
    },
    /// Label a random sample of unlabeled categories from a stage snapshot.
    Review {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Annotation file to append to (created if missing).
        #[arg(long)]
        annotations: PathBuf,
        /// Stage whose snapshot is reviewed.
        #[arg(long, default_value = "extract")]
        stage: String,
        #[arg(long, default_value_t = 20)]
        sample_size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Replay answers (r, i, s, q; one per line) instead of prompting.
        #[arg(long)]
        answers: Option<PathBuf>,
    },
}

/// Separates `--dotted.key value` / `--key=value` configuration overrides
/// from the arguments clap understands. A flag is an override when its name
/// contains a dot or an underscore (clap flags are kebab-case), or is `seeds`.
type Overrides = Vec<(String, String)>;

fn split_overrides(args: Vec<OsString>) -> std::result::Result<(Vec<OsString>, Overrides), String> {
    let mut kept = Vec::new();
    let mut overrides = Vec::new();
    let mut iter = args.into_iter();
    while let Some(arg) = iter.next() {
        let Some(s) = arg.to_str().and_then(|s| s.strip_prefix("--")) else {
            kept.push(arg);
            continue;
        };
        let (name, inline) = match s.split_once('=') {
            Some((n, v)) => (n.to_string(), Some(v.to_string())),
            None => (s.to_string(), None),
        };
        if !(name.contains('.') || name.contains('_') || name == "seeds") {
            kept.push(arg);
            continue;
        }
        let value = match inline {
            Some(v) => v,
            None => iter.next().and_then(|v| v.into_string().ok()).ok_or_else(|| format!("--{name} needs a value"))?,
        };
        overrides.push((name, value));
    }
    Ok((kept, overrides))
}

fn run_stage(
    stage: &str,
    config: Option<PathBuf>,
    force: bool,
    seed_rng: Option<u64>,
    threads: Option<usize>,
    strict_children: bool,
    mut overrides: Vec<(String, String)>,
) -> Result<()> {
    if let Some(s) = seed_rng {
        overrides.push(("rng_seed".into(), s.to_string()));
    }
    if let Some(t) = threads {
        overrides.push(("threads".into(), t.to_string()));
    }
    if strict_children {
        overrides.push(("prune_mode".into(), "\"strict_children\"".into()));
    }
    let stages: Vec<Stage> = if stage == "all" {
        Stage::ALL.to_vec()
    } else {
        vec![Stage::parse(stage).ok_or_else(|| AppError::Usage(format!("unknown stage {stage:?}")))?]
    };
    let cfg = load_config(config.as_deref(), &overrides)?;
    let pipeline = Pipeline::new(cfg, force)?;
    let started = Instant::now();
    let report = |o: &vocabforge::pipeline::StageOutcome, t: Instant| {
        for w in &o.warnings {
            eprintln!("warning: {}: {w}", o.stage);
        }
        eprintln!("{:<19} {} [{}] {:.2}s", o.stage.name(), o.summary, &o.config_hash[..12], t.elapsed().as_secs_f64());
    };
    if stages.len() == 1 {
        let outcome = pipeline.run(stages[0])?;
        report(&outcome, started);
    } else {
        pipeline.run_all(|outcome| report(outcome, started))?;
    }
    Ok(())
}

fn review(
    config: Option<PathBuf>,
    annotations: PathBuf,
    stage: &str,
    sample_size: usize,
    seed: u64,
    answers: Option<PathBuf>,
    overrides: Vec<(String, String)>,
) -> Result<()> {
    let stage = Stage::parse(stage).ok_or_else(|| AppError::Usage(format!("unknown stage {stage:?}")))?;
    let cfg = load_config(config.as_deref(), &overrides)?;
    let pipeline = Pipeline::new(cfg, false)?;
    let subtree = pipeline.snapshot(stage)?;
    let graph = vocabforge::formats::read_graph_tables(&pipeline.output_dir().join("graph"))?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match answers {
        Some(path) => {
            let file = std::fs::File::open(&path).map_err(|e| AppError::io(&path, e))?;
            let mut reader = BufReader::new(file);
            annotate_review(&subtree, &graph.graph, &annotations, sample_size, seed, &mut reader, false, &mut out)?;
        }
        None => {
            let stdin = std::io::stdin();
            if !stdin.is_terminal() {
                return Err(AppError::Usage(
                    "review needs a terminal; pass --answers FILE to replay answers non-interactively".into(),
                ));
            }
            let mut reader = stdin.lock();
            annotate_review(&subtree, &graph.graph, &annotations, sample_size, seed, &mut reader, true, &mut out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let (args, overrides) = match split_overrides(std::env::args_os().collect()) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_USAGE as u8);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code as u8);
        }
    };
    let result = match cli.command {
        Command::Run { stage, config, force, seed_rng, threads, strict_children } => {
            run_stage(&stage, config, force, seed_rng, threads, strict_children, overrides)
        }
        Command::GenFixture { out, seed, categories, pages, docs } => {
            if !overrides.is_empty() {
                Err(AppError::Usage("gen-fixture takes no configuration overrides".into()))
            } else {
                gen_fixture(&out, FixtureSpec { categories, pages, docs, seed }).map(|truth| {
                    eprintln!(
                        "wrote fixture to {}: {} categories ({} relevant), {} pages, {} documents",
                        out.display(),
                        categories,
                        truth.relevant.len(),
                        pages,
                        docs
                    );
                })
            }
        }
        Command::Review { config, annotations, stage, sample_size, seed, answers } => {
            review(config, annotations, &stage, sample_size, seed, answers, overrides)
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
