//! Terminal review of unlabeled categories.
//!
//! A seeded random sample of snapshot members without a label is presented
//! one at a time with its level and in-subtree parents. Each answer is
//! appended to the annotation file immediately, so an interrupted session
//! resumes where it stopped. Answers come from any line source: the
//! terminal, or a file replaying a session with identical results.

use std::collections::BTreeSet;
use std::fs::OpenOptions;
use std::io::{BufRead, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vocabforge_core::prune::{AnnotationSet, Relevance};
use vocabforge_core::{CategoryGraph, CategoryId, Subtree};

use crate::error::{AppError, Result};
use crate::formats::{annotation_line, read_annotations};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ReviewSummary {
    pub unlabeled: usize,
    pub presented: usize,
    pub appended: usize,
    pub skipped: usize,
    pub quit: bool,
}

enum Answer {
    Label(Relevance),
    Skip,
    Quit,
}

fn parse_answer(s: &str) -> Option<Answer> {
    Some(match s.trim().to_ascii_lowercase().as_str() {
        "r" | "relevant" | "y" | "yes" => Answer::Label(Relevance::Relevant),
        "i" | "irrelevant" | "n" | "no" => Answer::Label(Relevance::Irrelevant),
        "s" | "skip" => Answer::Skip,
        "q" | "quit" => Answer::Quit,
        _ => return None,
    })
}

/// Members without a label, in the order they would be presented.
pub fn review_sample(
    subtree: &Subtree,
    graph: &CategoryGraph,
    annotations: &AnnotationSet,
    sample_size: usize,
    seed: u64,
) -> (usize, Vec<CategoryId>) {
    let mut unlabeled: Vec<CategoryId> =
        subtree.members().filter(|&id| annotations.get(graph.category_title(id)).is_none()).collect();
    let total = unlabeled.len();
    unlabeled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    unlabeled.truncate(sample_size);
    (total, unlabeled)
}

/// Runs a review session, appending labels to `annotations_path`.
///
/// `interactive` only changes how invalid answers are handled: a person is
/// asked again, a replayed answers file is rejected.
#[allow(clippy::too_many_arguments)]
pub fn annotate_review(
    subtree: &Subtree,
    graph: &CategoryGraph,
    annotations_path: &Path,
    sample_size: usize,
    seed: u64,
    answers: &mut dyn BufRead,
    interactive: bool,
    out: &mut dyn Write,
) -> Result<ReviewSummary> {
    let annotations =
        if annotations_path.exists() { read_annotations(annotations_path)? } else { AnnotationSet::new() };
    let (unlabeled, sample) = review_sample(subtree, graph, &annotations, sample_size, seed);
    let mut summary = ReviewSummary { unlabeled, ..Default::default() };
    let io_err = |e| AppError::io(annotations_path, e);
    if sample.is_empty() {
        writeln!(out, "nothing to review: every category in the snapshot is labeled").map_err(io_err)?;
        return Ok(summary);
    }
    let mut file = OpenOptions::new().create(true).append(true).open(annotations_path).map_err(io_err)?;
    let mut line = String::new();
    let mut answer_no = 0usize;
    'items: for (k, &id) in sample.iter().enumerate() {
        let parents: BTreeSet<&str> = graph
            .parents(id)
            .iter()
            .filter(|&&p| subtree.contains(p))
            .map(|&p| graph.category_title(p).as_str())
            .collect();
        let parents: Vec<&str> = parents.into_iter().collect();
        writeln!(
            out,
            "[{}/{}] {}\n    level {}; parents: {}",
            k + 1,
            sample.len(),
            graph.category_title(id),
            subtree.level(id).unwrap_or(0),
            if parents.is_empty() { "(seed)".to_string() } else { parents.join(", ") }
        )
        .map_err(io_err)?;
        summary.presented += 1;
        loop {
            write!(out, "    relevant / irrelevant / skip / quit [r/i/s/q]: ").map_err(io_err)?;
            out.flush().map_err(io_err)?;
            line.clear();
            if answers.read_line(&mut line).map_err(io_err)? == 0 {
                writeln!(out).map_err(io_err)?;
                summary.quit = true;
                break 'items;
            }
            answer_no += 1;
            match parse_answer(&line) {
                Some(Answer::Label(r)) => {
                    file.write_all(annotation_line(graph.category_title(id), r).as_bytes()).map_err(io_err)?;
                    file.flush().map_err(io_err)?;
                    summary.appended += 1;
                    break;
                }
                Some(Answer::Skip) => {
                    summary.skipped += 1;
                    break;
                }
                Some(Answer::Quit) => {
                    summary.quit = true;
                    break 'items;
                }
                None if interactive => {
                    writeln!(out, "    please answer r, i, s or q").map_err(io_err)?;
                }
                None => {
                    return Err(AppError::Usage(format!(
                        "answer {answer_no} ({:?}) is not one of r, i, s, q",
                        line.trim()
                    )));
                }
            }
        }
    }
    writeln!(
        out,
        "appended {} labels, skipped {}, {} unlabeled categories before this session",
        summary.appended, summary.skipped, summary.unlabeled
    )
    .map_err(io_err)?;
    Ok(summary)
}
