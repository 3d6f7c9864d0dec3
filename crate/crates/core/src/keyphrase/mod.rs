//! Lemmatized exact-match keyphrase extraction and its evaluation.

mod eval;
mod lemma;
mod lexicon;
mod tag;

pub use eval::{
    compare_reports, coverage, evaluate, evaluate_category_sample, f1_score, sample_with_levels, score_document,
    Comparison, Corpus, CoverageReport, Document, DocumentScore, EcdfPoint, EvalReport, SampleItem, SampleRow,
};
pub use lemma::{lemma_key, lemmatize, tokenize, Token};
pub use lexicon::{CompiledLexicon, Extraction, PatternId, Span};
pub use tag::{tag_abstract, CategoryCount, TagMatch, Tagging, TermIndex};
