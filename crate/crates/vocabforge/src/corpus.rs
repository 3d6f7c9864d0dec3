//! Keyphrase corpora (JSON lines) and evaluation report files.
//!
//! Each corpus line is an object `{"id", "abstract", "keyphrases": [...]}`.
//! KP20k dumps load as well: a missing `keyphrases` falls back to
//! `keyword` (a `;`-separated string), a missing `id` becomes `line-N`, and
//! a `title` field is prepended to the abstract when `include_title` is set.

use std::fmt::Write as _;
use std::path::Path;

use serde_json::Value;
use vocabforge_core::keyphrase::{Corpus, Document, EvalReport};

use crate::error::{AppError, Result};
use crate::formats::read_text;

pub fn parse_corpus(path: &Path, text: &str, include_title: bool) -> Result<Corpus> {
    let mut docs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let err = |m: String| AppError::data(path, format!("line {line_no}: {m}"));
        let value: Value = serde_json::from_str(line).map_err(|e| err(format!("invalid JSON: {e}")))?;
        let obj = value.as_object().ok_or_else(|| err("expected a JSON object".into()))?;
        let id = match obj.get("id") {
            Some(Value::String(s)) => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            None => format!("line-{line_no}"),
            Some(_) => return Err(err("id must be a string or number".into())),
        };
        let mut text =
            obj.get("abstract").and_then(Value::as_str).ok_or_else(|| err("missing abstract".into()))?.to_string();
        if include_title {
            if let Some(title) = obj.get("title").and_then(Value::as_str) {
                text = format!("{title}. {text}");
            }
        }
        let keyphrases = match (obj.get("keyphrases"), obj.get("keyword")) {
            (Some(Value::Array(items)), _) => items
                .iter()
                .map(|v| v.as_str().map(str::to_string).ok_or_else(|| err("keyphrases must be strings".into())))
                .collect::<Result<Vec<_>>>()?,
            (None, Some(Value::String(s))) => {
                s.split(';').map(str::trim).filter(|k| !k.is_empty()).map(str::to_string).collect()
            }
            (None, None) => Vec::new(),
            _ => return Err(err("keyphrases must be an array of strings".into())),
        };
        docs.push(Document { id, text, keyphrases });
    }
    Corpus::new(docs).map_err(|e| AppError::data(path, e.to_string()))
}

pub fn read_corpus(path: &Path, include_title: bool) -> Result<Corpus> {
    parse_corpus(path, &read_text(path)?, include_title)
}

/// `id<TAB>extracted<TAB>matched<TAB>annotated<TAB>precision_i`.
pub fn per_document_tsv(report: &EvalReport) -> String {
    let mut out = String::from("# id\textracted\tmatched\tannotated\tprecision\n");
    for d in &report.documents {
        let _ = writeln!(out, "{}\t{}\t{}\t{}\t{}", d.id, d.extracted, d.matched, d.annotated, d.precision);
    }
    out
}

/// `precision<TAB>cumfraction`.
pub fn ecdf_tsv(report: &EvalReport) -> String {
    let mut out = String::from("# precision\tcumfraction\n");
    for p in &report.ecdf {
        let _ = writeln!(out, "{}\t{}", p.precision, p.cumulative);
    }
    out
}
