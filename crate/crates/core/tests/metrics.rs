mod common;

use std::collections::BTreeSet;

use common::{oracle_ecdf, two_pass_stddev};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vocabforge_core::keyphrase::{
    compare_reports, coverage, evaluate, f1_score, lemma_key, CompiledLexicon, Corpus, Document, DocumentScore,
    EvalReport,
};

fn fixture() -> EvalReport {
    EvalReport::from_scores(vec![
        DocumentScore::new("d1", 4, 2, 5),
        DocumentScore::new("d2", 3, 0, 2),
        DocumentScore::new("d3", 1, 1, 1),
    ])
}

#[test]
fn three_document_fixture_is_exact() {
    let r = fixture();
    assert_eq!((r.precision, r.recall, r.f1), (3.0 / 8.0, 3.0 / 8.0, 3.0 / 8.0));
    let p: Vec<f64> = r.documents.iter().map(|d| d.precision).collect();
    assert_eq!(p, [0.5, 0.0, 1.0]);
    let zero = EvalReport::from_scores(r.documents.iter().map(|d| DocumentScore::new(d.id.clone(), 0, 0, 1)).collect());
    let c = compare_reports(&r, &zero).unwrap();
    assert_eq!((c.better, c.worse, c.equal), (2, 0, 1));
}

#[test]
fn stddev_and_ecdf_match_two_pass_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for case in 0..200 {
        let n = rng.random_range(1..300);
        let docs: Vec<DocumentScore> = (0..n)
            .map(|i| {
                let e = rng.random_range(0..12);
                let m = if e == 0 { 0 } else { rng.random_range(0..=e) };
                DocumentScore::new(format!("{i}"), e, m, rng.random_range(m..m + 5))
            })
            .collect();
        let values: Vec<f64> = docs.iter().map(|d| d.precision).collect();
        let r = EvalReport::from_scores(docs);
        assert!((r.precision_stddev - two_pass_stddev(&values)).abs() <= 1e-12, "case {case}");
        let ecdf: Vec<(f64, f64)> = r.ecdf.iter().map(|p| (p.precision, p.cumulative)).collect();
        let want = oracle_ecdf(&values);
        assert_eq!(ecdf.len(), want.len());
        for (a, b) in ecdf.iter().zip(&want) {
            assert!(a.0 == b.0 && (a.1 - b.1).abs() <= 1e-12, "case {case}: {a:?} vs {b:?}");
        }
        assert_eq!(ecdf.last().unwrap().1, 1.0);
        assert!(ecdf.windows(2).all(|w| w[0].1 <= w[1].1));
        assert!((r.f1 - f1_score(r.precision, r.recall)).abs() <= 1e-12);
        let (e, m): (usize, usize) = r.documents.iter().fold((0, 0), |acc, d| (acc.0 + d.extracted, acc.1 + d.matched));
        assert_eq!(r.precision, if e == 0 { 0.0 } else { m as f64 / e as f64 });
    }
}

const WORDS: &[&str] = &["graph", "graphs", "neural", "network", "data", "mining", "model", "models", "learning"];

fn random_corpus(rng: &mut ChaCha8Rng, docs: usize) -> Corpus {
    let phrase = |rng: &mut ChaCha8Rng| {
        (0..rng.random_range(1..=3)).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ")
    };
    let documents = (0..docs)
        .map(|i| {
            let text = (0..40).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" ");
            let keyphrases = (0..rng.random_range(0..6)).map(|_| phrase(rng)).collect();
            Document { id: format!("doc{i}"), text, keyphrases }
        })
        .collect();
    Corpus::new(documents).unwrap()
}

#[test]
fn coverage_matches_nested_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..50 {
        let corpus = random_corpus(&mut rng, 40);
        let vocab: BTreeSet<String> = (0..10)
            .map(|_| lemma_key(WORDS[rng.random_range(0..WORDS.len())]))
            .chain(["neural network".into()])
            .collect();
        let r = coverage(&corpus, &vocab);
        let mut unique = BTreeSet::new();
        let mut total = 0;
        for d in corpus.documents() {
            for k in &d.keyphrases {
                for v in &vocab {
                    if &lemma_key(k) == v {
                        unique.insert(v.clone());
                        total += 1;
                    }
                }
            }
        }
        assert_eq!((r.unique_matched, r.total_matched), (unique.len(), total));
        assert!(r.total_matched >= r.unique_matched);
        if let Some(ratio) = r.total_to_unique {
            assert_eq!(ratio, total as f64 / unique.len() as f64);
        }
    }
}

#[test]
fn adding_terms_never_lowers_recall() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let corpus = random_corpus(&mut rng, 60);
    let mut terms: Vec<String> = vec!["graph".into()];
    let mut last = evaluate(&corpus, &CompiledLexicon::compile(&terms).unwrap()).recall;
    for _ in 0..30 {
        let len = rng.random_range(1..=3);
        terms.push((0..len).map(|_| WORDS[rng.random_range(0..WORDS.len())]).collect::<Vec<_>>().join(" "));
        let r = evaluate(&corpus, &CompiledLexicon::compile(&terms).unwrap()).recall;
        assert!(r >= last);
        last = r;
    }
}
