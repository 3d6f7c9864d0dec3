use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::keyphrase::lemma::{lemmatize, tokenize};

pub type PatternId = u32;

const ROOT: u32 = 0;
const NONE: u32 = u32::MAX;

/// Byte span of a match in the source text, first token start to last token end.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

#[derive(Debug, Clone)]
struct Pattern {
    tokens: Vec<u32>,
    key: String,
    sources: Vec<String>,
}

#[derive(Debug, Clone)]
struct Node {
    /// sorted by token id
    next: Vec<(u32, u32)>,
    fail: u32,
    /// nearest node on the fail chain that ends a pattern
    dict: u32,
    output: u32,
}

impl Node {
    fn new() -> Self {
        Node { next: Vec::new(), fail: ROOT, dict: NONE, output: NONE }
    }

    fn step(&self, token: u32) -> Option<u32> {
        self.next.binary_search_by_key(&token, |&(t, _)| t).ok().map(|i| self.next[i].1)
    }
}

/// Immutable multi-pattern matcher over lemmatized token sequences.
///
/// Patterns are interned token-id sequences stored in an Aho-Corasick
/// automaton whose alphabet is the lexicon's lemma vocabulary. Text tokens
/// outside that vocabulary reset the automaton to the root.
#[derive(Debug, Clone)]
pub struct CompiledLexicon {
    vocab: BTreeMap<String, u32>,
    patterns: Vec<Pattern>,
    key_index: BTreeMap<String, PatternId>,
    nodes: Vec<Node>,
    skipped: Vec<String>,
}

/// Patterns found in one text. Each pattern appears once, with every span.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extraction {
    pub matches: Vec<(PatternId, Vec<Span>)>,
}

impl Extraction {
    pub fn len(&self) -> usize {
        self.matches.len()
    }

    pub fn is_empty(&self) -> bool {
        self.matches.is_empty()
    }

    pub fn pattern_ids(&self) -> impl Iterator<Item = PatternId> + '_ {
        self.matches.iter().map(|(p, _)| *p)
    }
}

impl CompiledLexicon {
    /// Tokenizes and lemmatizes each term. Terms sharing a lemma sequence
    /// collapse into one pattern that remembers all of its sources; terms with
    /// no tokens are skipped and listed in [`CompiledLexicon::skipped_terms`].
    pub fn compile<I, S>(terms: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut vocab: BTreeMap<String, u32> = BTreeMap::new();
        let mut patterns: Vec<Pattern> = Vec::new();
        let mut key_index: BTreeMap<String, PatternId> = BTreeMap::new();
        let mut skipped = Vec::new();
        for term in terms {
            let term = term.as_ref();
            let lemmas: Vec<String> = tokenize(term).iter().map(|t| lemmatize(&t.text)).collect();
            if lemmas.is_empty() {
                skipped.push(String::from(term));
                continue;
            }
            let key = lemmas.join(" ");
            if let Some(&id) = key_index.get(&key) {
                let sources = &mut patterns[id as usize].sources;
                if !sources.iter().any(|s| s == term) {
                    sources.push(String::from(term));
                }
                continue;
            }
            let tokens = lemmas
                .into_iter()
                .map(|l| {
                    let next = vocab.len() as u32;
                    *vocab.entry(l).or_insert(next)
                })
                .collect();
            let id = patterns.len() as PatternId;
            key_index.insert(key.clone(), id);
            patterns.push(Pattern { tokens, key, sources: alloc::vec![String::from(term)] });
        }
        if patterns.is_empty() {
            return Err(Error::EmptyLexicon);
        }
        let nodes = build_automaton(&patterns);
        Ok(CompiledLexicon { vocab, patterns, key_index, nodes, skipped })
    }

    pub fn len(&self) -> usize {
        self.patterns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.patterns.is_empty()
    }

    pub fn skipped_terms(&self) -> &[String] {
        &self.skipped
    }

    /// Lemma key (space-joined lemmas) of a pattern.
    pub fn key(&self, id: PatternId) -> &str {
        &self.patterns[id as usize].key
    }

    pub fn sources(&self, id: PatternId) -> &[String] {
        &self.patterns[id as usize].sources
    }

    pub fn pattern_len(&self, id: PatternId) -> usize {
        self.patterns[id as usize].tokens.len()
    }

    pub fn find_key(&self, key: &str) -> Option<PatternId> {
        self.key_index.get(key).copied()
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.patterns.iter().map(|p| p.key.as_str())
    }

    /// Every pattern that occurs as a contiguous token run in `text`,
    /// including nested and overlapping ones.
    pub fn extract(&self, text: &str) -> Extraction {
        let tokens = tokenize(text);
        let mut found: BTreeMap<PatternId, Vec<Span>> = BTreeMap::new();
        let mut state = ROOT;
        for (i, tok) in tokens.iter().enumerate() {
            let Some(&tid) = self.vocab.get(&lemmatize(&tok.text)) else {
                state = ROOT;
                continue;
            };
            loop {
                if let Some(next) = self.nodes[state as usize].step(tid) {
                    state = next;
                    break;
                }
                if state == ROOT {
                    break;
                }
                state = self.nodes[state as usize].fail;
            }
            let mut out =
                if self.nodes[state as usize].output != NONE { state } else { self.nodes[state as usize].dict };
            while out != NONE {
                let pid = self.nodes[out as usize].output;
                let len = self.patterns[pid as usize].tokens.len();
                let span = Span { start: tokens[i + 1 - len].start, end: tok.end };
                found.entry(pid).or_default().push(span);
                out = self.nodes[out as usize].dict;
            }
        }
        Extraction { matches: found.into_iter().collect() }
    }
}

fn build_automaton(patterns: &[Pattern]) -> Vec<Node> {
    let mut nodes = alloc::vec![Node::new()];
    for (pid, p) in patterns.iter().enumerate() {
        let mut state = ROOT;
        for &tok in &p.tokens {
            state = match nodes[state as usize].step(tok) {
                Some(next) => next,
                None => {
                    let id = nodes.len() as u32;
                    nodes.push(Node::new());
                    let edges = &mut nodes[state as usize].next;
                    let pos = edges.partition_point(|&(t, _)| t < tok);
                    edges.insert(pos, (tok, id));
                    id
                }
            };
        }
        nodes[state as usize].output = pid as u32;
    }

    // breadth-first fail links
    let mut queue = alloc::collections::VecDeque::new();
    let root_edges = nodes[ROOT as usize].next.clone();
    for &(_, child) in &root_edges {
        nodes[child as usize].fail = ROOT;
        queue.push_back(child);
    }
    while let Some(state) = queue.pop_front() {
        let edges = nodes[state as usize].next.clone();
        for (tok, child) in edges {
            let mut f = nodes[state as usize].fail;
            let fail = loop {
                if let Some(n) = nodes[f as usize].step(tok) {
                    break n;
                }
                if f == ROOT {
                    break ROOT;
                }
                f = nodes[f as usize].fail;
            };
            nodes[child as usize].fail = fail;
            nodes[child as usize].dict =
                if nodes[fail as usize].output != NONE { fail } else { nodes[fail as usize].dict };
            queue.push_back(child);
        }
    }
    nodes
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn keys(lex: &CompiledLexicon, text: &str) -> Vec<String> {
        let mut k: Vec<String> = lex.extract(text).pattern_ids().map(|p| lex.key(p).into()).collect();
        k.sort();
        k
    }

    #[test]
    fn inflections_merge() {
        let lex = CompiledLexicon::compile(["neural networks", "neural network"]).unwrap();
        assert_eq!(lex.len(), 1);
        assert_eq!(lex.key(0), "neural network");
        assert_eq!(lex.sources(0), ["neural networks", "neural network"]);
    }

    #[test]
    fn blank_terms_are_skipped() {
        assert_eq!(CompiledLexicon::compile([""]).unwrap_err(), Error::EmptyLexicon);
        let lex = CompiledLexicon::compile(["", "graph"]).unwrap();
        assert_eq!(lex.skipped_terms(), [""]);
    }

    #[test]
    fn nested_and_overlapping() {
        let lex = CompiledLexicon::compile([
            "radio frequency",
            "radio frequency identification",
            "frequency identification",
            "identification",
        ])
        .unwrap();
        assert_eq!(
            keys(&lex, "Using radio frequency identification tags."),
            vec!["frequency identification", "identification", "radio frequency", "radio frequency identification"]
        );
    }

    #[test]
    fn spans_and_repeats() {
        let lex = CompiledLexicon::compile(["neural network"]).unwrap();
        let text = "Neural networks beat other neural-network models";
        let ex = lex.extract(text);
        assert_eq!(ex.len(), 1);
        let spans = &ex.matches[0].1;
        assert_eq!(spans.len(), 2);
        assert_eq!(&text[spans[0].start..spans[0].end], "Neural networks");
        assert_eq!(&text[spans[1].start..spans[1].end], "neural-network");
    }

    #[test]
    fn unknown_tokens_break_matches() {
        let lex = CompiledLexicon::compile(["deep learning"]).unwrap();
        assert!(lex.extract("deep reinforcement learning").is_empty());
        assert!(lex.extract("").is_empty());
    }
}
