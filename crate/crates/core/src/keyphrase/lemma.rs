//! Rule-based English lemmatizer and tokenizer.
//!
//! The lemmatizer looks up an exception table first, then applies ordered
//! suffix rules. Rules are re-applied until nothing changes. Every rule
//! shortens the word, so this terminates and the result is a fixpoint.

use alloc::string::String;
use alloc::vec::Vec;

/// Irregular forms. Sorted by key; every value is its own lemma.
static EXCEPTIONS: &[(&str, &str)] = &[
    ("analyses", "analysis"),
    ("appendices", "appendix"),
    ("atlas", "atlas"),
    ("automata", "automaton"),
    ("axes", "axis"),
    ("been", "be"),
    ("bias", "bias"),
    ("built", "build"),
    ("caches", "cache"),
    ("canvas", "canvas"),
    ("chaos", "chaos"),
    ("children", "child"),
    ("chosen", "choose"),
    ("crises", "crisis"),
    ("criteria", "criterion"),
    ("data", "data"),
    ("diagnoses", "diagnosis"),
    ("did", "do"),
    ("done", "do"),
    ("drawn", "draw"),
    ("feet", "foot"),
    ("formulae", "formula"),
    ("found", "find"),
    ("geese", "goose"),
    ("given", "give"),
    ("gone", "go"),
    ("grown", "grow"),
    ("halves", "half"),
    ("held", "hold"),
    ("hypotheses", "hypothesis"),
    ("indices", "index"),
    ("kept", "keep"),
    ("knives", "knife"),
    ("known", "know"),
    ("leaves", "leaf"),
    ("led", "lead"),
    ("lens", "lens"),
    ("lives", "life"),
    ("made", "make"),
    ("matrices", "matrix"),
    ("media", "media"),
    ("men", "man"),
    ("mice", "mouse"),
    ("news", "news"),
    ("niches", "niche"),
    ("phenomena", "phenomenon"),
    ("ran", "run"),
    ("schemata", "schema"),
    ("selves", "self"),
    ("sent", "send"),
    ("series", "series"),
    ("shelves", "shelf"),
    ("shown", "show"),
    ("species", "species"),
    ("spent", "spend"),
    ("taken", "take"),
    ("taught", "teach"),
    ("teeth", "tooth"),
    ("theses", "thesis"),
    ("thought", "think"),
    ("understood", "understand"),
    ("used", "use"),
    ("uses", "use"),
    ("using", "use"),
    ("vertices", "vertex"),
    ("was", "be"),
    ("went", "go"),
    ("were", "be"),
    ("wives", "wife"),
    ("women", "woman"),
    ("written", "write"),
];

fn exception(word: &str) -> Option<&'static str> {
    EXCEPTIONS.binary_search_by(|(k, _)| (*k).cmp(word)).ok().map(|i| EXCEPTIONS[i].1)
}

fn is_vowel(b: u8) -> bool {
    matches!(b, b'a' | b'e' | b'i' | b'o' | b'u')
}

/// Consonant test in the Porter sense: `y` after a consonant acts as a vowel.
fn is_consonant(w: &[u8], i: usize) -> bool {
    match w[i] {
        b if is_vowel(b) => false,
        b'y' => i == 0 || !is_consonant(w, i - 1),
        _ => true,
    }
}

fn has_vowel(w: &[u8]) -> bool {
    (0..w.len()).any(|i| !is_consonant(w, i))
}

/// Number of vowel-consonant sequences.
fn measure(w: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..w.len() {
        let c = is_consonant(w, i);
        if c && prev_vowel {
            m += 1;
        }
        prev_vowel = !c;
    }
    m
}

/// consonant-vowel-consonant ending, last consonant not w, x or y
fn ends_cvc(w: &[u8]) -> bool {
    let n = w.len();
    n >= 3
        && is_consonant(w, n - 3)
        && !is_consonant(w, n - 2)
        && is_consonant(w, n - 1)
        && !matches!(w[n - 1], b'w' | b'x' | b'y')
}

/// Cleans up a stem left by stripping `-ing` or `-ed`.
fn repair(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if stem.ends_with("at") || stem.ends_with("bl") || stem.ends_with("iz") {
        let mut s = String::from(stem);
        s.push('e');
        return s;
    }
    if n >= 2 && b[n - 1] == b[n - 2] && is_consonant(b, n - 1) && !matches!(b[n - 1], b'l' | b's' | b'z') {
        return String::from(&stem[..n - 1]);
    }
    if measure(b) == 1 && ends_cvc(b) {
        let mut s = String::from(stem);
        s.push('e');
        return s;
    }
    String::from(stem)
}

fn step(word: &str) -> String {
    if let Some(lemma) = exception(word) {
        return String::from(lemma);
    }
    let b = word.as_bytes();
    if b.len() <= 3 || !b.iter().all(u8::is_ascii_lowercase) {
        return String::from(word);
    }
    let strip = |n: usize| String::from(&word[..word.len() - n]);
    if word.ends_with("ies") && b.len() > 4 {
        let mut s = strip(3);
        s.push('y');
        return s;
    }
    if word.ends_with("sses")
        || word.ends_with("xes")
        || word.ends_with("ches")
        || word.ends_with("shes")
        || word.ends_with("zzes")
    {
        return strip(2);
    }
    if word.ends_with('s') {
        if word.ends_with("ss") || word.ends_with("us") || word.ends_with("is") {
            return String::from(word);
        }
        return strip(1);
    }
    if let Some(stem) = word.strip_suffix("ing") {
        if stem.len() >= 3 && has_vowel(stem.as_bytes()) {
            return repair(stem);
        }
        return String::from(word);
    }
    if word.ends_with("ed") && !word.ends_with("eed") {
        let stem = &word[..word.len() - 2];
        if stem.len() >= 3 && has_vowel(stem.as_bytes()) {
            return repair(stem);
        }
    }
    String::from(word)
}

/// Lemma of a single lowercase token. Unknown shapes pass through unchanged.
pub fn lemmatize(token: &str) -> String {
    let mut current = String::from(token);
    loop {
        let next = step(&current);
        if next == current {
            return current;
        }
        current = next;
    }
}

/// A lowercase token and its byte span in the source text.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub text: String,
    pub start: usize,
    pub end: usize,
}

/// Splits on every non-alphanumeric character and lowercases.
pub fn tokenize(text: &str) -> Vec<Token> {
    let mut out = Vec::new();
    let mut start = None;
    for (i, ch) in text.char_indices() {
        match (ch.is_alphanumeric(), start) {
            (true, None) => start = Some(i),
            (false, Some(s)) => {
                out.push(Token { text: text[s..i].to_lowercase(), start: s, end: i });
                start = None;
            }
            _ => {}
        }
    }
    if let Some(s) = start {
        out.push(Token { text: text[s..].to_lowercase(), start: s, end: text.len() });
    }
    out
}

/// Tokenizes and lemmatizes a phrase, joining lemmas with single spaces.
/// This is the equality key for terms, gold phrases and reference lists.
pub fn lemma_key(phrase: &str) -> String {
    let mut key = String::new();
    for tok in tokenize(phrase) {
        if !key.is_empty() {
            key.push(' ');
        }
        key.push_str(&lemmatize(&tok.text));
    }
    key
}
