//! Text cleaning pipeline: normalization, tokenization, stop-word removal
//! and a rule-based lemmatizer.
//!
//! Everything here is a pure function of its input and a
//! [`PipelineConfig`], so documents can be processed in any order or in
//! parallel with identical results.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use regex::Regex;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::corpus::{Document, Label};

/// Bundled stop-word list (the 179-word English list).
pub const DEFAULT_STOPWORDS: &str = include_str!("../data/stopwords_en.txt");
/// Bundled irregular-form table.
pub const DEFAULT_LEMMA_EXCEPTIONS: &str = include_str!("../data/lemma_exceptions.tsv");
pub const DEFAULT_PLACEHOLDER: &str = "somenuber";
pub const DEFAULT_MIN_TOKEN_LEN: usize = 3;

// Upper bound on repeated lemmatization; rule steps always shorten a
// token, so only a cyclic exceptions table can reach it.
const MAX_LEMMA_PASSES: usize = 8;

#[derive(Debug, Error)]
pub enum TextprepError {
    #[error("numeric placeholder {0:?} must be lowercase ASCII letters, at least min_token_len long, and not a stop word")]
    InvalidPlaceholder(String),
    #[error("min_token_len must be at least 1")]
    ZeroMinLen,
    #[error("lemma table line {line}: expected `surface<TAB>lemma`")]
    BadLemmaLine { line: usize },
    #[error("lemma table line {line}: {word:?} is not a lowercase ASCII word")]
    BadLemmaWord { line: usize, word: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// Tables and knobs for the cleaning pipeline. Immutable once built.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PipelineConfig {
    stopwords: BTreeSet<String>,
    lemma_exceptions: BTreeMap<String, String>,
    numeric_placeholder: String,
    min_token_len: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig::new(
            parse_stopword_list(DEFAULT_STOPWORDS),
            parse_lemma_table(DEFAULT_LEMMA_EXCEPTIONS).expect("bundled lemma table is valid"),
            DEFAULT_PLACEHOLDER.to_string(),
            DEFAULT_MIN_TOKEN_LEN,
        )
        .expect("bundled pipeline configuration is valid")
    }
}

impl PipelineConfig {
    pub fn new(
        stopwords: BTreeSet<String>,
        lemma_exceptions: BTreeMap<String, String>,
        numeric_placeholder: String,
        min_token_len: usize,
    ) -> Result<Self, TextprepError> {
        if min_token_len == 0 {
            return Err(TextprepError::ZeroMinLen);
        }
        let ok = is_lower_alpha(&numeric_placeholder)
            && numeric_placeholder.len() >= min_token_len
            && !stopwords.contains(&numeric_placeholder);
        if !ok {
            return Err(TextprepError::InvalidPlaceholder(numeric_placeholder));
        }
        Ok(PipelineConfig {
            stopwords,
            lemma_exceptions,
            numeric_placeholder,
            min_token_len,
        })
    }

    /// Replaces the stop-word list, keeping the other settings.
    pub fn with_stopwords(self, stopwords: BTreeSet<String>) -> Result<Self, TextprepError> {
        PipelineConfig::new(
            stopwords,
            self.lemma_exceptions,
            self.numeric_placeholder,
            self.min_token_len,
        )
    }

    pub fn with_lemma_exceptions(
        self,
        table: BTreeMap<String, String>,
    ) -> Result<Self, TextprepError> {
        PipelineConfig::new(
            self.stopwords,
            table,
            self.numeric_placeholder,
            self.min_token_len,
        )
    }

    pub fn stopwords(&self) -> &BTreeSet<String> {
        &self.stopwords
    }

    pub fn lemma_exceptions(&self) -> &BTreeMap<String, String> {
        &self.lemma_exceptions
    }

    pub fn numeric_placeholder(&self) -> &str {
        &self.numeric_placeholder
    }

    pub fn min_token_len(&self) -> usize {
        self.min_token_len
    }

    fn keeps(&self, token: &str) -> bool {
        token.len() >= self.min_token_len && !self.stopwords.contains(token)
    }

    /// SHA-256 over a canonical encoding of every table and setting.
    pub fn digest(&self) -> [u8; 32] {
        let mut h = Sha256::new();
        let mut put = |s: &str| {
            h.update((s.len() as u64).to_le_bytes());
            h.update(s.as_bytes());
        };
        put("stopwords");
        for w in &self.stopwords {
            put(w);
        }
        put("lemmas");
        for (k, v) in &self.lemma_exceptions {
            put(k);
            put(v);
        }
        put("placeholder");
        put(&self.numeric_placeholder);
        h.update((self.min_token_len as u64).to_le_bytes());
        h.finalize().into()
    }
}

/// One token per line; `#` starts a comment line; entries are lowercased.
pub fn parse_stopword_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_lowercase)
        .collect()
}

/// `surface<TAB>lemma` per line; `#` starts a comment line.
pub fn parse_lemma_table(text: &str) -> Result<BTreeMap<String, String>, TextprepError> {
    let mut table = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.trim_end_matches('\r');
        if line.trim().is_empty() || line.trim_start().starts_with('#') {
            continue;
        }
        let (surface, lemma) = line
            .split_once('\t')
            .ok_or(TextprepError::BadLemmaLine { line: i + 1 })?;
        for word in [surface, lemma] {
            if !is_lower_alpha(word.trim()) {
                return Err(TextprepError::BadLemmaWord {
                    line: i + 1,
                    word: word.to_string(),
                });
            }
        }
        table.insert(surface.trim().to_string(), lemma.trim().to_string());
    }
    Ok(table)
}

pub fn load_stopword_file(path: &Path) -> Result<BTreeSet<String>, TextprepError> {
    Ok(parse_stopword_list(&read(path)?))
}

pub fn load_lemma_file(path: &Path) -> Result<BTreeMap<String, String>, TextprepError> {
    parse_lemma_table(&read(path)?)
}

fn read(path: &Path) -> Result<String, TextprepError> {
    fs::read_to_string(path).map_err(|source| TextprepError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn is_lower_alpha(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_lowercase())
}

/// A cleaned document: the token stream fed to feature extraction.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanDoc {
    pub id: String,
    pub tokens: Vec<String>,
    pub label: Option<Label>,
}

impl CleanDoc {
    pub fn new(id: impl Into<String>, tokens: Vec<String>, label: Option<Label>) -> Self {
        CleanDoc {
            id: id.into(),
            tokens,
            label,
        }
    }

    /// True when every token is lowercase alphabetic, long enough and not a stop word.
    pub fn is_clean(&self, cfg: &PipelineConfig) -> bool {
        self.tokens
            .iter()
            .all(|t| is_lower_alpha(t) && cfg.keeps(t))
    }
}

struct Patterns {
    url: Regex,
    email: Regex,
    tag: Regex,
    number: Regex,
}

fn patterns() -> &'static Patterns {
    static PATTERNS: OnceLock<Patterns> = OnceLock::new();
    PATTERNS.get_or_init(|| Patterns {
        url: Regex::new(r"(?i)[a-z][a-z0-9+.\-]*://\S*|\bwww\.\S*").unwrap(),
        email: Regex::new(r"\S+@\S*\.\S*").unwrap(),
        tag: Regex::new(r"<[^<>]*>").unwrap(),
        number: Regex::new(r"[0-9]+(?:[.,][0-9]+)*").unwrap(),
    })
}

/// Character-level cleaning. Steps, in order: drop URLs, e-mail
/// addresses, markup tags and non-ASCII characters; lowercase; replace
/// each number with the placeholder word; turn every remaining
/// non-alphanumeric character into a space.
pub fn normalize_text(raw: &str, cfg: &PipelineConfig) -> String {
    let p = patterns();
    let s = p.url.replace_all(raw, "");
    let s = p.email.replace_all(&s, "");
    let s = p.tag.replace_all(&s, "");
    let mut s: String = s.chars().filter(char::is_ascii).collect();
    s.make_ascii_lowercase();
    let s = replace_numbers(&s, &p.number, &cfg.numeric_placeholder);
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() { c } else { ' ' })
        .collect()
}

// Each number becomes the placeholder, with a space added on either side
// only when the neighbouring character is not already whitespace.
fn replace_numbers(s: &str, number: &Regex, placeholder: &str) -> String {
    let mut out = String::with_capacity(s.len());
    let mut last = 0;
    for m in number.find_iter(s) {
        out.push_str(&s[last..m.start()]);
        if out.chars().next_back().is_some_and(|c| !c.is_whitespace()) {
            out.push(' ');
        }
        out.push_str(placeholder);
        if s[m.end()..]
            .chars()
            .next()
            .is_some_and(|c| !c.is_whitespace())
        {
            out.push(' ');
        }
        last = m.end();
    }
    out.push_str(&s[last..]);
    out
}

/// Whitespace split followed by the length and stop-word filters.
pub fn tokenize_and_filter(normalized: &str, cfg: &PipelineConfig) -> Vec<String> {
    normalized
        .split_whitespace()
        .filter(|t| cfg.keeps(t))
        .map(str::to_string)
        .collect()
}

fn is_vowel(b: u8) -> bool {
    matches!(b, b'a' | b'e' | b'i' | b'o' | b'u')
}

// Number of vowel-consonant runs, as in Porter's measure.
fn measure(b: &[u8]) -> usize {
    b.windows(2)
        .filter(|w| is_vowel(w[0]) && !is_vowel(w[1]))
        .count()
}

// Repairs a stem left after removing -ing/-ed.
fn repair_verb_stem(stem: &str) -> String {
    let b = stem.as_bytes();
    let n = b.len();
    if n >= 2
        && b[n - 1] == b[n - 2]
        && !is_vowel(b[n - 1])
        && !matches!(b[n - 1], b'l' | b's' | b'z')
    {
        return stem[..n - 1].to_string();
    }
    // "treated", "floated" keep the bare stem
    let plain_at = stem.ends_with("eat") || stem.ends_with("oat");
    let suffix_e = (stem.ends_with("at") && !plain_at)
        || ["bl", "iz", "rg", "dg", "v", "c", "u"]
            .iter()
            .any(|s| stem.ends_with(s))
        || (n >= 3 && is_vowel(b[n - 3]) && is_vowel(b[n - 2]) && b[n - 1] == b's');
    let cvc = n >= 3
        && !is_vowel(b[n - 3])
        && is_vowel(b[n - 2])
        && !is_vowel(b[n - 1])
        && !matches!(b[n - 1], b'w' | b'x' | b'y');
    if suffix_e || (cvc && measure(b) == 1) {
        return format!("{stem}e");
    }
    stem.to_string()
}

/// Single-pass lemmatization: the exceptions table first, then the
/// first matching suffix rule.
///
/// Rules: `-ies`→`-y`; `-sses`→`-ss`; `-es` is stripped after a sibilant
/// (`x`, `z`, `ch`, `sh`); `-s` is stripped except after `s`, `u` or `i`;
/// `-ing` and `-ed` are stripped with a doubled-consonant or silent-`e`
/// repair. Every stripping rule needs a stem of at least three letters.
pub fn lemmatize_token(token: &str, cfg: &PipelineConfig) -> String {
    if token == cfg.numeric_placeholder {
        return token.to_string();
    }
    if let Some(lemma) = cfg.lemma_exceptions.get(token) {
        return lemma.clone();
    }
    if let Some(stem) = token.strip_suffix("ies") {
        if !stem.is_empty() {
            return format!("{stem}y");
        }
    }
    if let Some(stem) = token.strip_suffix("sses") {
        return format!("{stem}ss");
    }
    if let Some(stem) = token.strip_suffix("es") {
        let sibilant = ["x", "z", "ch", "sh"].iter().any(|s| stem.ends_with(s));
        if sibilant && stem.len() >= 3 {
            return stem.to_string();
        }
    }
    if let Some(stem) = token.strip_suffix('s') {
        let guarded = ["s", "u", "i"].iter().any(|s| stem.ends_with(s));
        if !guarded && stem.len() >= 3 {
            return stem.to_string();
        }
    }
    for suffix in ["ing", "ed"] {
        if let Some(stem) = token.strip_suffix(suffix) {
            if stem.len() >= 3 {
                return repair_verb_stem(stem);
            }
        }
    }
    token.to_string()
}

// Lemmatizes until stable, so that cleaning already-clean tokens is a no-op.
fn lemmatize_fixpoint(token: &str, cfg: &PipelineConfig) -> String {
    let mut cur = token.to_string();
    for _ in 0..MAX_LEMMA_PASSES {
        let next = lemmatize_token(&cur, cfg);
        if next == cur {
            break;
        }
        cur = next;
    }
    cur
}

/// Full pipeline over `title + " " + body`.
pub fn preprocess_document(doc: &Document, cfg: &PipelineConfig) -> CleanDoc {
    let text = format!("{} {}", doc.title, doc.body);
    let tokens = tokenize_and_filter(&normalize_text(&text, cfg), cfg)
        .iter()
        .map(|t| lemmatize_fixpoint(t, cfg))
        .filter(|t| cfg.keeps(t))
        .collect();
    CleanDoc {
        id: doc.id.clone(),
        tokens,
        label: doc.label,
    }
}

/// [`preprocess_document`] over a corpus on the current rayon pool; output order matches input.
pub fn preprocess_corpus(docs: &[Document], cfg: &PipelineConfig) -> Vec<CleanDoc> {
    docs.par_iter()
        .map(|d| preprocess_document(d, cfg))
        .collect()
}
