//! Text normalization shared by topic modeling and TF-IDF features:
//! tokenize, drop stopwords and agency terms, stem, and form n-grams.

mod porter;
mod vocab;

use std::collections::HashSet;
use std::ops::Deref;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use porter::stem_token;
pub use vocab::{build_vocabulary, count_terms, DocTermCounts, Vocabulary};

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords_en.txt");

/// Ordered lowercase tokens, never empty strings.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TokenStream(Vec<String>);

impl TokenStream {
    pub fn new(tokens: Vec<String>) -> Self {
        Self(tokens.into_iter().filter(|t| !t.is_empty()).collect())
    }

    pub fn into_inner(self) -> Vec<String> {
        self.0
    }
}

impl Deref for TokenStream {
    type Target = [String];

    fn deref(&self) -> &[String] {
        &self.0
    }
}

impl<S: Into<String>> FromIterator<S> for TokenStream {
    fn from_iter<I: IntoIterator<Item = S>>(iter: I) -> Self {
        Self::new(iter.into_iter().map(Into::into).collect())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TokenizerConfig {
    /// Drop `http://`, `https://` and `www.` links.
    pub strip_urls: bool,
    /// Drop `@handle` mentions.
    pub strip_handles: bool,
}

impl Default for TokenizerConfig {
    fn default() -> Self {
        Self {
            strip_urls: true,
            strip_handles: true,
        }
    }
}

fn is_apostrophe(c: char) -> bool {
    matches!(c, '\'' | '\u{2019}' | '\u{2018}')
}

/// Tokenize with the default configuration.
pub fn tokenize(text: &str) -> TokenStream {
    tokenize_with(text, TokenizerConfig::default())
}

/// Lowercase runs of alphanumeric characters. Apostrophes inside a word are
/// dropped ("don't" → "dont"); every other character separates tokens.
pub fn tokenize_with(text: &str, cfg: TokenizerConfig) -> TokenStream {
    let chars: Vec<char> = text.chars().collect();
    let mut tokens = Vec::new();
    let mut cur = String::new();
    let mut i = 0;
    let at_boundary = |i: usize| i == 0 || !chars[i - 1].is_alphanumeric();
    while i < chars.len() {
        let c = chars[i];
        if cur.is_empty() && at_boundary(i) {
            if cfg.strip_urls && starts_url(&chars[i..]) {
                while i < chars.len() && !chars[i].is_whitespace() {
                    i += 1;
                }
                continue;
            }
            if cfg.strip_handles && c == '@' {
                i += 1;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                continue;
            }
        }
        if c.is_alphanumeric() {
            cur.extend(c.to_lowercase());
        } else if is_apostrophe(c)
            && !cur.is_empty()
            && chars.get(i + 1).is_some_and(|n| n.is_alphanumeric())
        {
            // intra-word apostrophe: collapse
        } else if !cur.is_empty() {
            tokens.push(std::mem::take(&mut cur));
        }
        i += 1;
    }
    if !cur.is_empty() {
        tokens.push(cur);
    }
    TokenStream(tokens)
}

fn starts_url(chars: &[char]) -> bool {
    let head: String = chars.iter().take(8).flat_map(|c| c.to_lowercase()).collect();
    head.starts_with("http://") || head.starts_with("https://") || head.starts_with("www.")
}

/// A stopword or agency-term list. Entries are normalized with the default
/// tokenizer; multi-word entries are matched as token sequences.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TermList {
    single: HashSet<String>,
    phrases: Vec<Vec<String>>,
}

impl TermList {
    pub fn empty() -> Self {
        Self::default()
    }

    /// The bundled English stopword list.
    pub fn english_stopwords() -> Self {
        Self::parse(BUNDLED_STOPWORDS)
    }

    /// One term per line; `#` starts a comment.
    pub fn parse(text: &str) -> Self {
        let mut list = Self::default();
        for line in text.lines() {
            let line = line.split('#').next().unwrap_or("").trim();
            list.insert(line);
        }
        list
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(Self::parse(&text))
    }

    pub fn insert(&mut self, term: &str) {
        let toks = tokenize_with(term, TokenizerConfig { strip_urls: false, strip_handles: false }).into_inner();
        match toks.len() {
            0 => {}
            1 => {
                self.single.insert(toks.into_iter().next().unwrap());
            }
            _ => {
                if !self.phrases.contains(&toks) {
                    self.phrases.push(toks);
                    self.phrases.sort_by_key(|p| std::cmp::Reverse(p.len()));
                }
            }
        }
    }

    pub fn contains(&self, token: &str) -> bool {
        self.single.contains(token)
    }

    pub fn is_empty(&self) -> bool {
        self.single.is_empty() && self.phrases.is_empty()
    }

    /// Length of the longest phrase starting at `tokens[0]`, if any.
    fn phrase_at(&self, tokens: &[String]) -> Option<usize> {
        self.phrases
            .iter()
            .find(|p| tokens.len() >= p.len() && tokens[..p.len()] == p[..])
            .map(Vec::len)
    }
}

/// Remove stopwords and agency terms, preserving order.
pub fn filter_terms(stream: &TokenStream, stopwords: &TermList, agency_terms: &TermList) -> TokenStream {
    let toks = &stream.0;
    let mut out = Vec::with_capacity(toks.len());
    let mut i = 0;
    while i < toks.len() {
        if let Some(n) = agency_terms.phrase_at(&toks[i..]).or_else(|| stopwords.phrase_at(&toks[i..])) {
            i += n;
            continue;
        }
        if !stopwords.contains(&toks[i]) && !agency_terms.contains(&toks[i]) {
            out.push(toks[i].clone());
        }
        i += 1;
    }
    TokenStream(out)
}

/// Stem every token. Idempotent.
pub fn stem(stream: &TokenStream) -> TokenStream {
    TokenStream(stream.iter().map(|t| stem_token(t)).collect())
}

/// Contiguous n-grams of the requested orders (1 and/or 2), unigrams first,
/// bigram tokens joined by one space.
pub fn extract_ngrams(stream: &TokenStream, orders: &[usize]) -> Vec<String> {
    let mut out = Vec::new();
    if orders.contains(&1) {
        out.extend(stream.iter().cloned());
    }
    if orders.contains(&2) {
        out.extend(stream.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrepConfig {
    pub tokenizer: TokenizerConfig,
    pub stem: bool,
    pub ngram_orders: Vec<usize>,
}

impl Default for PrepConfig {
    fn default() -> Self {
        Self {
            tokenizer: TokenizerConfig::default(),
            stem: true,
            ngram_orders: vec![1, 2],
        }
    }
}

impl PrepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.ngram_orders.is_empty() || self.ngram_orders.iter().any(|o| !(1..=2).contains(o)) {
            return Err(Error::invalid("ngram_orders must be a nonempty subset of {1, 2}"));
        }
        Ok(())
    }
}

/// The full text → terms pipeline.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub config: PrepConfig,
    pub stopwords: TermList,
    pub agency_terms: TermList,
}

impl Default for Preprocessor {
    fn default() -> Self {
        Self {
            config: PrepConfig::default(),
            stopwords: TermList::english_stopwords(),
            agency_terms: TermList::empty(),
        }
    }
}

impl Preprocessor {
    pub fn new(config: PrepConfig, stopwords: TermList, agency_terms: TermList) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            stopwords,
            agency_terms,
        })
    }

    /// Tokens after filtering and (optionally) stemming.
    pub fn tokens(&self, text: &str) -> TokenStream {
        let filtered = filter_terms(
            &tokenize_with(text, self.config.tokenizer),
            &self.stopwords,
            &self.agency_terms,
        );
        if self.config.stem {
            stem(&filtered)
        } else {
            filtered
        }
    }

    pub fn terms(&self, text: &str) -> Vec<String> {
        extract_ngrams(&self.tokens(text), &self.config.ngram_orders)
    }
}
