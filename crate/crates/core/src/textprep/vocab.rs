use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    corpus_freq: Vec<u64>,
    n_docs: usize,
}

/// Terms (unigrams and bigrams) kept for modeling, in lexicographic order.
///
/// `index` maps each term to its position, a bijection onto `0..len()`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    doc_freq: Vec<u32>,
    corpus_freq: Vec<u64>,
    n_docs: usize,
    hash: String,
}

fn hash_terms(terms: &[String]) -> String {
    let mut h = Sha256::new();
    for t in terms {
        h.update(t.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())
}

impl TryFrom<VocabularyRepr> for Vocabulary {
    type Error = Error;

    fn try_from(r: VocabularyRepr) -> Result<Self> {
        if r.doc_freq.len() != r.terms.len() || r.corpus_freq.len() != r.terms.len() {
            return Err(Error::invalid("vocabulary arrays have different lengths"));
        }
        let index: HashMap<String, usize> = r.terms.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
        if index.len() != r.terms.len() {
            return Err(Error::invalid("vocabulary contains duplicate terms"));
        }
        Ok(Self {
            hash: hash_terms(&r.terms),
            terms: r.terms,
            index,
            doc_freq: r.doc_freq,
            corpus_freq: r.corpus_freq,
            n_docs: r.n_docs,
        })
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        Self {
            terms: v.terms,
            doc_freq: v.doc_freq,
            corpus_freq: v.corpus_freq,
            n_docs: v.n_docs,
        }
    }
}

impl Vocabulary {
    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn term(&self, id: usize) -> &str {
        &self.terms[id]
    }

    pub fn id(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    /// Number of documents containing term `id`.
    pub fn doc_freq(&self, id: usize) -> u32 {
        self.doc_freq[id]
    }

    pub fn corpus_freq(&self, id: usize) -> u64 {
        self.corpus_freq[id]
    }

    /// Size of the corpus the vocabulary was built from.
    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    /// SHA-256 over the ordered term list; identifies the feature space.
    pub fn hash(&self) -> String {
        self.hash.clone()
    }
}

/// Keep every term whose total count over `docs` is at least `min_count`.
pub fn build_vocabulary<S: AsRef<str>>(docs: &[Vec<S>], min_count: usize) -> Result<Vocabulary> {
    if docs.is_empty() {
        return Err(Error::invalid("cannot build a vocabulary from an empty corpus"));
    }
    // BTreeMap gives the lexicographic order directly
    let mut stats: BTreeMap<&str, (u64, u32)> = BTreeMap::new();
    for doc in docs {
        let mut seen = std::collections::HashSet::new();
        for t in doc {
            let t = t.as_ref();
            let e = stats.entry(t).or_default();
            e.0 += 1;
            if seen.insert(t) {
                e.1 += 1;
            }
        }
    }
    let terms_seen = stats.len();
    let kept: Vec<_> = stats.into_iter().filter(|(_, (cf, _))| *cf >= min_count as u64).collect();
    if kept.is_empty() {
        return Err(Error::EmptyVocabulary { terms_seen, min_count });
    }
    let terms: Vec<String> = kept.iter().map(|(t, _)| t.to_string()).collect();
    let index = terms.iter().cloned().enumerate().map(|(i, t)| (t, i)).collect();
    Ok(Vocabulary {
        hash: hash_terms(&terms),
        terms,
        index,
        doc_freq: kept.iter().map(|(_, (_, df))| *df).collect(),
        corpus_freq: kept.iter().map(|(_, (cf, _))| *cf).collect(),
        n_docs: docs.len(),
    })
}

/// Sparse per-document term counts over a vocabulary, sorted by term id.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DocTermCounts {
    pub entries: Vec<(usize, u32)>,
}

impl DocTermCounts {
    pub fn total(&self) -> u64 {
        self.entries.iter().map(|(_, c)| *c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn count(&self, id: usize) -> u32 {
        self.entries
            .binary_search_by_key(&id, |(i, _)| *i)
            .map_or(0, |p| self.entries[p].1)
    }

    /// Every token id repeated by its count, in id order.
    pub fn expand(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries
            .iter()
            .flat_map(|(id, c)| std::iter::repeat_n(*id, *c as usize))
    }
}

/// Count in-vocabulary terms of one document; out-of-vocabulary terms are dropped.
pub fn count_terms<S: AsRef<str>>(vocab: &Vocabulary, terms: &[S]) -> DocTermCounts {
    let mut counts: BTreeMap<usize, u32> = BTreeMap::new();
    for t in terms {
        if let Some(id) = vocab.id(t.as_ref()) {
            *counts.entry(id).or_default() += 1;
        }
    }
    DocTermCounts {
        entries: counts.into_iter().collect(),
    }
}
