//! TF-IDF vectorization.
//!
//! `tf(t, d) = count(t, d) / |d|`, where `|d|` counts the in-vocabulary terms of
//! `d`, and `idf(t) = ln(D / df(t))` with no smoothing.

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::textprep::{DocTermCounts, Vocabulary};

/// Sparse non-negative weights sorted by term id.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub entries: Vec<(usize, f64)>,
}

impl FeatureVector {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> f64 {
        self.entries
            .binary_search_by_key(&id, |(i, _)| *i)
            .map_or(0.0, |p| self.entries[p].1)
    }

    pub fn to_dense(&self, dim: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        for (i, w) in &self.entries {
            v[*i] = *w;
        }
        v
    }

    pub fn dot(&self, dense: &[f64]) -> f64 {
        self.entries.iter().map(|(i, w)| w * dense[*i]).sum()
    }
}

pub fn term_frequency(term: usize, doc: &DocTermCounts) -> f64 {
    let total = doc.total();
    if total == 0 {
        return 0.0;
    }
    doc.count(term) as f64 / total as f64
}

/// `ln(D / df)`; zero for a term outside the vocabulary.
pub fn inverse_document_frequency(term: &str, vocab: &Vocabulary) -> f64 {
    vocab
        .id(term)
        .map_or(0.0, |i| (vocab.n_docs() as f64 / vocab.doc_freq(i) as f64).ln())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVectorizer {
    vocab: Vocabulary,
    idf: Vec<f64>,
    n_docs: usize,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    vocab_hash: String,
    terms: Vec<String>,
    doc_freq: Vec<u32>,
    corpus_freq: Vec<u64>,
    idf: Vec<f64>,
    n_docs: usize,
}

impl TfidfVectorizer {
    /// IDF weights from the vocabulary's document frequencies.
    pub fn fit(vocab: Vocabulary) -> Self {
        let d = vocab.n_docs() as f64;
        let idf = (0..vocab.len()).map(|i| (d / vocab.doc_freq(i) as f64).ln()).collect();
        Self {
            n_docs: vocab.n_docs(),
            vocab,
            idf,
        }
    }

    pub fn vocabulary(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn idf(&self) -> &[f64] {
        &self.idf
    }

    pub fn n_docs(&self) -> usize {
        self.n_docs
    }

    pub fn dim(&self) -> usize {
        self.idf.len()
    }

    pub fn vocab_hash(&self) -> String {
        self.vocab.hash()
    }

    pub fn vectorize(&self, doc: &DocTermCounts) -> FeatureVector {
        let total = doc.total();
        if total == 0 {
            return FeatureVector::default();
        }
        let entries = doc
            .entries
            .iter()
            .filter(|(id, _)| *id < self.idf.len())
            .map(|(id, c)| (*id, *c as f64 / total as f64 * self.idf[*id]))
            .collect();
        FeatureVector { entries }
    }

    pub fn vectorize_terms<S: AsRef<str>>(&self, terms: &[S]) -> FeatureVector {
        self.vectorize(&crate::textprep::count_terms(&self.vocab, terms))
    }

    pub fn vectorize_all(&self, docs: &[DocTermCounts]) -> Vec<FeatureVector> {
        docs.par_iter().map(|d| self.vectorize(d)).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        let terms = self.vocab.terms().to_vec();
        let cp = Checkpoint {
            vocab_hash: self.vocab.hash(),
            doc_freq: (0..terms.len()).map(|i| self.vocab.doc_freq(i)).collect(),
            corpus_freq: (0..terms.len()).map(|i| self.vocab.corpus_freq(i)).collect(),
            terms,
            idf: self.idf.clone(),
            n_docs: self.n_docs,
        };
        Ok(serde_json::to_string(&cp)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cp: Checkpoint = serde_json::from_str(text)?;
        let vocab: Vocabulary = serde_json::from_value(serde_json::json!({
            "terms": cp.terms,
            "doc_freq": cp.doc_freq,
            "corpus_freq": cp.corpus_freq,
            "n_docs": cp.n_docs,
        }))?;
        if vocab.hash() != cp.vocab_hash {
            return Err(Error::VocabularyMismatch {
                expected: cp.vocab_hash,
                found: vocab.hash(),
            });
        }
        if cp.idf.len() != vocab.len() {
            return Err(Error::invalid("idf length differs from vocabulary size"));
        }
        Ok(Self {
            vocab,
            idf: cp.idf,
            n_docs: cp.n_docs,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

/// Mean dense feature vector per group, groups in sorted order.
pub fn group_centroids(features: &[FeatureVector], groups: &[String], dim: usize) -> (Vec<String>, Vec<Vec<f64>>) {
    let mut acc: std::collections::BTreeMap<&str, (Vec<f64>, usize)> = Default::default();
    for (f, g) in features.iter().zip(groups) {
        let (sum, n) = acc.entry(g.as_str()).or_insert_with(|| (vec![0.0; dim], 0));
        for (i, w) in &f.entries {
            sum[*i] += w;
        }
        *n += 1;
    }
    acc.into_iter()
        .map(|(g, (sum, n))| (g.to_string(), sum.into_iter().map(|x| x / n as f64).collect()))
        .unzip()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::{build_vocabulary, count_terms};
    use proptest::prelude::*;

    fn fit(raw: &[&str]) -> (TfidfVectorizer, Vec<DocTermCounts>) {
        let docs: Vec<Vec<String>> = raw.iter().map(|d| d.split_whitespace().map(String::from).collect()).collect();
        let vocab = build_vocabulary(&docs, 1).unwrap();
        let counts = docs.iter().map(|d| count_terms(&vocab, d)).collect();
        (TfidfVectorizer::fit(vocab), counts)
    }

    #[test]
    fn tf_examples() {
        let (v, counts) = fit(&["bus late bus", "rail"]);
        let bus = v.vocabulary().id("bus").unwrap();
        let rail = v.vocabulary().id("rail").unwrap();
        assert_eq!(term_frequency(bus, &counts[0]), 2.0 / 3.0);
        assert_eq!(term_frequency(rail, &counts[0]), 0.0);
        let sum: f64 = counts[0].entries.iter().map(|(t, _)| term_frequency(*t, &counts[0])).sum();
        assert!((sum - 1.0).abs() < 1e-15);
        assert_eq!(term_frequency(bus, &DocTermCounts::default()), 0.0);
    }

    #[test]
    fn idf_examples() {
        let (v, _) = fit(&["a b", "a", "a c", "a"]);
        assert_eq!(inverse_document_frequency("a", v.vocabulary()), 0.0);
        assert!((inverse_document_frequency("b", v.vocabulary()) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(inverse_document_frequency("zzz", v.vocabulary()), 0.0);
        let (v, _) = fit(&["a b", "a", "a b", "a"]);
        assert!((inverse_document_frequency("b", v.vocabulary()) - 2f64.ln()).abs() < 1e-15);
        let mut raw = vec!["common"; 999];
        raw.push("rare common");
        let (v, _) = fit(&raw);
        assert!((inverse_document_frequency("rare", v.vocabulary()) - 1000f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn ubiquitous_term_has_zero_weight_and_empty_doc_is_empty() {
        let (v, counts) = fit(&["bus late", "bus early", "bus"]);
        let f = v.vectorize(&counts[0]);
        assert_eq!(f.get(v.vocabulary().id("bus").unwrap()), 0.0);
        assert!(v.vectorize(&DocTermCounts::default()).is_empty());
    }

    #[test]
    fn checkpoint_round_trip() {
        let (v, counts) = fit(&["bus late", "bus early", "rail late rail"]);
        let back = TfidfVectorizer::from_json(&v.to_json().unwrap()).unwrap();
        assert_eq!(back, v);
        for c in &counts {
            assert_eq!(back.vectorize(c), v.vectorize(c));
        }
    }

    #[test]
    fn centroids_average_members() {
        let f = vec![
            FeatureVector { entries: vec![(0, 1.0)] },
            FeatureVector { entries: vec![(1, 2.0)] },
            FeatureVector { entries: vec![(0, 3.0)] },
        ];
        let (names, c) = group_centroids(&f, &["x".into(), "y".into(), "x".into()], 2);
        assert_eq!(names, ["x", "y"]);
        assert_eq!(c, vec![vec![2.0, 0.0], vec![0.0, 2.0]]);
    }

    proptest! {
        #[test]
        fn weights_positive_iff_present_and_not_ubiquitous(
            raw in proptest::collection::vec(proptest::collection::vec("[a-f]", 1..10), 1..15)
        ) {
            let vocab = build_vocabulary(&raw, 1).unwrap();
            let counts: Vec<_> = raw.iter().map(|d| count_terms(&vocab, d)).collect();
            let v = TfidfVectorizer::fit(vocab);
            for c in &counts {
                let f = v.vectorize(c);
                for t in 0..v.dim() {
                    let w = f.get(t);
                    prop_assert!(w >= 0.0);
                    let present = c.count(t) > 0;
                    let ubiquitous = v.vocabulary().doc_freq(t) as usize == v.n_docs();
                    prop_assert_eq!(w > 0.0, present && !ubiquitous);
                }
            }
        }

        #[test]
        fn weight_decreases_with_doc_freq(d in 3usize..60, df in 1usize..58) {
            prop_assume!(df + 1 < d);
            // doc 0 is always "t u", so TF(t) = 1/2 is fixed while df(t) varies
            let weight = |df: usize| {
                let raw: Vec<Vec<String>> = (0..d)
                    .map(|i| if i < df { vec!["t".to_string(), "u".to_string()] } else { vec![format!("f{i}")] })
                    .collect();
                let vocab = build_vocabulary(&raw, 1).unwrap();
                let c = count_terms(&vocab, &raw[0]);
                let v = TfidfVectorizer::fit(vocab);
                v.vectorize(&c).get(v.vocabulary().id("t").unwrap())
            };
            prop_assert!(weight(df + 1) < weight(df));
        }
    }
}
