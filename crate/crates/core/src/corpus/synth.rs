//! Synthetic corpora drawn from the LDA generative process.
//!
//! With [`TopicVocabulary::Disjoint`] every topic owns its own words, so the
//! planted topic-word distributions are an exact oracle for topic recovery.

use chrono::{Duration, NaiveDate, TimeZone, Utc};
use rand::Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::{Channel, FeedbackRecord};
use crate::error::{Error, Result};
use crate::rng::{seeded, SeededRng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TopicVocabulary {
    /// Topic `k` owns words `k{k}w{j}`, `j < vocab_per_topic`, exclusively.
    Disjoint,
    /// Every topic spans all `k_true * vocab_per_topic` words.
    Shared,
    /// Caller-supplied word (or phrase) list per topic; `vocab_per_topic` is ignored.
    Custom(Vec<Vec<String>>),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n_docs: usize,
    pub k_true: usize,
    pub vocab_per_topic: usize,
    pub doc_len: usize,
    /// Symmetric Dirichlet prior of the per-document topic mixture.
    pub alpha: f64,
    /// Symmetric Dirichlet prior of each topic's word distribution.
    pub word_concentration: f64,
    pub vocabulary: TopicVocabulary,
    pub seed: u64,
    pub start: NaiveDate,
    /// Documents are spread round-robin over this many days.
    pub days: u32,
    pub channel: Channel,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_docs: 1000,
            k_true: 5,
            vocab_per_topic: 20,
            doc_len: 50,
            alpha: 0.1,
            word_concentration: 1.0,
            vocabulary: TopicVocabulary::Disjoint,
            seed: 0,
            start: NaiveDate::from_ymd_opt(2022, 1, 1).unwrap(),
            days: 90,
            channel: Channel::Crm,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SyntheticCorpus {
    pub records: Vec<FeedbackRecord>,
    /// All words in the order used by `topic_word` columns.
    pub words: Vec<String>,
    /// `k_true × words.len()`; each row sums to 1.
    pub topic_word: Vec<Vec<f64>>,
    pub doc_topic: Vec<Vec<f64>>,
    /// Per document, the planted topic of every emitted word.
    pub token_topics: Vec<Vec<usize>>,
    /// Per document, the topic that generated most of its words (lowest index on ties).
    pub doc_labels: Vec<usize>,
}

/// Draw from a symmetric Dirichlet of dimension `n` via normalized gammas.
pub(crate) fn sample_dirichlet(rng: &mut SeededRng, concentration: f64, n: usize) -> Vec<f64> {
    let gamma = Gamma::new(concentration, 1.0).expect("concentration validated by caller");
    let mut v: Vec<f64> = (0..n).map(|_| gamma.sample(rng)).collect();
    let total: f64 = v.iter().sum();
    if total > 0.0 && total.is_finite() {
        v.iter_mut().for_each(|x| *x /= total);
    } else {
        // every gamma draw underflowed: all mass on one coordinate
        let hot = rng.random_range(0..n);
        v.iter_mut().enumerate().for_each(|(i, x)| *x = if i == hot { 1.0 } else { 0.0 });
    }
    v
}

pub(crate) fn sample_categorical(rng: &mut SeededRng, probs: &[f64]) -> usize {
    let total: f64 = probs.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, p) in probs.iter().enumerate() {
        if u < *p {
            return i;
        }
        u -= p;
    }
    // rounding left u at the top edge: last index with mass
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(probs.len() - 1)
}

pub(crate) fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Sample a corpus. Identical configs give identical output.
pub fn generate_synthetic_corpus(cfg: &SyntheticConfig) -> Result<SyntheticCorpus> {
    if cfg.doc_len < 1 {
        return Err(Error::invalid("doc_len must be at least 1"));
    }
    if cfg.k_true < 1 {
        return Err(Error::invalid("k_true must be at least 1"));
    }
    if !(cfg.alpha > 0.0 && cfg.word_concentration > 0.0) {
        return Err(Error::invalid("Dirichlet concentrations must be positive"));
    }
    let k = cfg.k_true;
    let (words, support): (Vec<String>, Vec<Vec<usize>>) = match &cfg.vocabulary {
        TopicVocabulary::Disjoint | TopicVocabulary::Shared => {
            if cfg.vocab_per_topic < 1 {
                return Err(Error::invalid("vocab_per_topic must be at least 1"));
            }
            let words: Vec<String> = (0..k)
                .flat_map(|t| (0..cfg.vocab_per_topic).map(move |j| format!("k{t}w{j}")))
                .collect();
            let support = (0..k)
                .map(|t| match cfg.vocabulary {
                    TopicVocabulary::Disjoint => (t * cfg.vocab_per_topic..(t + 1) * cfg.vocab_per_topic).collect(),
                    _ => (0..words.len()).collect(),
                })
                .collect();
            (words, support)
        }
        TopicVocabulary::Custom(lists) => {
            if lists.len() != k || lists.iter().any(|l| l.is_empty()) {
                return Err(Error::invalid("custom vocabulary needs one nonempty list per topic"));
            }
            let mut words: Vec<String> = Vec::new();
            let support = lists
                .iter()
                .map(|list| {
                    list.iter()
                        .map(|w| match words.iter().position(|x| x == w) {
                            Some(i) => i,
                            None => {
                                words.push(w.clone());
                                words.len() - 1
                            }
                        })
                        .collect::<Vec<_>>()
                })
                .collect();
            (words, support)
        }
    };

    let mut rng = seeded(cfg.seed);
    let topic_word: Vec<Vec<f64>> = support
        .iter()
        .map(|ids| {
            let probs = sample_dirichlet(&mut rng, cfg.word_concentration, ids.len());
            let mut row = vec![0.0; words.len()];
            for (id, p) in ids.iter().zip(probs) {
                row[*id] += p;
            }
            row
        })
        .collect();

    let mut records = Vec::with_capacity(cfg.n_docs);
    let mut doc_topic = Vec::with_capacity(cfg.n_docs);
    let mut token_topics = Vec::with_capacity(cfg.n_docs);
    let mut doc_labels = Vec::with_capacity(cfg.n_docs);
    let base = Utc.from_utc_datetime(&cfg.start.and_hms_opt(0, 0, 0).unwrap());
    let days = cfg.days.max(1) as usize;
    for d in 0..cfg.n_docs {
        let theta = if k == 1 { vec![1.0] } else { sample_dirichlet(&mut rng, cfg.alpha, k) };
        let mut counts = vec![0.0; k];
        let mut zs = Vec::with_capacity(cfg.doc_len);
        let mut text = Vec::with_capacity(cfg.doc_len);
        for _ in 0..cfg.doc_len {
            let z = sample_categorical(&mut rng, &theta);
            let w = sample_categorical(&mut rng, &topic_word[z]);
            counts[z] += 1.0;
            zs.push(z);
            text.push(words[w].as_str());
        }
        doc_labels.push(argmax_lowest(&counts));
        let timestamp = base + Duration::days((d % days) as i64) + Duration::minutes(((d * 37) % 1440) as i64);
        records.push(FeedbackRecord {
            id: format!("syn-{d:06}"),
            text: text.join(" "),
            channel: cfg.channel,
            timestamp,
            problem_category: None,
            mode_hint: None,
            author: None,
        });
        doc_topic.push(theta);
        token_topics.push(zs);
    }
    Ok(SyntheticCorpus {
        records,
        words,
        topic_word,
        doc_topic,
        token_topics,
        doc_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::csv_io::write_feedback;

    fn small(k: usize) -> SyntheticConfig {
        SyntheticConfig {
            n_docs: 200,
            k_true: k,
            vocab_per_topic: 10,
            doc_len: 20,
            seed: 42,
            ..SyntheticConfig::default()
        }
    }

    #[test]
    fn single_topic_corpus() {
        let c = generate_synthetic_corpus(&small(1)).unwrap();
        assert!(c.token_topics.iter().flatten().all(|z| *z == 0));
        assert!(c.doc_labels.iter().all(|l| *l == 0));
        assert!(c.doc_topic.iter().all(|t| t == &vec![1.0]));
        let sum: f64 = c.topic_word[0].iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn disjoint_topics_share_no_words() {
        let c = generate_synthetic_corpus(&small(2)).unwrap();
        for w in 0..c.words.len() {
            assert!(c.topic_word[0][w] == 0.0 || c.topic_word[1][w] == 0.0);
        }
        // empirical word-topic co-occurrence is block diagonal
        let index: std::collections::HashMap<&str, usize> =
            c.words.iter().enumerate().map(|(i, w)| (w.as_str(), i)).collect();
        for (rec, zs) in c.records.iter().zip(&c.token_topics) {
            for (word, z) in rec.text.split(' ').zip(zs) {
                assert_eq!(index[word] / 10, *z);
            }
        }
    }

    #[test]
    fn fixed_seed_is_byte_identical() {
        let a = generate_synthetic_corpus(&small(3)).unwrap();
        let b = generate_synthetic_corpus(&small(3)).unwrap();
        let (mut x, mut y) = (Vec::new(), Vec::new());
        write_feedback(&mut x, &a.records).unwrap();
        write_feedback(&mut y, &b.records).unwrap();
        assert_eq!(x, y);
        assert_eq!(a.doc_labels, b.doc_labels);
        let c = generate_synthetic_corpus(&SyntheticConfig { seed: 43, ..small(3) }).unwrap();
        assert_ne!(a.records[0].text, c.records[0].text);
    }

    #[test]
    fn zero_doc_len_is_fatal() {
        assert!(generate_synthetic_corpus(&SyntheticConfig { doc_len: 0, ..small(2) }).is_err());
    }

    #[test]
    fn custom_vocabulary_phrases() {
        let cfg = SyntheticConfig {
            vocabulary: TopicVocabulary::Custom(vec![
                vec!["minutes late".into(), "never came".into()],
                vec!["smartrip card".into(), "day pass".into()],
            ]),
            ..small(2)
        };
        let c = generate_synthetic_corpus(&cfg).unwrap();
        assert_eq!(c.words.len(), 4);
        assert!(c.records[0].text.contains(' '));
    }

    #[test]
    fn categorical_edges() {
        let mut rng = seeded(1);
        for _ in 0..100 {
            assert_eq!(sample_categorical(&mut rng, &[0.0, 1.0, 0.0]), 1);
        }
        assert_eq!(argmax_lowest(&[0.2, 0.4, 0.4]), 1);
    }
}
