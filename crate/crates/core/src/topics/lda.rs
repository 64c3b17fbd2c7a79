//! Collapsed Gibbs sampling for LDA.
//!
//! The sampler keeps three count tables: topic-word `n_kw`, topic totals `n_k`
//! and document-topic `n_dk`. Each token's topic is resampled from
//!
//! ```text
//! p(z = k) ∝ (n_dk[d,k] + α) · (n_kw[k,w] + β) / (n_k[k] + V·β)
//! ```
//!
//! with the token's own assignment removed from the counts.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Error, Result};
use crate::rng::{derive_index_seed, seeded, SeededRng};
use crate::textprep::{DocTermCounts, Vocabulary};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    pub k: usize,
    /// Document-topic prior; `None` means `50 / k`.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub n_iters: usize,
    /// Stop once the relative log-likelihood change over `patience` sweeps is below this.
    pub tolerance: f64,
    pub patience: usize,
    pub seed: u64,
}

impl Default for LdaConfig {
    fn default() -> Self {
        Self {
            k: 23,
            alpha: None,
            beta: 0.01,
            n_iters: 1000,
            tolerance: 1e-4,
            patience: 50,
            seed: 0,
        }
    }
}

impl LdaConfig {
    pub fn alpha(&self) -> f64 {
        self.alpha.unwrap_or(50.0 / self.k as f64)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(Error::invalid("lda.k must be at least 1"));
        }
        if !(self.alpha() > 0.0 && self.beta > 0.0) {
            return Err(Error::invalid("lda priors must be positive"));
        }
        if self.tolerance < 0.0 {
            return Err(Error::invalid("lda.tolerance must be non-negative"));
        }
        Ok(())
    }
}

/// Gibbs sampler state. [`fit_lda`] drives it to convergence; tests may step
/// it one sweep at a time.
pub struct LdaSampler {
    k: usize,
    v: usize,
    alpha: f64,
    beta: f64,
    docs: Vec<Vec<usize>>,
    z: Vec<Vec<usize>>,
    /// Word-major: `n_wk[w * k + t]`.
    n_wk: Vec<u32>,
    n_k: Vec<u32>,
    n_dk: Vec<Vec<u32>>,
    rng: SeededRng,
    probs: Vec<f64>,
    sweeps: usize,
}

impl LdaSampler {
    /// Random initial assignment of every token. `docs` hold word ids below `v`.
    pub fn new(docs: Vec<Vec<usize>>, v: usize, cfg: &LdaConfig) -> Result<Self> {
        cfg.validate()?;
        let n_tokens: usize = docs.iter().map(Vec::len).sum();
        if docs.is_empty() || v == 0 {
            return Err(Error::invalid("LDA needs a nonempty corpus and vocabulary"));
        }
        if cfg.k > n_tokens {
            return Err(Error::invalid(format!("K = {} exceeds the {} tokens in the corpus", cfg.k, n_tokens)));
        }
        if let Some(w) = docs.iter().flatten().find(|w| **w >= v) {
            return Err(Error::invalid(format!("word id {w} outside vocabulary of size {v}")));
        }
        let k = cfg.k;
        let mut rng = seeded(cfg.seed);
        let mut n_wk = vec![0u32; v * k];
        let mut n_k = vec![0u32; k];
        let mut n_dk = vec![vec![0u32; k]; docs.len()];
        let z: Vec<Vec<usize>> = docs
            .iter()
            .enumerate()
            .map(|(d, doc)| {
                doc.iter()
                    .map(|&w| {
                        let t = rng.random_range(0..k);
                        n_wk[w * k + t] += 1;
                        n_k[t] += 1;
                        n_dk[d][t] += 1;
                        t
                    })
                    .collect()
            })
            .collect();
        Ok(Self {
            k,
            v,
            alpha: cfg.alpha(),
            beta: cfg.beta,
            docs,
            z,
            n_wk,
            n_k,
            n_dk,
            rng,
            probs: vec![0.0; k],
            sweeps: 0,
        })
    }

    /// Resample every token once, in document then position order.
    pub fn sweep(&mut self) {
        let (k, alpha, beta) = (self.k, self.alpha, self.beta);
        let vbeta = self.v as f64 * beta;
        for d in 0..self.docs.len() {
            for i in 0..self.docs[d].len() {
                let w = self.docs[d][i];
                let old = self.z[d][i];
                let row = &mut self.n_wk[w * k..(w + 1) * k];
                row[old] -= 1;
                self.n_k[old] -= 1;
                self.n_dk[d][old] -= 1;

                let mut total = 0.0;
                for t in 0..k {
                    let p = (self.n_dk[d][t] as f64 + alpha) * (row[t] as f64 + beta) / (self.n_k[t] as f64 + vbeta);
                    total += p;
                    self.probs[t] = total;
                }
                let u = self.rng.random::<f64>() * total;
                let new = self.probs.iter().position(|c| u < *c).unwrap_or(k - 1);

                row[new] += 1;
                self.n_k[new] += 1;
                self.n_dk[d][new] += 1;
                self.z[d][i] = new;
            }
        }
        self.sweeps += 1;
    }

    pub fn sweeps(&self) -> usize {
        self.sweeps
    }

    pub fn n_kw(&self, topic: usize, word: usize) -> u32 {
        self.n_wk[word * self.k + topic]
    }

    pub fn n_k(&self) -> &[u32] {
        &self.n_k
    }

    pub fn n_dk(&self) -> &[Vec<u32>] {
        &self.n_dk
    }

    pub fn assignments(&self) -> &[Vec<usize>] {
        &self.z
    }

    pub fn doc_len(&self, d: usize) -> usize {
        self.docs[d].len()
    }

    /// Verify every count table against a recount of the assignments.
    pub fn check_counts(&self) -> Result<()> {
        check_tables(self.k, self.v, |t, w| self.n_kw(t, w), &self.n_k, &self.n_dk, &self.z, Some(&self.docs))
    }

    pub fn log_likelihood(&self) -> f64 {
        let n_kw: Vec<Vec<u32>> = (0..self.k).map(|t| (0..self.v).map(|w| self.n_kw(t, w)).collect()).collect();
        log_likelihood(&n_kw, &self.n_k, &self.n_dk, self.alpha, self.beta)
    }

    pub fn into_model(self, vocab_hash: String, seed: u64, trace: Vec<f64>) -> LdaModel {
        let n_kw = (0..self.k).map(|t| (0..self.v).map(|w| self.n_kw(t, w)).collect()).collect();
        LdaModel {
            k: self.k,
            v: self.v,
            alpha: self.alpha,
            beta: self.beta,
            seed,
            vocab_hash,
            sweeps: self.sweeps,
            log_likelihood: trace,
            n_kw,
            n_k: self.n_k,
            n_dk: self.n_dk,
            assignments: self.z,
        }
    }
}

/// Joint log probability `log p(w, z)` with θ and φ integrated out.
pub fn log_likelihood(n_kw: &[Vec<u32>], n_k: &[u32], n_dk: &[Vec<u32>], alpha: f64, beta: f64) -> f64 {
    let k = n_k.len() as f64;
    let v = n_kw.first().map_or(0, Vec::len) as f64;
    let mut ll = k * (ln_gamma(v * beta) - v * ln_gamma(beta));
    for (row, total) in n_kw.iter().zip(n_k) {
        ll += row.iter().map(|c| ln_gamma(*c as f64 + beta)).sum::<f64>();
        ll -= ln_gamma(*total as f64 + v * beta);
    }
    ll += n_dk.len() as f64 * (ln_gamma(k * alpha) - k * ln_gamma(alpha));
    for row in n_dk {
        let len: u32 = row.iter().sum();
        ll += row.iter().map(|c| ln_gamma(*c as f64 + alpha)).sum::<f64>();
        ll -= ln_gamma(len as f64 + k * alpha);
    }
    ll
}

/// Fitted model with its count tables; serializes to a JSON checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub k: usize,
    pub v: usize,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub vocab_hash: String,
    pub sweeps: usize,
    /// Log-likelihood after each sweep.
    pub log_likelihood: Vec<f64>,
    /// `k × v` topic-word counts.
    pub n_kw: Vec<Vec<u32>>,
    pub n_k: Vec<u32>,
    pub n_dk: Vec<Vec<u32>>,
    pub assignments: Vec<Vec<usize>>,
}

fn check_tables(
    k: usize,
    v: usize,
    n_kw: impl Fn(usize, usize) -> u32,
    n_k: &[u32],
    n_dk: &[Vec<u32>],
    z: &[Vec<usize>],
    docs: Option<&[Vec<usize>]>,
) -> Result<()> {
    if n_k.len() != k || n_dk.len() != z.len() {
        return Err(Error::invalid("count tables have inconsistent dimensions"));
    }
    for t in 0..k {
        let sum: u64 = (0..v).map(|w| n_kw(t, w) as u64).sum();
        if sum != n_k[t] as u64 {
            return Err(Error::invalid(format!("topic {t}: sum of n_kw is {sum}, n_k is {}", n_k[t])));
        }
    }
    let mut word_topic = vec![0u32; if docs.is_some() { k * v } else { 0 }];
    for (d, zs) in z.iter().enumerate() {
        let mut recount = vec![0u32; k];
        for (i, t) in zs.iter().enumerate() {
            *recount
                .get_mut(*t)
                .ok_or_else(|| Error::invalid(format!("doc {d}: topic {t} out of range")))? += 1;
            if let Some(docs) = docs {
                word_topic[docs[d][i] * k + t] += 1;
            }
        }
        if recount != n_dk[d] {
            return Err(Error::invalid(format!("doc {d}: n_dk disagrees with assignments")));
        }
        let len = docs.map_or(zs.len(), |docs| docs[d].len());
        if zs.len() != len || recount.iter().sum::<u32>() as usize != len {
            return Err(Error::invalid(format!("doc {d}: n_dk does not sum to its length")));
        }
    }
    if docs.is_some() {
        for t in 0..k {
            for w in 0..v {
                if word_topic[w * k + t] != n_kw(t, w) {
                    return Err(Error::invalid(format!("n_kw[{t}][{w}] disagrees with assignments")));
                }
            }
        }
    }
    Ok(())
}

pub fn docs_from_counts(counts: &[DocTermCounts]) -> Vec<Vec<usize>> {
    counts.iter().map(|c| c.expand().collect()).collect()
}

/// Fit by collapsed Gibbs sampling. Identical inputs and seed give identical models.
pub fn fit_lda(counts: &[DocTermCounts], vocab: &Vocabulary, cfg: &LdaConfig) -> Result<LdaModel> {
    let mut sampler = LdaSampler::new(docs_from_counts(counts), vocab.len(), cfg)?;
    let mut trace = Vec::with_capacity(cfg.n_iters);
    for _ in 0..cfg.n_iters {
        sampler.sweep();
        let ll = sampler.log_likelihood();
        if !ll.is_finite() {
            return Err(Error::invalid(format!("log-likelihood became non-finite at sweep {}", sampler.sweeps())));
        }
        trace.push(ll);
        if converged(&trace, cfg.patience, cfg.tolerance) {
            break;
        }
    }
    Ok(sampler.into_model(vocab.hash(), cfg.seed, trace))
}

fn converged(trace: &[f64], patience: usize, tolerance: f64) -> bool {
    if patience == 0 || trace.len() <= patience {
        return false;
    }
    let now = trace[trace.len() - 1];
    let then = trace[trace.len() - 1 - patience];
    ((now - then) / then.abs().max(f64::MIN_POSITIVE)).abs() < tolerance
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InferConfig {
    pub n_iters: usize,
    /// Sweeps discarded before θ samples are averaged.
    pub burn_in: usize,
    pub seed: u64,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            n_iters: 100,
            burn_in: 50,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTopics {
    pub theta: Vec<f64>,
    /// Set when the document had no in-vocabulary tokens and `theta` is uniform.
    pub empty: bool,
}

impl LdaModel {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let model: Self = serde_json::from_str(&text)?;
        model.check_counts()?;
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn check_vocabulary(&self, vocab: &Vocabulary) -> Result<()> {
        if vocab.hash() != self.vocab_hash {
            return Err(Error::VocabularyMismatch {
                expected: self.vocab_hash.clone(),
                found: vocab.hash(),
            });
        }
        Ok(())
    }

    /// Verify the count tables against each other and against the assignments.
    pub fn check_counts(&self) -> Result<()> {
        if self.n_kw.len() != self.k || self.n_kw.iter().any(|r| r.len() != self.v) {
            return Err(Error::invalid("LDA checkpoint has inconsistent dimensions"));
        }
        check_tables(self.k, self.v, |t, w| self.n_kw[t][w], &self.n_k, &self.n_dk, &self.assignments, None)
    }

    /// Smoothed topic-word distribution `(n_kw + β) / (n_k + Vβ)`.
    pub fn topic_word(&self, topic: usize) -> Vec<f64> {
        let denom = self.n_k[topic] as f64 + self.v as f64 * self.beta;
        self.n_kw[topic].iter().map(|c| (*c as f64 + self.beta) / denom).collect()
    }

    pub fn phi(&self) -> Vec<Vec<f64>> {
        (0..self.k).map(|t| self.topic_word(t)).collect()
    }

    /// Topic mixture of training document `d`.
    pub fn doc_topic(&self, d: usize) -> Vec<f64> {
        let row = &self.n_dk[d];
        let len: u32 = row.iter().sum();
        let denom = len as f64 + self.k as f64 * self.alpha;
        row.iter().map(|c| (*c as f64 + self.alpha) / denom).collect()
    }

    /// The `n` most probable terms of `topic`, ties broken lexicographically.
    pub fn top_words(&self, vocab: &Vocabulary, topic: usize, n: usize) -> Result<Vec<(String, f64)>> {
        self.check_vocabulary(vocab)?;
        if topic >= self.k {
            return Err(Error::invalid(format!("topic {topic} out of range for K = {}", self.k)));
        }
        let phi = self.topic_word(topic);
        let mut order: Vec<usize> = (0..self.v).collect();
        // vocabulary ids are already in lexicographic order
        order.sort_by(|a, b| phi[*b].total_cmp(&phi[*a]).then(a.cmp(b)));
        Ok(order
            .into_iter()
            .take(n)
            .map(|w| (vocab.term(w).to_string(), phi[w]))
            .collect())
    }
}

/// Fold-in Gibbs sampling of new documents against the frozen topic-word counts.
///
/// Documents are processed in parallel, each with its own derived seed, so the
/// result does not depend on the thread count.
pub fn infer_doc_topics(model: &LdaModel, docs: &[DocTermCounts], cfg: &InferConfig) -> Vec<DocTopics> {
    let phi = model.phi();
    docs.par_iter()
        .enumerate()
        .map(|(d, counts)| fold_in(model, &phi, counts, cfg, derive_index_seed(cfg.seed, d as u64)))
        .collect()
}

fn fold_in(model: &LdaModel, phi: &[Vec<f64>], counts: &DocTermCounts, cfg: &InferConfig, seed: u64) -> DocTopics {
    let k = model.k;
    let words: Vec<usize> = counts.expand().filter(|w| *w < model.v).collect();
    if words.is_empty() {
        return DocTopics {
            theta: vec![1.0 / k as f64; k],
            empty: true,
        };
    }
    let mut rng = seeded(seed);
    let mut n_dk = vec![0u32; k];
    let mut z: Vec<usize> = words
        .iter()
        .map(|_| {
            let t = rng.random_range(0..k);
            n_dk[t] += 1;
            t
        })
        .collect();
    let mut cumulative = vec![0.0; k];
    let mut theta = vec![0.0; k];
    let mut samples = 0usize;
    let denom = words.len() as f64 + k as f64 * model.alpha;
    for it in 0..cfg.n_iters.max(1) {
        for (i, &w) in words.iter().enumerate() {
            n_dk[z[i]] -= 1;
            let mut total = 0.0;
            for t in 0..k {
                total += (n_dk[t] as f64 + model.alpha) * phi[t][w];
                cumulative[t] = total;
            }
            let u = rng.random::<f64>() * total;
            let new = cumulative.iter().position(|c| u < *c).unwrap_or(k - 1);
            n_dk[new] += 1;
            z[i] = new;
        }
        if it >= cfg.burn_in.min(cfg.n_iters.max(1) - 1) {
            for t in 0..k {
                theta[t] += (n_dk[t] as f64 + model.alpha) / denom;
            }
            samples += 1;
        }
    }
    let total: f64 = theta.iter().sum();
    debug_assert!(samples > 0);
    theta.iter_mut().for_each(|x| *x /= total);
    DocTopics { theta, empty: false }
}
