//! Aligning fitted topics with reference topics; LDA topic indices are arbitrary.

use serde::{Deserialize, Serialize};

use crate::textprep::Vocabulary;

pub fn total_variation(p: &[f64], q: &[f64]) -> f64 {
    0.5 * p.iter().zip(q).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicPair {
    pub reference: usize,
    pub fitted: usize,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMatching {
    /// Sorted by reference index.
    pub pairs: Vec<TopicPair>,
    pub mean_distance: f64,
}

impl TopicMatching {
    pub fn fitted_for(&self, reference: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.reference == reference).map(|p| p.fitted)
    }

    pub fn reference_for(&self, fitted: usize) -> Option<usize> {
        self.pairs.iter().find(|p| p.fitted == fitted).map(|p| p.reference)
    }
}

/// Greedy matching on total-variation distance: repeatedly take the closest
/// unmatched pair. Matches `min(reference.len(), fitted.len())` topics.
pub fn greedy_match(reference: &[Vec<f64>], fitted: &[Vec<f64>]) -> TopicMatching {
    let mut candidates: Vec<TopicPair> = reference
        .iter()
        .enumerate()
        .flat_map(|(r, p)| {
            fitted.iter().enumerate().map(move |(f, q)| TopicPair {
                reference: r,
                fitted: f,
                distance: total_variation(p, q),
            })
        })
        .collect();
    candidates.sort_by(|a, b| {
        a.distance
            .total_cmp(&b.distance)
            .then(a.reference.cmp(&b.reference))
            .then(a.fitted.cmp(&b.fitted))
    });
    let mut used_r = vec![false; reference.len()];
    let mut used_f = vec![false; fitted.len()];
    let mut pairs = Vec::new();
    for c in candidates {
        if !used_r[c.reference] && !used_f[c.fitted] {
            used_r[c.reference] = true;
            used_f[c.fitted] = true;
            pairs.push(c);
        }
    }
    pairs.sort_by_key(|p| p.reference);
    let mean_distance = if pairs.is_empty() {
        0.0
    } else {
        pairs.iter().map(|p| p.distance).sum::<f64>() / pairs.len() as f64
    };
    TopicMatching { pairs, mean_distance }
}

/// Reorder the columns of `phi` (indexed by `vocab`) into the order of `words`.
/// Words missing from the vocabulary get probability 0.
pub fn align_columns(phi: &[Vec<f64>], vocab: &Vocabulary, words: &[String]) -> Vec<Vec<f64>> {
    phi.iter()
        .map(|row| words.iter().map(|w| vocab.id(w).map_or(0.0, |i| row[i])).collect())
        .collect()
}
