//! Multinomial naive Bayes over fractional (TF-IDF) feature weights.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NaiveBayesModel {
    pub log_prior: Vec<f64>,
    /// `C × V`; each row exponentiates to a distribution over the vocabulary.
    pub log_likelihood: Vec<Vec<f64>>,
    pub smoothing: f64,
}

/// `log P(c) = ln(n_c / N)` and `log P(t | c) = ln((F_ct + a) / (Σ_t F_ct + V a))`,
/// where `F_ct` sums the weights of term `t` over documents of class `c`.
pub fn train_naive_bayes(
    features: &[FeatureVector],
    labels: &[usize],
    n_classes: usize,
    dim: usize,
    smoothing: f64,
) -> Result<NaiveBayesModel> {
    if !(smoothing > 0.0 && smoothing.is_finite()) {
        return Err(Error::invalid("naive Bayes smoothing must be positive"));
    }
    if features.len() != labels.len() || features.is_empty() {
        return Err(Error::invalid("features and labels must be nonempty and aligned"));
    }
    let mut class_count = vec![0usize; n_classes];
    let mut weight = vec![vec![0.0; dim]; n_classes];
    for (x, y) in features.iter().zip(labels) {
        let row = weight
            .get_mut(*y)
            .ok_or_else(|| Error::UnknownLabel(format!("class index {y} outside {n_classes} classes")))?;
        class_count[*y] += 1;
        for (i, v) in &x.entries {
            if *i >= dim || *v < 0.0 {
                return Err(Error::invalid("naive Bayes features must be non-negative and inside the dimension"));
            }
            row[*i] += v;
        }
    }
    if let Some(c) = class_count.iter().position(|n| *n == 0) {
        return Err(Error::EmptyClass(format!("class {c}")));
    }
    let n = features.len() as f64;
    let log_prior = class_count.iter().map(|c| (*c as f64 / n).ln()).collect();
    let log_likelihood = weight
        .into_iter()
        .map(|row| {
            let denom = (row.iter().sum::<f64>() + dim as f64 * smoothing).ln();
            row.into_iter().map(|w| (w + smoothing).ln() - denom).collect()
        })
        .collect();
    Ok(NaiveBayesModel {
        log_prior,
        log_likelihood,
        smoothing,
    })
}

pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

impl NaiveBayesModel {
    pub fn n_classes(&self) -> usize {
        self.log_prior.len()
    }

    pub fn dim(&self) -> usize {
        self.log_likelihood.first().map_or(0, Vec::len)
    }

    /// Log-posteriors `log P(c | x)`.
    pub fn log_posterior(&self, x: &FeatureVector) -> Vec<f64> {
        let joint: Vec<f64> = self
            .log_prior
            .iter()
            .zip(&self.log_likelihood)
            .map(|(p, ll)| p + x.dot(ll))
            .collect();
        let z = log_sum_exp(&joint);
        joint.into_iter().map(|j| j - z).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fv(entries: &[(usize, f64)]) -> FeatureVector {
        FeatureVector {
            entries: entries.to_vec(),
        }
    }

    #[test]
    fn disjoint_vocabularies() {
        let xs = vec![fv(&[(0, 1.0), (1, 1.0)]), fv(&[(2, 1.0), (3, 1.0)])];
        let m = train_naive_bayes(&xs, &[0, 1], 2, 4, 1.0).unwrap();
        let post = m.log_posterior(&fv(&[(0, 0.5)]));
        assert!(post[0] > post[1]);
        for row in &m.log_likelihood {
            assert!((row.iter().map(|l| l.exp()).sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn uniform_corpus_returns_priors() {
        let xs = vec![fv(&[(0, 1.0), (1, 1.0)]); 4];
        let m = train_naive_bayes(&xs, &[0, 0, 0, 1], 2, 2, 0.5).unwrap();
        let post = m.log_posterior(&fv(&[(0, 0.3), (1, 0.7)]));
        assert!((post[0] - 0.75f64.ln()).abs() < 1e-12);
        assert!((post[1] - 0.25f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn hand_computed_bayes_table() {
        // docs: class 0 = {t0: 2, t1: 1}, {t0: 1}; class 1 = {t1: 1, t2: 1}; a = 1, V = 3
        let xs = vec![fv(&[(0, 2.0), (1, 1.0)]), fv(&[(0, 1.0)]), fv(&[(1, 1.0), (2, 1.0)])];
        let m = train_naive_bayes(&xs, &[0, 0, 1], 2, 3, 1.0).unwrap();
        // class 0 likelihoods: (3+1)/7, (1+1)/7, (0+1)/7; class 1: 1/5, 2/5, 2/5
        let x = fv(&[(0, 1.0), (2, 2.0)]);
        let j0 = (2.0f64 / 3.0) * (4.0 / 7.0) * (1.0f64 / 7.0).powi(2);
        let j1 = (1.0f64 / 3.0) * (1.0 / 5.0) * (2.0f64 / 5.0).powi(2);
        let post = m.log_posterior(&x);
        assert!((post[0].exp() - j0 / (j0 + j1)).abs() < 1e-9);
        assert!((post[1].exp() - j1 / (j0 + j1)).abs() < 1e-9);
    }

    #[test]
    fn invalid_inputs() {
        let xs = vec![fv(&[(0, 1.0)])];
        assert!(train_naive_bayes(&xs, &[0], 2, 1, 0.0).is_err());
        assert!(matches!(train_naive_bayes(&xs, &[0], 2, 1, 1.0), Err(Error::EmptyClass(_))));
    }
}
