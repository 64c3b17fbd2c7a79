//! Stratified k-fold cross-validation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelSpec, Predict};
use crate::error::{Error, Result};
use crate::eval::{confusion, metrics, ConfusionMatrix, MetricReport};
use crate::features::FeatureVector;
use crate::rng::{derive_index_seed, seeded};

/// Validation indices of each fold. Every class's shuffled members are dealt
/// round-robin, continuing where the previous class stopped, so each fold gets
/// its class share ±1 and fold sizes differ by at most one.
pub fn stratified_folds(labels: &[usize], class_names: &[String], k: usize, seed: u64) -> Result<Vec<Vec<usize>>> {
    if k < 2 {
        return Err(Error::invalid("cross-validation needs at least two folds"));
    }
    let c = class_names.len();
    let mut members = vec![Vec::new(); c];
    for (i, y) in labels.iter().enumerate() {
        members
            .get_mut(*y)
            .ok_or_else(|| Error::UnknownLabel(format!("class index {y} outside {c} classes")))?
            .push(i);
    }
    for (name, m) in class_names.iter().zip(&members) {
        if m.len() < k {
            return Err(Error::ClassTooSmall {
                class: name.clone(),
                count: m.len(),
                k,
            });
        }
    }
    let mut rng = seeded(seed);
    let mut folds = vec![Vec::new(); k];
    let mut next = 0;
    for mut m in members {
        m.shuffle(&mut rng);
        for i in m {
            folds[next].push(i);
            next = (next + 1) % k;
        }
    }
    for f in &mut folds {
        f.sort_unstable();
    }
    Ok(folds)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold: usize,
    pub train_size: usize,
    pub validation_size: usize,
    pub accuracy: f64,
    pub confusion: ConfusionMatrix,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub folds: Vec<FoldResult>,
    /// Sum of the per-fold validation matrices.
    pub pooled: ConfusionMatrix,
    pub report: MetricReport,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

impl CvReport {
    pub fn accuracies(&self) -> Vec<f64> {
        self.folds.iter().map(|f| f.accuracy).collect()
    }
}

/// Train on k−1 folds and validate on the remaining one, for every fold.
/// Folds train in parallel, each with a seed derived from `seed` and its index.
pub fn kfold_cv(
    features: &[FeatureVector],
    labels: &[usize],
    class_names: &[String],
    dim: usize,
    k: usize,
    seed: u64,
    spec: &ModelSpec,
) -> Result<CvReport> {
    if features.len() != labels.len() {
        return Err(Error::invalid("features and labels differ in length"));
    }
    let folds = stratified_folds(labels, class_names, k, seed)?;
    let mut in_fold = vec![0usize; labels.len()];
    for (f, idx) in folds.iter().enumerate() {
        for i in idx {
            in_fold[*i] = f;
        }
    }
    let results: Vec<FoldResult> = (0..k)
        .into_par_iter()
        .map(|f| {
            let train: Vec<usize> = (0..labels.len()).filter(|i| in_fold[*i] != f).collect();
            let xs: Vec<FeatureVector> = train.iter().map(|i| features[*i].clone()).collect();
            let ys: Vec<usize> = train.iter().map(|i| labels[*i]).collect();
            let mut fold_spec = spec.clone();
            fold_spec.sgd.seed = derive_index_seed(seed, f as u64);
            let model = fold_spec.train(&xs, &ys, class_names.len(), dim)?;
            let truth: Vec<usize> = folds[f].iter().map(|i| labels[*i]).collect();
            let pred: Vec<usize> = folds[f].iter().map(|i| model.predict(&features[*i]).class).collect();
            let cm = confusion(&truth, &pred, class_names)?;
            Ok(FoldResult {
                fold: f,
                train_size: train.len(),
                validation_size: folds[f].len(),
                accuracy: cm.trace() as f64 / cm.total().max(1) as f64,
                confusion: cm,
            })
        })
        .collect::<Result<_>>()?;
    let mut pooled = ConfusionMatrix::new(class_names.to_vec());
    for r in &results {
        pooled.add(&r.confusion)?;
    }
    let acc: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let mean = acc.iter().sum::<f64>() / k as f64;
    let var = acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k as f64;
    Ok(CvReport {
        report: metrics(&pooled)?,
        pooled,
        folds: results,
        mean_accuracy: mean,
        std_accuracy: var.sqrt(),
    })
}
