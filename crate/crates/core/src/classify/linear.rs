//! Linear classifiers trained by mini-batch SGD with per-class weights.
//!
//! Scores are `s = W x + b`. Per-sample losses, scaled by the weight `c_y` of the
//! sample's class:
//!
//! - cross-entropy: `c_y (logsumexp(s) - s_y)`
//! - hinge, one-vs-rest with targets `t_j = ±1`: `c_y Σ_j max(0, 1 - t_j s_j)`
//! - squared, one-vs-rest: `c_y Σ_j ½ (s_j - t_j)²`
//!
//! The batch objective is the mean sample loss plus `½ λ ‖W‖²`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::rng::seeded;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LossKind {
    CrossEntropy,
    Hinge,
    Squared,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::CrossEntropy, LossKind::Hinge, LossKind::Squared];

    pub fn as_str(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Hinge => "hinge",
            LossKind::Squared => "squared",
        }
    }
}

impl std::str::FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "cross_entropy" | "crossentropy" | "logistic" => Ok(Self::CrossEntropy),
            "hinge" | "svm" => Ok(Self::Hinge),
            "squared" | "linear" => Ok(Self::Squared),
            other => Err(Error::invalid(format!("unknown loss {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SgdConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Step size at update `t` is `learning_rate / √t`.
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        Self {
            epochs: 100,
            batch_size: 64,
            learning_rate: 0.1,
            l2: 1e-4,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("sgd.epochs and sgd.batch_size must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) || !(self.l2 >= 0.0) {
            return Err(Error::invalid("sgd.learning_rate must be positive and sgd.l2 non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub config: SgdConfig,
    /// Mean weighted training loss of each epoch, measured before each batch update.
    pub loss_trace: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearClassifier {
    pub loss: LossKind,
    /// `C × V`.
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub class_weights: Vec<f64>,
    pub meta: TrainMeta,
}

/// Per-sample loss and its gradient with respect to the scores.
pub fn sample_loss(loss: LossKind, scores: &[f64], label: usize, weight: f64, grad: &mut [f64]) -> f64 {
    match loss {
        LossKind::CrossEntropy => {
            let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let sum: f64 = scores.iter().map(|s| (s - max).exp()).sum();
            let lse = max + sum.ln();
            for (j, g) in grad.iter_mut().enumerate() {
                let p = (scores[j] - lse).exp();
                *g = weight * (p - if j == label { 1.0 } else { 0.0 });
            }
            weight * (lse - scores[label])
        }
        LossKind::Hinge => {
            let mut total = 0.0;
            for (j, g) in grad.iter_mut().enumerate() {
                let t = if j == label { 1.0 } else { -1.0 };
                let margin = 1.0 - t * scores[j];
                if margin > 0.0 {
                    total += margin;
                    *g = -weight * t;
                } else {
                    *g = 0.0;
                }
            }
            weight * total
        }
        LossKind::Squared => {
            let mut total = 0.0;
            for (j, g) in grad.iter_mut().enumerate() {
                let t = if j == label { 1.0 } else { -1.0 };
                let r = scores[j] - t;
                total += 0.5 * r * r;
                *g = weight * r;
            }
            weight * total
        }
    }
}

pub fn scores(weights: &[Vec<f64>], bias: &[f64], x: &FeatureVector) -> Vec<f64> {
    weights.iter().zip(bias).map(|(w, b)| x.dot(w) + b).collect()
}

/// Gradient of the batch objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

/// Batch objective `mean_i loss_i + ½ λ ‖W‖²` and its gradient.
#[allow(clippy::too_many_arguments)]
pub fn batch_objective(
    loss: LossKind,
    weights: &[Vec<f64>],
    bias: &[f64],
    class_weights: &[f64],
    l2: f64,
    xs: &[&FeatureVector],
    ys: &[usize],
) -> (f64, Gradient) {
    let c = bias.len();
    let dim = weights.first().map_or(0, Vec::len);
    let mut gw = vec![vec![0.0; dim]; c];
    let mut gb = vec![0.0; c];
    let mut total = 0.0;
    let mut gs = vec![0.0; c];
    let n = xs.len() as f64;
    for (x, y) in xs.iter().zip(ys) {
        let s = scores(weights, bias, x);
        total += sample_loss(loss, &s, *y, class_weights[*y], &mut gs);
        for j in 0..c {
            if gs[j] == 0.0 {
                continue;
            }
            gb[j] += gs[j];
            for (i, v) in &x.entries {
                gw[j][*i] += gs[j] * v;
            }
        }
    }
    let reg: f64 = weights.iter().flatten().map(|w| w * w).sum::<f64>() * 0.5 * l2;
    for j in 0..c {
        gb[j] /= n;
        for (g, w) in gw[j].iter_mut().zip(&weights[j]) {
            *g = *g / n + l2 * w;
        }
    }
    (total / n + reg, Gradient { weights: gw, bias: gb })
}

/// Mini-batch SGD. The shuffle order depends only on `cfg.seed`, so equal
/// inputs give bit-identical models.
pub fn train_sgd(
    features: &[FeatureVector],
    labels: &[usize],
    n_classes: usize,
    dim: usize,
    loss: LossKind,
    class_weights: &[f64],
    cfg: &SgdConfig,
) -> Result<LinearClassifier> {
    cfg.validate()?;
    if features.len() != labels.len() {
        return Err(Error::invalid("features and labels differ in length"));
    }
    if n_classes < 2 {
        return Err(Error::invalid("training needs at least two classes"));
    }
    if class_weights.len() != n_classes || class_weights.iter().any(|w| !(*w > 0.0 && w.is_finite())) {
        return Err(Error::invalid("one positive finite class weight per class is required"));
    }
    if features.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if let Some(y) = labels.iter().find(|y| **y >= n_classes) {
        return Err(Error::UnknownLabel(format!("class index {y} outside {n_classes} classes")));
    }
    if features.iter().flat_map(|f| &f.entries).any(|(i, _)| *i >= dim) {
        return Err(Error::invalid("feature index outside the declared dimension"));
    }

    let mut weights = vec![vec![0.0; dim]; n_classes];
    let mut bias = vec![0.0; n_classes];
    let mut rng = seeded(cfg.seed);
    let mut order: Vec<usize> = (0..features.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut step = 0u64;
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let xs: Vec<&FeatureVector> = chunk.iter().map(|i| &features[*i]).collect();
            let ys: Vec<usize> = chunk.iter().map(|i| labels[*i]).collect();
            let (value, grad) = batch_objective(loss, &weights, &bias, class_weights, cfg.l2, &xs, &ys);
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += value * chunk.len() as f64;
            step += 1;
            let lr = cfg.learning_rate / (step as f64).sqrt();
            for j in 0..n_classes {
                bias[j] -= lr * grad.bias[j];
                for (w, g) in weights[j].iter_mut().zip(&grad.weights[j]) {
                    *w -= lr * g;
                }
            }
        }
        trace.push(epoch_loss / features.len() as f64);
    }
    if weights.iter().flatten().chain(&bias).any(|w| !w.is_finite()) {
        return Err(Error::NonFiniteLoss {
            epoch: cfg.epochs - 1,
            batch: order.len().div_ceil(cfg.batch_size) - 1,
        });
    }
    Ok(LinearClassifier {
        loss,
        weights,
        bias,
        class_weights: class_weights.to_vec(),
        meta: TrainMeta {
            config: cfg.clone(),
            loss_trace: trace,
        },
    })
}

impl LinearClassifier {
    pub fn n_classes(&self) -> usize {
        self.bias.len()
    }

    pub fn dim(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// Raw margins `W x + b`.
    pub fn scores(&self, x: &FeatureVector) -> Vec<f64> {
        scores(&self.weights, &self.bias, x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;
    use rand::Rng;

    fn fv(dense: &[f64]) -> FeatureVector {
        FeatureVector {
            entries: dense.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(i, v)| (i, *v)).collect(),
        }
    }

    fn random_fixture(seed: u64, n: usize, dim: usize, c: usize) -> (Vec<FeatureVector>, Vec<usize>, Vec<Vec<f64>>, Vec<f64>, Vec<f64>) {
        let mut rng = seeded(seed);
        let xs = (0..n).map(|_| fv(&(0..dim).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>())).collect();
        let ys = (0..n).map(|_| rng.random_range(0..c)).collect();
        let w = (0..c).map(|_| (0..dim).map(|_| rng.random_range(-0.5..0.5)).collect()).collect();
        let b = (0..c).map(|_| rng.random_range(-0.5..0.5)).collect();
        let cw = (0..c).map(|_| rng.random_range(0.5..3.0)).collect();
        (xs, ys, w, b, cw)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-6;
        for loss in LossKind::ALL {
            for seed in 0..5 {
                let (xs, ys, w, b, cw) = random_fixture(seed, 5, 8, 3);
                let refs: Vec<&FeatureVector> = xs.iter().collect();
                let (_, g) = batch_objective(loss, &w, &b, &cw, 0.01, &refs, &ys);
                for j in 0..3 {
                    for i in 0..8 {
                        let mut wp = w.clone();
                        wp[j][i] += h;
                        let mut wm = w.clone();
                        wm[j][i] -= h;
                        let fd = (batch_objective(loss, &wp, &b, &cw, 0.01, &refs, &ys).0
                            - batch_objective(loss, &wm, &b, &cw, 0.01, &refs, &ys).0)
                            / (2.0 * h);
                        let an = g.weights[j][i];
                        assert!((fd - an).abs() <= 1e-5 * an.abs().max(1.0), "{loss:?} w[{j}][{i}]: {fd} vs {an}");
                    }
                }
            }
        }
    }

    #[test]
    fn separable_two_class_reaches_full_accuracy() {
        let xs: Vec<FeatureVector> = (0..40)
            .map(|i| if i % 2 == 0 { fv(&[1.0, 0.1 * (i % 5) as f64, 0.0]) } else { fv(&[0.0, 0.1 * (i % 5) as f64, 1.0]) })
            .collect();
        let ys: Vec<usize> = (0..40).map(|i| i % 2).collect();
        for loss in LossKind::ALL {
            let cfg = SgdConfig {
                epochs: 50,
                batch_size: 8,
                learning_rate: 0.5,
                ..SgdConfig::default()
            };
            let m = train_sgd(&xs, &ys, 2, 3, loss, &[1.0, 1.0], &cfg).unwrap();
            let correct = xs
                .iter()
                .zip(&ys)
                .filter(|(x, y)| crate::classify::argmax(&m.scores(x)) == **y)
                .count();
            assert_eq!(correct, 40, "{loss:?}");
        }
    }

    #[test]
    fn single_class_is_rejected() {
        let xs = vec![fv(&[1.0])];
        assert!(train_sgd(&xs, &[0], 1, 1, LossKind::CrossEntropy, &[1.0], &SgdConfig::default()).is_err());
    }

    #[test]
    fn nan_loss_reports_batch() {
        let xs = vec![fv(&[1.0]), fv(&[f64::NAN]), fv(&[1.0])];
        let cfg = SgdConfig {
            batch_size: 1,
            epochs: 1,
            ..SgdConfig::default()
        };
        let err = train_sgd(&xs, &[0, 1, 0], 2, 1, LossKind::Squared, &[1.0, 1.0], &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { epoch: 0, .. }));
    }

    #[test]
    fn doubling_weights_and_halving_rate_is_exact() {
        let (xs, ys, _, _, cw) = random_fixture(11, 60, 6, 3);
        for loss in LossKind::ALL {
            let cfg = SgdConfig {
                epochs: 5,
                batch_size: 7,
                l2: 0.0,
                seed: 3,
                ..SgdConfig::default()
            };
            let a = train_sgd(&xs, &ys, 3, 6, loss, &cw, &cfg).unwrap();
            let cw2: Vec<f64> = cw.iter().map(|w| 2.0 * w).collect();
            let cfg2 = SgdConfig {
                learning_rate: cfg.learning_rate / 2.0,
                ..cfg.clone()
            };
            let b = train_sgd(&xs, &ys, 3, 6, loss, &cw2, &cfg2).unwrap();
            for x in &xs {
                assert_eq!(a.scores(x), b.scores(x), "{loss:?}");
            }
        }
    }

    #[test]
    fn training_is_deterministic() {
        let (xs, ys, _, _, cw) = random_fixture(5, 50, 4, 3);
        let cfg = SgdConfig {
            epochs: 3,
            ..SgdConfig::default()
        };
        let a = train_sgd(&xs, &ys, 3, 4, LossKind::Hinge, &cw, &cfg).unwrap();
        let b = train_sgd(&xs, &ys, 3, 4, LossKind::Hinge, &cw, &cfg).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.meta.loss_trace.len(), 3);
    }
}
