//! Topic classifiers over TF-IDF features, a uniform handle for evaluation and
//! persistence, and the client for external models.

mod bayes;
pub mod bridge;
mod cv;
mod linear;

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{FeatureVector, TfidfVectorizer};

pub use bayes::{log_sum_exp, train_naive_bayes, NaiveBayesModel};
pub use bridge::{BridgeClient, BridgeConfig, BridgeEndpoint, BridgeFailure, BridgeOutcome, BridgeResponse};
pub use cv::{kfold_cv, stratified_folds, CvReport, FoldResult};
pub use linear::{batch_objective, sample_loss, train_sgd, Gradient, LinearClassifier, LossKind, SgdConfig, TrainMeta};

pub const HANDLE_SCHEMA_VERSION: u32 = 1;

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, s) in scores.iter().enumerate() {
        if *s > scores[best] {
            best = i;
        }
    }
    best
}

pub fn class_counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut counts = vec![0; n_classes];
    for y in labels {
        if let Some(c) = counts.get_mut(*y) {
            *c += 1;
        }
    }
    counts
}

/// Inverse-frequency weights `w_c = N / (C · n_c)`.
pub fn class_weights(counts: &[usize]) -> Result<Vec<f64>> {
    if let Some(c) = counts.iter().position(|n| *n == 0) {
        return Err(Error::EmptyClass(format!("class {c}")));
    }
    let n: usize = counts.iter().sum();
    let c = counts.len() as f64;
    Ok(counts.iter().map(|k| n as f64 / (c * *k as f64)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ScoreKind {
    /// Unnormalized `W x + b`.
    Margin,
    LogPosterior,
    /// Whatever the external model reports.
    Remote,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub class: usize,
    pub scores: Vec<f64>,
    pub score_kind: ScoreKind,
}

pub trait Predict {
    fn predict(&self, x: &FeatureVector) -> Prediction;
}

impl Predict for LinearClassifier {
    fn predict(&self, x: &FeatureVector) -> Prediction {
        let scores = self.scores(x);
        Prediction {
            class: argmax(&scores),
            scores,
            score_kind: ScoreKind::Margin,
        }
    }
}

impl Predict for NaiveBayesModel {
    fn predict(&self, x: &FeatureVector) -> Prediction {
        let scores = self.log_posterior(x);
        Prediction {
            class: argmax(&scores),
            scores,
            score_kind: ScoreKind::LogPosterior,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ModelKind {
    Linear(LossKind),
    NaiveBayes,
}

impl ModelKind {
    pub const ALL: [ModelKind; 4] = [
        ModelKind::Linear(LossKind::Squared),
        ModelKind::Linear(LossKind::Hinge),
        ModelKind::NaiveBayes,
        ModelKind::Linear(LossKind::CrossEntropy),
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::Linear(LossKind::CrossEntropy) => "logistic",
            ModelKind::Linear(LossKind::Hinge) => "svm",
            ModelKind::Linear(LossKind::Squared) => "linear_sgd",
            ModelKind::NaiveBayes => "naive_bayes",
        }
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "naive_bayes" | "nb" | "bayes" => Ok(ModelKind::NaiveBayes),
            "linear_sgd" | "sgd" => Ok(ModelKind::Linear(LossKind::Squared)),
            other => other.parse().map(ModelKind::Linear),
        }
    }
}

impl TryFrom<String> for ModelKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ModelKind> for String {
    fn from(k: ModelKind) -> String {
        k.as_str().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub sgd: SgdConfig,
    pub nb_smoothing: f64,
    /// Inverse-frequency class weights for linear models; uniform weights otherwise.
    pub class_weighting: bool,
}

impl Default for ModelSpec {
    fn default() -> Self {
        Self {
            kind: ModelKind::Linear(LossKind::CrossEntropy),
            sgd: SgdConfig::default(),
            nb_smoothing: 1.0,
            class_weighting: true,
        }
    }
}

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            ..Self::default()
        }
    }

    pub fn train(&self, xs: &[FeatureVector], ys: &[usize], n_classes: usize, dim: usize) -> Result<TrainedModel> {
        match self.kind {
            ModelKind::Linear(loss) => {
                let weights = if self.class_weighting {
                    class_weights(&class_counts(ys, n_classes))?
                } else {
                    vec![1.0; n_classes]
                };
                train_sgd(xs, ys, n_classes, dim, loss, &weights, &self.sgd).map(TrainedModel::Linear)
            }
            ModelKind::NaiveBayes => {
                train_naive_bayes(xs, ys, n_classes, dim, self.nb_smoothing).map(TrainedModel::NaiveBayes)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrainedModel {
    Linear(LinearClassifier),
    NaiveBayes(NaiveBayesModel),
}

impl TrainedModel {
    pub fn n_classes(&self) -> usize {
        match self {
            TrainedModel::Linear(m) => m.n_classes(),
            TrainedModel::NaiveBayes(m) => m.n_classes(),
        }
    }
}

impl Predict for TrainedModel {
    fn predict(&self, x: &FeatureVector) -> Prediction {
        match self {
            TrainedModel::Linear(m) => m.predict(x),
            TrainedModel::NaiveBayes(m) => m.predict(x),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum HandleKind {
    Linear,
    NaiveBayes,
    Bridge,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum HandleModel {
    Local {
        vocab_hash: String,
        model: TrainedModel,
    },
    Bridge {
        endpoint: String,
        #[serde(default)]
        config: BridgeConfig,
    },
}

/// What a handle classifies: vectorized features for local models, raw text for
/// bridge models.
#[derive(Debug, Clone, Copy)]
pub enum Inputs<'a> {
    Features(&'a [FeatureVector]),
    Texts(&'a [String]),
}

pub type PredictOutcome = std::result::Result<Prediction, BridgeFailure>;

/// Persisted classifier plus the label names its class indices refer to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierHandle {
    pub schema_version: u32,
    pub labels: Vec<String>,
    pub model: HandleModel,
}

impl ClassifierHandle {
    pub fn local(labels: Vec<String>, vectorizer: &TfidfVectorizer, model: TrainedModel) -> Result<Self> {
        if model.n_classes() != labels.len() {
            return Err(Error::invalid(format!(
                "model has {} classes but {} labels were given",
                model.n_classes(),
                labels.len()
            )));
        }
        Ok(Self {
            schema_version: HANDLE_SCHEMA_VERSION,
            labels,
            model: HandleModel::Local {
                vocab_hash: vectorizer.vocab_hash(),
                model,
            },
        })
    }

    pub fn bridge(labels: Vec<String>, endpoint: &str, config: BridgeConfig) -> Self {
        Self {
            schema_version: HANDLE_SCHEMA_VERSION,
            labels,
            model: HandleModel::Bridge {
                endpoint: endpoint.to_string(),
                config,
            },
        }
    }

    pub fn kind(&self) -> HandleKind {
        match &self.model {
            HandleModel::Local {
                model: TrainedModel::Linear(_),
                ..
            } => HandleKind::Linear,
            HandleModel::Local {
                model: TrainedModel::NaiveBayes(_),
                ..
            } => HandleKind::NaiveBayes,
            HandleModel::Bridge { .. } => HandleKind::Bridge,
        }
    }

    pub fn label(&self, class: usize) -> &str {
        &self.labels[class]
    }

    /// Local models only accept features from the vectorizer they were trained with.
    pub fn check_vectorizer(&self, vectorizer: &TfidfVectorizer) -> Result<()> {
        match &self.model {
            HandleModel::Local { vocab_hash, .. } if *vocab_hash != vectorizer.vocab_hash() => {
                Err(Error::VocabularyMismatch {
                    expected: vocab_hash.clone(),
                    found: vectorizer.vocab_hash(),
                })
            }
            _ => Ok(()),
        }
    }

    pub fn predict_batch(&self, inputs: Inputs<'_>) -> Result<Vec<PredictOutcome>> {
        match (&self.model, inputs) {
            (HandleModel::Local { model, .. }, Inputs::Features(xs)) => {
                Ok(xs.par_iter().map(|x| Ok(model.predict(x))).collect())
            }
            (HandleModel::Bridge { endpoint, config }, Inputs::Texts(texts)) => {
                let endpoint: BridgeEndpoint = endpoint.parse()?;
                let mut client = BridgeClient::connect(&endpoint, &self.labels, *config)?;
                Ok(client
                    .classify(texts)?
                    .into_iter()
                    .map(|r| {
                        r.map(|r| Prediction {
                            class: r.class,
                            scores: r.scores,
                            score_kind: ScoreKind::Remote,
                        })
                    })
                    .collect())
            }
            (HandleModel::Local { .. }, Inputs::Texts(_)) => {
                Err(Error::invalid("local classifiers take vectorized features, not text"))
            }
            (HandleModel::Bridge { .. }, Inputs::Features(_)) => Err(Error::invalid("bridge classifiers take raw text")),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string(self)?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let handle: Self = serde_json::from_str(&text)?;
        if handle.schema_version != HANDLE_SCHEMA_VERSION {
            return Err(Error::invalid(format!(
                "classifier schema_version {} is not supported (expected {HANDLE_SCHEMA_VERSION})",
                handle.schema_version
            )));
        }
        if let HandleModel::Local { model, .. } = &handle.model {
            if model.n_classes() != handle.labels.len() {
                return Err(Error::invalid("classifier label list does not match its class count"));
            }
        }
        Ok(handle)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textprep::build_vocabulary;

    #[test]
    fn class_weight_examples() {
        let w = class_weights(&[90, 10]).unwrap();
        assert!((w[0] - 100.0 / 180.0).abs() < 1e-12 && (w[1] - 5.0).abs() < 1e-12);
        assert_eq!(class_weights(&[7, 7, 7]).unwrap(), vec![1.0; 3]);
        let counts = [13, 2, 40, 5];
        let w = class_weights(&counts).unwrap();
        let total: f64 = w.iter().zip(counts).map(|(w, n)| w * n as f64).sum();
        assert!((total - 60.0).abs() < 1e-9);
        assert!(matches!(class_weights(&[3, 0]), Err(Error::EmptyClass(_))));
    }

    #[test]
    fn argmax_ties_take_lowest_index() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
        assert_eq!(argmax(&[2.0, 2.0]), 0);
    }

    #[test]
    fn zero_vector_predicts_from_bias_and_prior() {
        let zero = FeatureVector::default();
        let lin = LinearClassifier {
            loss: LossKind::Hinge,
            weights: vec![vec![1.0; 3]; 3],
            bias: vec![0.1, 0.5, -0.2],
            class_weights: vec![1.0; 3],
            meta: TrainMeta {
                config: SgdConfig::default(),
                loss_trace: vec![],
            },
        };
        assert_eq!(lin.predict(&zero).class, 1);
        let nb = NaiveBayesModel {
            log_prior: vec![0.2f64.ln(), 0.8f64.ln()],
            log_likelihood: vec![vec![0.5f64.ln(); 2]; 2],
            smoothing: 1.0,
        };
        assert_eq!(nb.predict(&zero).class, 1);
    }

    fn tiny_setup() -> (TfidfVectorizer, Vec<FeatureVector>, Vec<usize>) {
        let docs: Vec<Vec<&str>> = vec![
            vec!["bus", "late"],
            vec!["bus", "late", "again"],
            vec!["train", "dirty"],
            vec!["dirty", "seat", "train"],
        ];
        let vec = TfidfVectorizer::fit(build_vocabulary(&docs, 1).unwrap());
        let xs = docs.iter().map(|d| vec.vectorize_terms(d)).collect();
        (vec, xs, vec![0, 0, 1, 1])
    }

    #[test]
    fn checkpoint_round_trip_preserves_predictions() {
        let dir = tempfile::tempdir().unwrap();
        let (vec, xs, ys) = tiny_setup();
        for kind in ModelKind::ALL {
            let model = ModelSpec::new(kind).train(&xs, &ys, 2, vec.dim()).unwrap();
            let handle = ClassifierHandle::local(vec!["Ops".into(), "Clean".into()], &vec, model).unwrap();
            let path = dir.path().join(format!("{kind}.json"));
            handle.save(&path).unwrap();
            let loaded = ClassifierHandle::load(&path).unwrap();
            assert_eq!(loaded, handle);
            loaded.check_vectorizer(&vec).unwrap();
            let a = handle.predict_batch(Inputs::Features(&xs)).unwrap();
            let b = loaded.predict_batch(Inputs::Features(&xs)).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn vocabulary_mismatch_is_fatal() {
        let (vec, xs, ys) = tiny_setup();
        let model = ModelSpec::new(ModelKind::NaiveBayes).train(&xs, &ys, 2, vec.dim()).unwrap();
        let handle = ClassifierHandle::local(vec!["a".into(), "b".into()], &vec, model).unwrap();
        let other = TfidfVectorizer::fit(build_vocabulary(&[vec!["bus", "rail"]], 1).unwrap());
        assert!(matches!(handle.check_vectorizer(&other), Err(Error::VocabularyMismatch { .. })));
    }

    #[test]
    fn model_kind_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.as_str().parse::<ModelKind>().unwrap(), k);
            let json = serde_json::to_string(&k).unwrap();
            assert_eq!(serde_json::from_str::<ModelKind>(&json).unwrap(), k);
        }
        assert!("forest".parse::<ModelKind>().is_err());
    }
}
