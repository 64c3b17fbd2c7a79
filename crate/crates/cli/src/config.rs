//! Run configuration: one JSON document, then `TFE__*` environment overrides,
//! then `--set` flags, then the dedicated flags.

use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use transit_feedback::classify::{BridgeConfig, ModelKind, ModelSpec, SgdConfig};
use transit_feedback::corpus::demo::DemoConfig;
use transit_feedback::corpus::{CsvSchema, TopicLabel, DEFAULT_HANDLES};
use transit_feedback::report::{ArtifactFormat, GroupBy};
use transit_feedback::rng::derive_seed;
use transit_feedback::textprep::PrepConfig;
use transit_feedback::topics::{InferConfig, LdaConfig, Linkage};

/// Prefix of environment overrides: `TFE__LDA__K=10` sets `lda.k`.
pub const ENV_PREFIX: &str = "TFE__";

/// A configuration problem; maps to exit status 1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError(pub String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn bad(msg: impl Into<String>) -> ConfigError {
    ConfigError(msg.into())
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    /// CRM export (CSV).
    pub corpus: Option<PathBuf>,
    /// Tweets as JSON lines.
    pub tweets: Option<PathBuf>,
    pub assets: Option<PathBuf>,
    pub ridership: Option<PathBuf>,
    /// First-name gender table; gender inference is off without it.
    pub names: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub agency_terms: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    /// Analyst-curated mapping from LDA topics to broad labels.
    pub condensation: Option<PathBuf>,
    /// `id,label` reference labels, used to suggest a mapping when none is curated.
    pub reference_labels: Option<PathBuf>,
    pub lexicon: Option<PathBuf>,
}

impl Paths {
    fn entries(&self) -> [(&'static str, &Option<PathBuf>); 11] {
        [
            ("corpus", &self.corpus),
            ("tweets", &self.tweets),
            ("assets", &self.assets),
            ("ridership", &self.ridership),
            ("names", &self.names),
            ("stopwords", &self.stopwords),
            ("agency_terms", &self.agency_terms),
            ("categories", &self.categories),
            ("condensation", &self.condensation),
            ("reference_labels", &self.reference_labels),
            ("lexicon", &self.lexicon),
        ]
    }

    /// The path under `key`, or an error naming `paths.<key>`.
    pub fn require(&self, key: &str) -> Result<&Path, ConfigError> {
        self.entries()
            .into_iter()
            .find(|(k, _)| *k == key)
            .and_then(|(_, p)| p.as_deref())
            .ok_or_else(|| bad(format!("paths.{key} is required for this command but not set")))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestConfig {
    pub schema: CsvSchema,
    pub handles: Vec<String>,
    /// Reject CRM rows whose problem category is not in the vocabulary.
    pub check_categories: bool,
}

impl Default for IngestConfig {
    fn default() -> Self {
        Self {
            schema: CsvSchema::default(),
            handles: DEFAULT_HANDLES.iter().map(|h| h.to_string()).collect(),
            check_categories: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VocabConfig {
    pub min_count: usize,
}

impl Default for VocabConfig {
    fn default() -> Self {
        Self { min_count: 20 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScreenConfig {
    pub linkage: Linkage,
    pub distance_threshold: f64,
}

impl Default for ScreenConfig {
    fn default() -> Self {
        Self {
            linkage: Linkage::Average,
            distance_threshold: 0.9,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Thresholds {
    /// Minimum largest topic share for an LDA record to enter the training
    /// set. Unset means `max(0.1, 2/K)`, which stays above the uniform share.
    pub primary_topic: Option<f64>,
}

impl Thresholds {
    pub fn primary_topic(&self, k: usize) -> f64 {
        self.primary_topic.unwrap_or_else(|| (2.0 / k as f64).clamp(0.1, 1.0))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Models cross-validated by `train`; the first best by mean accuracy is kept.
    pub models: Vec<ModelKind>,
    pub folds: usize,
    pub sgd: SgdConfig,
    pub nb_smoothing: f64,
    pub class_weighting: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            models: ModelKind::ALL.to_vec(),
            folds: 5,
            sgd: SgdConfig::default(),
            nb_smoothing: 1.0,
            class_weighting: true,
        }
    }
}

impl TrainConfig {
    pub fn spec(&self, kind: ModelKind) -> ModelSpec {
        ModelSpec {
            kind,
            sgd: self.sgd.clone(),
            nb_smoothing: self.nb_smoothing,
            class_weighting: self.class_weighting,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnrichConfig {
    /// Bridge endpoint of an external topic classifier; the trained local model otherwise.
    pub topic_endpoint: Option<String>,
    pub sentiment_endpoint: Option<String>,
    /// Fall back to the lexicon when the sentiment bridge fails a record.
    pub sentiment_fallback: bool,
    pub bridge: BridgeConfig,
}

impl Default for EnrichConfig {
    fn default() -> Self {
        Self {
            topic_endpoint: None,
            sentiment_endpoint: None,
            sentiment_fallback: true,
            bridge: BridgeConfig::default(),
        }
    }
}

/// Complaints per million riders for one grouping, optionally for one topic only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RateView {
    pub group_by: GroupBy,
    #[serde(default)]
    pub topic: Option<TopicLabel>,
}

impl RateView {
    pub fn new(group_by: GroupBy, topic: Option<TopicLabel>) -> Self {
        Self { group_by, topic }
    }

    pub fn name(&self) -> String {
        let by = serde_json::to_value(self.group_by)
            .ok()
            .and_then(|v| v.as_str().map(String::from))
            .unwrap_or_default();
        match self.topic {
            None => format!("by_{by}"),
            Some(t) => format!("{}_by_{by}", slug(t.name())),
        }
    }
}

pub fn slug(s: &str) -> String {
    let mut out = String::new();
    for c in s.chars() {
        if c.is_ascii_alphanumeric() {
            out.push(c.to_ascii_lowercase());
        } else if !out.ends_with('_') {
            out.push('_');
        }
    }
    out.trim_matches('_').to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReportConfig {
    /// Defaults to `seed-<seed>`.
    pub run_id: Option<String>,
    /// Inclusive window; defaults to the span of the enriched records.
    pub start: Option<NaiveDate>,
    pub end: Option<NaiveDate>,
    pub rates: Vec<RateView>,
    pub series: Vec<RateView>,
    pub moving_average_days: usize,
    pub min_periods: Option<usize>,
    /// Divide by a group's own ridership when the ridership file has it.
    pub group_ridership: bool,
    pub formats: Vec<ArtifactFormat>,
}

impl Default for ReportConfig {
    fn default() -> Self {
        Self {
            run_id: None,
            start: None,
            end: None,
            rates: vec![
                RateView::new(GroupBy::Topic, None),
                RateView::new(GroupBy::Mode, None),
                RateView::new(GroupBy::Route, Some(TopicLabel::Operations)),
                RateView::new(GroupBy::Station, Some(TopicLabel::Cleanliness)),
            ],
            series: vec![
                RateView::new(GroupBy::All, None),
                RateView::new(GroupBy::Line, Some(TopicLabel::Fares)),
                RateView::new(GroupBy::Line, Some(TopicLabel::Cleanliness)),
            ],
            moving_average_days: 30,
            min_periods: None,
            group_ridership: false,
            formats: vec![ArtifactFormat::Csv, ArtifactFormat::Json, ArtifactFormat::Svg],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Root of every random stream; stage seeds are derived from it.
    pub seed: u64,
    pub out: PathBuf,
    pub paths: Paths,
    pub ingest: IngestConfig,
    pub prep: PrepConfig,
    pub vocab: VocabConfig,
    pub screen: ScreenConfig,
    pub lda: LdaConfig,
    pub infer: InferConfig,
    pub thresholds: Thresholds,
    pub train: TrainConfig,
    pub enrich: EnrichConfig,
    pub report: ReportConfig,
    pub demo: DemoConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("runs"),
            paths: Paths::default(),
            ingest: IngestConfig::default(),
            prep: PrepConfig::default(),
            vocab: VocabConfig::default(),
            screen: ScreenConfig::default(),
            lda: LdaConfig::default(),
            infer: InferConfig::default(),
            thresholds: Thresholds::default(),
            train: TrainConfig::default(),
            enrich: EnrichConfig::default(),
            report: ReportConfig::default(),
            demo: DemoConfig::default(),
        }
    }
}

/// Overrides applied on top of the config file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    /// `(dotted.key, raw value)` from the environment, then from `--set`.
    pub assignments: Vec<(String, String)>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    /// Collect `TFE__SECTION__KEY=value` pairs, sorted by key.
    pub fn from_env(vars: impl Iterator<Item = (String, String)>) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = vars
            .filter_map(|(k, v)| {
                let rest = k.strip_prefix(ENV_PREFIX)?;
                Some((rest.split("__").map(str::to_lowercase).collect::<Vec<_>>().join("."), v))
            })
            .collect();
        out.sort();
        out
    }
}

/// Parse `key=value`.
pub fn parse_assignment(s: &str) -> Result<(String, String), ConfigError> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| bad(format!("override `{s}` is not of the form key=value")))?;
    if k.trim().is_empty() {
        return Err(bad(format!("override `{s}` has an empty key")));
    }
    Ok((k.trim().to_string(), v.to_string()))
}

fn set_path(root: &mut Value, key: &str, raw: &str) -> Result<(), ConfigError> {
    // values that parse as JSON keep their type; anything else is a string
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    let mut node = root;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = match node {
            Value::Object(m) => m,
            Value::Null => {
                *node = Value::Object(Default::default());
                node.as_object_mut().expect("just made an object")
            }
            _ => return Err(bad(format!("cannot set `{key}`: `{}` is not a section", parts[..i].join(".")))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        node = obj.entry(part.to_string()).or_insert(Value::Null);
    }
    Ok(())
}

impl RunConfig {
    /// Load `file` (or defaults), apply overrides and validate.
    pub fn resolve(file: Option<&Path>, overrides: &Overrides) -> Result<Self, ConfigError> {
        let mut doc = serde_json::to_value(RunConfig::default()).expect("default config serializes");
        if let Some(path) = file {
            let text = std::fs::read_to_string(path)
                .map_err(|e| bad(format!("config file {}: {e}", path.display())))?;
            let user: Value =
                serde_json::from_str(&text).map_err(|e| bad(format!("config file {}: {e}", path.display())))?;
            merge(&mut doc, user);
        }
        for (k, v) in &overrides.assignments {
            set_path(&mut doc, k, v)?;
        }
        if let Some(seed) = overrides.seed {
            doc["seed"] = Value::from(seed);
        }
        if let Some(out) = &overrides.out {
            doc["out"] = Value::from(out.to_string_lossy().into_owned());
        }
        let mut cfg: RunConfig = serde_json::from_value(doc).map_err(|e| bad(format!("config: {e}")))?;
        cfg.fan_out_seeds();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Every stage seed is derived from the root seed.
    fn fan_out_seeds(&mut self) {
        self.lda.seed = derive_seed(self.seed, "lda");
        self.infer.seed = derive_seed(self.seed, "infer");
        self.train.sgd.seed = derive_seed(self.seed, "sgd");
        self.demo.seed = derive_seed(self.seed, "synth");
    }

    pub fn cv_seed(&self) -> u64 {
        derive_seed(self.seed, "cv")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (key, path) in self.paths.entries() {
            if let Some(p) = path {
                if !p.is_file() {
                    return Err(bad(format!("paths.{key}: {} does not exist or is not a file", p.display())));
                }
            }
        }
        let core = |key: &str, r: transit_feedback::Result<()>| r.map_err(|e| bad(format!("{key}: {e}")));
        core("prep", self.prep.validate())?;
        core("lda", self.lda.validate())?;
        core("train.sgd", self.train.sgd.validate())?;
        if self.vocab.min_count == 0 {
            return Err(bad("vocab.min_count must be at least 1"));
        }
        if !(self.screen.distance_threshold >= 0.0 && self.screen.distance_threshold <= 2.0) {
            return Err(bad("screen.distance_threshold must lie in [0, 2]"));
        }
        let t = self.thresholds.primary_topic(self.lda.k);
        if !(t > 1.0 / self.lda.k as f64 && t <= 1.0) {
            return Err(bad(format!("thresholds.primary_topic must lie in (1/K, 1] = ({}, 1]", 1.0 / self.lda.k as f64)));
        }
        if self.train.models.is_empty() {
            return Err(bad("train.models must name at least one model"));
        }
        if self.train.folds < 2 {
            return Err(bad("train.folds must be at least 2"));
        }
        if !(self.train.nb_smoothing > 0.0) {
            return Err(bad("train.nb_smoothing must be positive"));
        }
        if self.report.moving_average_days == 0 {
            return Err(bad("report.moving_average_days must be at least 1"));
        }
        if let (Some(s), Some(e)) = (self.report.start, self.report.end) {
            if e < s {
                return Err(bad("report.end precedes report.start"));
            }
        }
        if let Some(id) = &self.report.run_id {
            if id.is_empty() || id.contains(['/', '\\']) || id == "." || id == ".." {
                return Err(bad("report.run_id must be a plain directory name"));
            }
        }
        for (key, ep) in [
            ("enrich.topic_endpoint", &self.enrich.topic_endpoint),
            ("enrich.sentiment_endpoint", &self.enrich.sentiment_endpoint),
        ] {
            if let Some(ep) = ep {
                ep.parse::<transit_feedback::classify::BridgeEndpoint>()
                    .map_err(|e| bad(format!("{key}: {e}")))?;
            }
        }
        Ok(())
    }

    pub fn run_id(&self) -> String {
        self.report.run_id.clone().unwrap_or_else(|| format!("seed-{}", self.seed))
    }

    pub fn snapshot(&self) -> Value {
        serde_json::to_value(self).expect("config serializes")
    }
}

/// Recursively overlay `over` onto `base`; objects merge, everything else replaces.
fn merge(base: &mut Value, over: Value) {
    match (base, over) {
        (Value::Object(b), Value::Object(o)) => {
            for (k, v) in o {
                merge(b.entry(k).or_insert(Value::Null), v);
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        RunConfig::resolve(None, &Overrides::default()).unwrap();
    }

    #[test]
    fn overrides_apply_in_order() {
        let tmp = tempfile::tempdir().unwrap();
        let file = tmp.path().join("c.json");
        std::fs::write(&file, r#"{"seed": 3, "lda": {"k": 12}, "train": {"folds": 4}}"#).unwrap();
        let o = Overrides {
            assignments: vec![("lda.k".into(), "9".into()), ("report.run_id".into(), "abc".into())],
            seed: Some(11),
            out: None,
        };
        let c = RunConfig::resolve(Some(&file), &o).unwrap();
        assert_eq!(c.seed, 11);
        assert_eq!(c.lda.k, 9);
        assert_eq!(c.train.folds, 4);
        assert_eq!(c.lda.beta, 0.01);
        assert_eq!(c.run_id(), "abc");
        assert_eq!(c.lda.seed, derive_seed(11, "lda"));
        assert!((c.thresholds.primary_topic(c.lda.k) - 2.0 / 9.0).abs() < 1e-15);
    }

    #[test]
    fn default_primary_threshold_follows_k() {
        let t = Thresholds::default();
        assert_eq!(t.primary_topic(23), 0.1);
        assert_eq!(t.primary_topic(4), 0.5);
        for k in 2..40 {
            assert!(t.primary_topic(k) > 1.0 / k as f64);
        }
        assert_eq!(Thresholds { primary_topic: Some(0.3) }.primary_topic(23), 0.3);
    }

    #[test]
    fn env_keys_map_to_dotted_paths() {
        let vars = vec![
            ("TFE__LDA__K".to_string(), "7".to_string()),
            ("HOME".to_string(), "/x".to_string()),
            ("TFE__PATHS__CORPUS".to_string(), "a.csv".to_string()),
        ];
        assert_eq!(
            Overrides::from_env(vars.into_iter()),
            vec![("lda.k".to_string(), "7".to_string()), ("paths.corpus".to_string(), "a.csv".to_string())]
        );
    }

    #[test]
    fn missing_file_names_the_key() {
        let o = Overrides {
            assignments: vec![("paths.corpus".into(), "/nonexistent/x.csv".into())],
            ..Overrides::default()
        };
        let e = RunConfig::resolve(None, &o).unwrap_err();
        assert!(e.0.contains("paths.corpus"), "{e}");
        assert!(RunConfig::default().paths.require("ridership").unwrap_err().0.contains("paths.ridership"));
    }

    #[test]
    fn unknown_keys_and_bad_values_are_rejected() {
        let o = Overrides {
            assignments: vec![("paths.corpsu".into(), "x".into())],
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(None, &o).is_err());
        let o = Overrides {
            assignments: vec![("thresholds.primary_topic".into(), "0.01".into())],
            ..Overrides::default()
        };
        assert!(RunConfig::resolve(None, &o).unwrap_err().0.contains("thresholds.primary_topic"));
    }

    #[test]
    fn rate_view_names() {
        assert_eq!(RateView::new(GroupBy::Route, Some(TopicLabel::Operations)).name(), "operations_delays_procedures_by_route");
        assert_eq!(RateView::new(GroupBy::All, None).name(), "by_all");
    }
}
