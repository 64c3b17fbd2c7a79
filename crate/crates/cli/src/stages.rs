//! One function per subcommand. Stages exchange files under the output
//! directory, `<out>/<stage>/`, and each writes a manifest there.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use transit_feedback::classify::{kfold_cv, ClassifierHandle, CvReport, ModelKind};
use transit_feedback::corpus::demo::generate_demo;
use transit_feedback::corpus::{
    parse_feedback_csv, parse_tweets_jsonl, read_records_jsonl, write_feedback_csv, write_records_jsonl, AssetCatalog,
    CategoryVocabulary, Channel, FeedbackRecord, NameGenderTable, RidershipSeries, TopicLabel,
};
use transit_feedback::enrich::{
    enrich_pipeline, read_enriched_jsonl, write_enriched_csv, write_enriched_jsonl, EnrichedRecord, Lexicon, Providers,
    SentimentProvider, TopicModel,
};
use transit_feedback::eval::{metrics, report_table};
use transit_feedback::features::{group_centroids, FeatureVector, TfidfVectorizer};
use transit_feedback::report::{
    aggregate, complaints_per_million, daily_rates, emit, moving_average, Artifact, ArtifactFormat, ColumnDim,
    DateWindow, Manifest, RateTable, RunDir, SeriesSet,
};
use transit_feedback::textprep::{build_vocabulary, count_terms, Preprocessor, TermList};
use transit_feedback::topics::{
    assign_primary_topic, build_training_set, cluster_centroids, default_holdouts, fit_lda, holdout_manual_topics,
    suggest_condensation, top_ratios, topic_category_ratios, LabeledRecord, TopicCondensation,
};

use crate::config::{slug, ConfigError, RunConfig};

pub const SYNTH: &str = "synth";
pub const INGEST: &str = "ingest";
pub const SCREEN: &str = "screen-k";
pub const DERIVE: &str = "derive-topics";
pub const CONDENSE: &str = "condense";
pub const FEATURES: &str = "build-features";
pub const TRAIN: &str = "train";
pub const EVALUATE: &str = "evaluate";
pub const CLASSIFY: &str = "classify";
pub const ENRICH: &str = "enrich";
pub const REPORT: &str = "report";

/// Stage order of the full pipeline.
pub const PIPELINE: [&str; 11] = [SYNTH, INGEST, SCREEN, DERIVE, CONDENSE, FEATURES, TRAIN, EVALUATE, CLASSIFY, ENRICH, REPORT];

const TOP_WORDS: usize = 10;

/// Bookkeeping for one stage: its directory, manifest and clock.
struct StageRun {
    dir: PathBuf,
    manifest: Manifest,
    started: Instant,
}

impl StageRun {
    fn begin(cfg: &RunConfig, command: &str, dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            manifest: Manifest::new(&cfg.run_id(), command, cfg.seed, cfg.snapshot()),
            dir,
            started: Instant::now(),
        })
    }

    fn input(&mut self, name: &str, path: &Path) -> Result<()> {
        Ok(self.manifest.add_input(name, path)?)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn artifact(&mut self, path: &Path) -> Result<()> {
        Ok(self.manifest.add_artifact(&self.dir, path)?)
    }

    fn write(&mut self, name: &str, body: &str) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, body).with_context(|| format!("writing {}", p.display()))?;
        self.artifact(&p)?;
        Ok(p)
    }

    fn metric(&mut self, key: &str, value: f64) {
        self.manifest.metrics.insert(key.to_string(), value);
    }

    fn time<T>(&mut self, label: &str, f: impl FnOnce() -> T) -> T {
        let t = Instant::now();
        let out = f();
        self.manifest.timings_ms.insert(label.to_string(), t.elapsed().as_secs_f64() * 1e3);
        out
    }

    fn finish(mut self) -> Result<Manifest> {
        let total = self.started.elapsed().as_secs_f64() * 1e3;
        self.manifest.timings_ms.insert("total".into(), total);
        self.manifest.write(&self.dir)?;
        Ok(self.manifest)
    }
}

fn stage_dir(cfg: &RunConfig, stage: &str) -> PathBuf {
    cfg.out.join(stage)
}

/// A file an earlier stage should have produced.
fn upstream(cfg: &RunConfig, stage: &str, name: &str) -> Result<PathBuf> {
    let p = stage_dir(cfg, stage).join(name);
    if !p.is_file() {
        return Err(ConfigError(format!("{} not found; run `{stage}` first with the same --out", p.display())).into());
    }
    Ok(p)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let file = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(file);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

fn read_jsonl<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(n, l)| {
            serde_json::from_str(l)
                .map_err(|e| ConfigError(format!("{}:{}: {e}", path.display(), n + 1)).into())
        })
        .collect()
}

fn csv_body(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(&r)?;
    }
    Ok(String::from_utf8(w.into_inner().map_err(|e| e.into_error())?)?)
}

fn categories(cfg: &RunConfig) -> Result<CategoryVocabulary> {
    Ok(match &cfg.paths.categories {
        Some(p) => CategoryVocabulary::load(p)?,
        None => CategoryVocabulary::bundled(),
    })
}

fn preprocessor(cfg: &RunConfig, run: &mut StageRun) -> Result<Preprocessor> {
    let stopwords = match &cfg.paths.stopwords {
        Some(p) => {
            run.input("stopwords", p)?;
            TermList::load(p)?
        }
        None => TermList::english_stopwords(),
    };
    let agency = match &cfg.paths.agency_terms {
        Some(p) => {
            run.input("agency_terms", p)?;
            TermList::load(p)?
        }
        None => TermList::empty(),
    };
    Ok(Preprocessor::new(cfg.prep.clone(), stopwords, agency)?)
}

fn label_code(label: TopicLabel) -> Result<usize> {
    label
        .code()
        .ok_or_else(|| ConfigError("training records cannot be Unassigned".into()).into())
}

// ---------------------------------------------------------------- synth

#[derive(Serialize)]
struct TweetLine<'a> {
    id: &'a str,
    text: &'a str,
    created_at: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    user_name: Option<&'a str>,
}

/// File names written by `synth`, relative to its directory.
pub mod synth_files {
    pub const CORPUS: &str = "corpus.csv";
    pub const TWEETS: &str = "tweets.jsonl";
    pub const ASSETS: &str = "assets.json";
    pub const RIDERSHIP: &str = "ridership.json";
    pub const NAMES: &str = "names.json";
    pub const AGENCY_TERMS: &str = "agency_terms.txt";
    pub const REFERENCE: &str = "reference_labels.csv";
}

pub fn synth(cfg: &RunConfig) -> Result<Manifest> {
    use synth_files::*;
    let mut run = StageRun::begin(cfg, SYNTH, stage_dir(cfg, SYNTH))?;
    let bundle = run.time("generate", || generate_demo(&cfg.demo))?;
    let (crm, tweets): (Vec<&FeedbackRecord>, Vec<&FeedbackRecord>) =
        bundle.records.iter().partition(|r| r.channel != Channel::Twitter);

    let p = run.path(CORPUS);
    write_feedback_csv(&p, &crm.iter().map(|r| (*r).clone()).collect::<Vec<_>>())?;
    run.artifact(&p)?;
    let lines: Vec<TweetLine> = tweets
        .iter()
        .map(|r| TweetLine {
            id: &r.id,
            text: &r.text,
            created_at: r.timestamp.to_rfc3339(),
            user_name: r.author.as_deref(),
        })
        .collect();
    let p = run.path(TWEETS);
    write_jsonl(&p, &lines)?;
    run.artifact(&p)?;
    run.write(ASSETS, &serde_json::to_string_pretty(&bundle.catalog)?)?;
    run.write(RIDERSHIP, &bundle.ridership.to_json()?)?;
    run.write(NAMES, &bundle.names.to_json()?)?;
    run.write(AGENCY_TERMS, "# agency names removed before topic modeling\nwmata\n")?;
    let reference = csv_body(
        &["id", "label"],
        bundle
            .records
            .iter()
            .zip(&bundle.truth)
            .map(|(r, t)| vec![r.id.clone(), t.name().to_string()]),
    )?;
    run.write(REFERENCE, &reference)?;

    run.metric("records", bundle.records.len() as f64);
    run.metric("crm_records", crm.len() as f64);
    run.metric("twitter_records", tweets.len() as f64);
    run.finish()
}

/// Point `paths` at the files `synth` wrote, keeping any already set.
pub fn adopt_synth_paths(cfg: &mut RunConfig) {
    use synth_files::*;
    let dir = stage_dir(cfg, SYNTH);
    let p = &mut cfg.paths;
    for (slot, name) in [
        (&mut p.corpus, CORPUS),
        (&mut p.tweets, TWEETS),
        (&mut p.assets, ASSETS),
        (&mut p.ridership, RIDERSHIP),
        (&mut p.names, NAMES),
        (&mut p.agency_terms, AGENCY_TERMS),
        (&mut p.reference_labels, REFERENCE),
    ] {
        slot.get_or_insert_with(|| dir.join(name));
    }
}

// ---------------------------------------------------------------- ingest

pub const RECORDS: &str = "records.jsonl";

pub fn ingest(cfg: &RunConfig) -> Result<Manifest> {
    if cfg.paths.corpus.is_none() && cfg.paths.tweets.is_none() {
        cfg.paths.require("corpus")?;
    }
    let mut run = StageRun::begin(cfg, INGEST, stage_dir(cfg, INGEST))?;
    let mut records = Vec::new();
    let mut rejects = Vec::new();
    let mut filtered = 0;
    if let Some(p) = &cfg.paths.corpus {
        run.input("corpus", p)?;
        let cats = if cfg.ingest.check_categories { Some(categories(cfg)?) } else { None };
        let parsed = run.time("parse_corpus", || parse_feedback_csv(p, &cfg.ingest.schema, cats.as_ref()))?;
        rejects.extend(parsed.rejects.into_iter().map(|r| ("corpus", r)));
        filtered += parsed.filtered;
        records.extend(parsed.records);
    }
    if let Some(p) = &cfg.paths.tweets {
        run.input("tweets", p)?;
        let handles: Vec<&str> = cfg.ingest.handles.iter().map(String::as_str).collect();
        let parsed = run.time("parse_tweets", || parse_tweets_jsonl(p, &handles))?;
        rejects.extend(parsed.rejects.into_iter().map(|r| ("tweets", r)));
        filtered += parsed.filtered;
        records.extend(parsed.records);
    }
    let mut seen = HashSet::new();
    if let Some(r) = records.iter().find(|r| !seen.insert(r.id.as_str())) {
        return Err(ConfigError(format!("record id {} occurs more than once across the inputs", r.id)).into());
    }

    let p = run.path(RECORDS);
    write_records_jsonl(&p, &records)?;
    run.artifact(&p)?;
    let body = csv_body(
        &["source", "row", "reason"],
        rejects.iter().map(|(s, r)| vec![s.to_string(), r.row.to_string(), r.reason.clone()]),
    )?;
    run.write("rejects.csv", &body)?;

    run.metric("records", records.len() as f64);
    run.metric("rejects", rejects.len() as f64);
    run.metric("filtered", filtered as f64);
    for ch in [Channel::Crm, Channel::Twitter, Channel::Survey, Channel::Other] {
        let n = records.iter().filter(|r| r.channel == ch).count();
        if n > 0 {
            run.metric(&format!("records.{}", ch.as_str().to_lowercase()), n as f64);
        }
    }
    run.finish()
}

fn ingested(cfg: &RunConfig, run: &mut StageRun) -> Result<Vec<FeedbackRecord>> {
    let p = upstream(cfg, INGEST, RECORDS)?;
    run.input("records", &p)?;
    Ok(read_records_jsonl(&p)?)
}

// ---------------------------------------------------------------- screen-k

#[derive(Serialize)]
struct ScreenReport {
    linkage: transit_feedback::topics::Linkage,
    distance_threshold: f64,
    suggested_k: usize,
    clusters: Vec<Vec<String>>,
}

pub fn screen_k(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = StageRun::begin(cfg, SCREEN, stage_dir(cfg, SCREEN))?;
    let prep = preprocessor(cfg, &mut run)?;
    let records = ingested(cfg, &mut run)?;
    let with_cat: Vec<&FeedbackRecord> = records.iter().filter(|r| r.problem_category.is_some()).collect();
    if with_cat.is_empty() {
        return Err(ConfigError("screen-k needs records with a problem category".into()).into());
    }
    let docs: Vec<Vec<String>> = with_cat.iter().map(|r| prep.terms(&r.text)).collect();
    let vocab = build_vocabulary(&docs, cfg.vocab.min_count)?;
    let tfidf = TfidfVectorizer::fit(vocab);
    let features: Vec<FeatureVector> = docs.iter().map(|d| tfidf.vectorize_terms(d)).collect();
    let groups: Vec<String> = with_cat.iter().map(|r| r.problem_category.clone().unwrap_or_default()).collect();
    let (names, centroids) = group_centroids(&features, &groups, tfidf.dim());
    let assignment = run.time("cluster", || {
        cluster_centroids(&centroids, cfg.screen.linkage, cfg.screen.distance_threshold)
    });
    let k = assignment.iter().copied().max().map_or(0, |m| m + 1);
    let mut clusters = vec![Vec::new(); k];
    for (name, c) in names.iter().zip(&assignment) {
        clusters[*c].push(name.clone());
    }
    let report = ScreenReport {
        linkage: cfg.screen.linkage,
        distance_threshold: cfg.screen.distance_threshold,
        suggested_k: k,
        clusters,
    };
    run.write("screen.json", &serde_json::to_string_pretty(&report)?)?;
    run.metric("categories", names.len() as f64);
    run.metric("suggested_k", k as f64);
    run.finish()
}

// ---------------------------------------------------------------- derive-topics

pub const LDA_MODEL: &str = "lda_model.json";
pub const HELD_OUT: &str = "held_out.jsonl";
pub const LDA_RECORDS: &str = "lda_records.jsonl";
pub const DOC_TOPICS: &str = "doc_topics.jsonl";

#[derive(Serialize, Deserialize)]
struct DocTopicLine {
    id: String,
    theta: Vec<f64>,
}

fn holdouts(cfg: &RunConfig, k: usize) -> Result<BTreeMap<String, TopicLabel>> {
    Ok(match &cfg.paths.condensation {
        Some(p) => TopicCondensation::load(p, k, &categories(cfg)?)?.holdouts().clone(),
        None => default_holdouts(),
    })
}

pub fn derive_topics(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = StageRun::begin(cfg, DERIVE, stage_dir(cfg, DERIVE))?;
    let prep = preprocessor(cfg, &mut run)?;
    let records = ingested(cfg, &mut run)?;
    let (held, rest) = holdout_manual_topics(records, &holdouts(cfg, cfg.lda.k)?);
    let docs: Vec<Vec<String>> = run.time("preprocess", || rest.iter().map(|r| prep.terms(&r.text)).collect());
    let vocab = build_vocabulary(&docs, cfg.vocab.min_count)?;
    let counts: Vec<_> = docs.iter().map(|d| count_terms(&vocab, d)).collect();
    let model = run.time("gibbs", || fit_lda(&counts, &vocab, &cfg.lda))?;

    let p = run.path(LDA_MODEL);
    model.save(&p)?;
    run.artifact(&p)?;
    let mut rows = Vec::new();
    for t in 0..model.k {
        for (rank, (term, prob)) in model.top_words(&vocab, t, TOP_WORDS)?.into_iter().enumerate() {
            rows.push(vec![t.to_string(), (rank + 1).to_string(), term, prob.to_string()]);
        }
    }
    run.write("top_words.csv", &csv_body(&["topic", "rank", "term", "probability"], rows)?)?;
    let thetas: Vec<DocTopicLine> = rest
        .iter()
        .enumerate()
        .map(|(d, r)| DocTopicLine {
            id: r.id.clone(),
            theta: model.doc_topic(d),
        })
        .collect();
    let p = run.path(HELD_OUT);
    write_jsonl(&p, &held)?;
    run.artifact(&p)?;
    let p = run.path(LDA_RECORDS);
    write_jsonl(&p, &rest)?;
    run.artifact(&p)?;
    let p = run.path(DOC_TOPICS);
    write_jsonl(&p, &thetas)?;
    run.artifact(&p)?;

    let strong = thetas
        .iter()
        .filter(|d| assign_primary_topic(&d.theta, cfg.thresholds.primary_topic(cfg.lda.k)).topic.is_some())
        .count();
    run.metric("held_out", held.len() as f64);
    run.metric("lda_docs", rest.len() as f64);
    run.metric("vocabulary", vocab.len() as f64);
    run.metric("k", model.k as f64);
    run.metric("sweeps", model.sweeps as f64);
    run.metric("log_likelihood", model.log_likelihood.last().copied().unwrap_or(f64::NAN));
    run.metric("unassigned_share", 1.0 - strong as f64 / rest.len().max(1) as f64);
    run.finish()
}

// ---------------------------------------------------------------- condense

pub const TRAINING_SET: &str = "training_set.jsonl";

fn reference_labels(path: &Path) -> Result<HashMap<String, TopicLabel>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = HashMap::new();
    for row in rdr.records() {
        let row = row?;
        let (Some(id), Some(label)) = (row.get(0), row.get(1)) else {
            return Err(ConfigError(format!("{}: rows need `id,label`", path.display())).into());
        };
        out.insert(id.to_string(), label.parse::<TopicLabel>()?);
    }
    Ok(out)
}

pub fn condense(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = StageRun::begin(cfg, CONDENSE, stage_dir(cfg, CONDENSE))?;
    let model_path = upstream(cfg, DERIVE, LDA_MODEL)?;
    let k: usize = {
        #[derive(Deserialize)]
        struct Head {
            k: usize,
        }
        serde_json::from_str::<Head>(&std::fs::read_to_string(&model_path)?)?.k
    };
    let held: Vec<LabeledRecord> = read_jsonl(&upstream(cfg, DERIVE, HELD_OUT)?)?;
    let rest: Vec<FeedbackRecord> = read_jsonl(&upstream(cfg, DERIVE, LDA_RECORDS)?)?;
    let topics: Vec<DocTopicLine> = read_jsonl(&upstream(cfg, DERIVE, DOC_TOPICS)?)?;
    for name in [HELD_OUT, LDA_RECORDS, DOC_TOPICS] {
        run.input(name, &stage_dir(cfg, DERIVE).join(name))?;
    }
    if topics.len() != rest.len() || topics.iter().zip(&rest).any(|(t, r)| t.id != r.id || t.theta.len() != k) {
        return Err(ConfigError(format!("{DOC_TOPICS} does not line up with {LDA_RECORDS}")).into());
    }
    let thetas: Vec<Vec<f64>> = topics.into_iter().map(|t| t.theta).collect();
    let threshold = cfg.thresholds.primary_topic(cfg.lda.k);

    let reference = match &cfg.paths.reference_labels {
        Some(p) => {
            run.input("reference_labels", p)?;
            Some(reference_labels(p)?)
        }
        None => None,
    };
    let condensation = match (&cfg.paths.condensation, &reference) {
        (Some(p), _) => {
            run.input("condensation", p)?;
            TopicCondensation::load(p, k, &categories(cfg)?)?
        }
        (None, Some(reference)) => {
            let primary: Vec<Option<usize>> = thetas.iter().map(|t| assign_primary_topic(t, threshold).topic).collect();
            let refs: Vec<TopicLabel> = rest
                .iter()
                .map(|r| reference.get(&r.id).copied().unwrap_or(TopicLabel::Unassigned))
                .collect();
            suggest_condensation(&primary, &refs, k, default_holdouts())?
        }
        (None, None) => {
            cfg.paths.require("condensation")?;
            unreachable!()
        }
    };
    run.write("condensation.json", &condensation.to_json()?)?;

    let set = build_training_set(held, rest, &thetas, &condensation, threshold)?;
    let p = run.path(TRAINING_SET);
    write_jsonl(&p, &set.labeled)?;
    run.artifact(&p)?;
    let p = run.path("unassigned.jsonl");
    write_jsonl(&p, &set.unassigned)?;
    run.artifact(&p)?;

    let mut per_label = BTreeMap::new();
    for r in &set.labeled {
        *per_label.entry(r.label).or_insert(0usize) += 1;
    }
    let n = set.labeled.len().max(1) as f64;
    let dist = csv_body(
        &["topic", "count", "share"],
        per_label
            .iter()
            .map(|(l, c)| vec![l.name().to_string(), c.to_string(), (*c as f64 / n).to_string()]),
    )?;
    run.write("topic_distribution.csv", &dist)?;
    let mut rows = Vec::new();
    for (label, ratios) in topic_category_ratios(&set.labeled) {
        for (rank, (cat, r)) in top_ratios(&ratios, ratios.len()).into_iter().enumerate() {
            rows.push(vec![label.name().to_string(), (rank + 1).to_string(), cat, r.to_string()]);
        }
    }
    run.write("category_ratios.csv", &csv_body(&["topic", "rank", "category", "ratio"], rows)?)?;

    run.metric("labeled", set.labeled.len() as f64);
    run.metric("held_out", set.held_out as f64);
    run.metric("lda_assigned", set.lda_assigned as f64);
    run.metric("unassigned", set.unassigned.len() as f64);
    for (l, c) in &per_label {
        run.metric(&format!("count.{}", slug(l.name())), *c as f64);
    }
    if let Some(reference) = &reference {
        let judged: Vec<bool> = set
            .labeled
            .iter()
            .filter_map(|r| reference.get(&r.record.id).map(|t| *t == r.label))
            .collect();
        if !judged.is_empty() {
            let agree = judged.iter().filter(|b| **b).count() as f64 / judged.len() as f64;
            run.metric("reference_agreement", agree);
        }
    }
    run.finish()
}

// ---------------------------------------------------------------- build-features

pub const VECTORIZER: &str = "vectorizer.json";
pub const FEATURE_FILE: &str = "features.jsonl";

#[derive(Serialize, Deserialize)]
struct FeatureLine {
    id: String,
    label: TopicLabel,
    features: FeatureVector,
}

pub fn build_features(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = StageRun::begin(cfg, FEATURES, stage_dir(cfg, FEATURES))?;
    let prep = preprocessor(cfg, &mut run)?;
    let p = upstream(cfg, CONDENSE, TRAINING_SET)?;
    run.input("training_set", &p)?;
    let labeled: Vec<LabeledRecord> = read_jsonl(&p)?;
    let docs: Vec<Vec<String>> = run.time("preprocess", || labeled.iter().map(|r| prep.terms(&r.record.text)).collect());
    let vocab = build_vocabulary(&docs, cfg.vocab.min_count)?;
    let tfidf = TfidfVectorizer::fit(vocab);
    let counts: Vec<_> = docs.iter().map(|d| count_terms(tfidf.vocabulary(), d)).collect();
    let features = run.time("vectorize", || tfidf.vectorize_all(&counts));

    let p = run.path(VECTORIZER);
    tfidf.save(&p)?;
    run.artifact(&p)?;
    let lines: Vec<FeatureLine> = labeled
        .iter()
        .zip(features)
        .map(|(r, f)| FeatureLine {
            id: r.record.id.clone(),
            label: r.label,
            features: f,
        })
        .collect();
    let p = run.path(FEATURE_FILE);
    write_jsonl(&p, &lines)?;
    run.artifact(&p)?;

    run.metric("documents", lines.len() as f64);
    run.metric("dimension", tfidf.dim() as f64);
    run.metric("empty_vectors", lines.iter().filter(|l| l.features.is_empty()).count() as f64);
    run.finish()
}

// ---------------------------------------------------------------- train

pub const MODEL: &str = "model.json";

fn cv_file(kind: ModelKind) -> String {
    format!("cv_{kind}.json")
}

pub fn train(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = StageRun::begin(cfg, TRAIN, stage_dir(cfg, TRAIN))?;
    let vp = upstream(cfg, FEATURES, VECTORIZER)?;
    let fp = upstream(cfg, FEATURES, FEATURE_FILE)?;
    run.input("vectorizer", &vp)?;
    run.input("features", &fp)?;
    let tfidf = TfidfVectorizer::load(&vp)?;
    let lines: Vec<FeatureLine> = read_jsonl(&fp)?;
    let ys: Vec<usize> = lines.iter().map(|l| label_code(l.label)).collect::<Result<_>>()?;
    let xs: Vec<FeatureVector> = lines.into_iter().map(|l| l.features).collect();
    let names = TopicLabel::names();

    let mut best: Option<(ModelKind, f64)> = None;
    for kind in &cfg.train.models {
        let spec = cfg.train.spec(*kind);
        let cv = run.time(&format!("cv.{kind}"), || {
            kfold_cv(&xs, &ys, &names, tfidf.dim(), cfg.train.folds, cfg.cv_seed(), &spec)
        })?;
        run.write(&cv_file(*kind), &serde_json::to_string_pretty(&cv)?)?;
        run.metric(&format!("{kind}.mean_accuracy"), cv.mean_accuracy);
        run.metric(&format!("{kind}.std_accuracy"), cv.std_accuracy);
        run.metric(&format!("{kind}.macro_f1"), cv.report.macro_avg.f1);
        if best.is_none_or(|(_, acc)| cv.mean_accuracy > acc) {
            best = Some((*kind, cv.mean_accuracy));
        }
    }
    let (kind, _) = best.expect("at least one model is configured");
    let model = run.time("fit_selected", || cfg.train.spec(kind).train(&xs, &ys, names.len(), tfidf.dim()))?;
    let handle = ClassifierHandle::local(names, &tfidf, model)?;
    let p = run.path(MODEL);
    handle.save(&p)?;
    run.artifact(&p)?;
    run.write("selection.json", &serde_json::to_string_pretty(&serde_json::json!({ "selected": kind }))?)?;
    run.metric("selected_model_index", cfg.train.models.iter().position(|k| *k == kind).unwrap_or(0) as f64);
    run.finish()
}

// ---------------------------------------------------------------- evaluate

pub fn evaluate(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = StageRun::begin(cfg, EVALUATE, stage_dir(cfg, EVALUATE))?;
    let mut reports = Vec::new();
    for kind in &cfg.train.models {
        let p = upstream(cfg, TRAIN, &cv_file(*kind))?;
        run.input(&cv_file(*kind), &p)?;
        let cv: CvReport = serde_json::from_str(&std::fs::read_to_string(&p)?)?;
        reports.push((*kind, cv));
    }
    let named: Vec<(String, transit_feedback::eval::MetricReport)> = reports
        .iter()
        .map(|(k, cv)| Ok((k.to_string(), metrics(&cv.pooled)?)))
        .collect::<Result<_>>()?;
    let refs: Vec<(&str, &transit_feedback::eval::MetricReport)> = named.iter().map(|(k, m)| (k.as_str(), m)).collect();
    let table = report_table(&refs)?;
    run.write("metrics.csv", &table.to_csv()?)?;
    run.write("metrics.txt", &table.to_text())?;
    let folds = csv_body(
        &["model", "fold", "accuracy", "train_size", "validation_size"],
        reports.iter().flat_map(|(k, cv)| {
            cv.folds.iter().map(move |f| {
                vec![
                    k.to_string(),
                    f.fold.to_string(),
                    f.accuracy.to_string(),
                    f.train_size.to_string(),
                    f.validation_size.to_string(),
                ]
            })
        }),
    )?;
    run.write("fold_accuracy.csv", &folds)?;
    for (kind, cv) in &reports {
        for format in [ArtifactFormat::Csv, ArtifactFormat::Json, ArtifactFormat::Svg] {
            let p = run.path(&format!("confusion_{kind}.{}", format.extension()));
            emit(&cv.pooled, format, &p)?;
            run.artifact(&p)?;
        }
    }
    for (k, m) in &named {
        run.metric(&format!("{k}.accuracy"), m.accuracy);
        run.metric(&format!("{k}.macro_precision"), m.macro_avg.precision);
        run.metric(&format!("{k}.macro_recall"), m.macro_avg.recall);
        run.metric(&format!("{k}.macro_f1"), m.macro_avg.f1);
        run.metric(&format!("{k}.weighted_f1"), m.weighted_avg.f1);
    }
    run.finish()
}

// ---------------------------------------------------------------- classify / enrich

fn topic_model(cfg: &RunConfig, run: &mut StageRun) -> Result<TopicModel> {
    let prep = preprocessor(cfg, run)?;
    if let Some(ep) = &cfg.enrich.topic_endpoint {
        return Ok(TopicModel {
            handle: ClassifierHandle::bridge(TopicLabel::names(), ep, cfg.enrich.bridge),
            vectorizer: None,
            prep,
        });
    }
    let mp = upstream(cfg, TRAIN, MODEL)?;
    let vp = upstream(cfg, FEATURES, VECTORIZER)?;
    run.input("model", &mp)?;
    run.input("vectorizer", &vp)?;
    Ok(TopicModel {
        handle: ClassifierHandle::load(&mp)?,
        vectorizer: Some(TfidfVectorizer::load(&vp)?),
        prep,
    })
}

pub fn classify(cfg: &RunConfig) -> Result<Manifest> {
    let mut run = StageRun::begin(cfg, CLASSIFY, stage_dir(cfg, CLASSIFY))?;
    let model = topic_model(cfg, &mut run)?;
    model.validate()?;
    let records = ingested(cfg, &mut run)?;
    let texts: Vec<String> = records.iter().map(|r| r.text.clone()).collect();
    let predictions = run.time("predict", || model.predict(&texts))?;
    let mut counts: BTreeMap<TopicLabel, usize> = BTreeMap::new();
    let mut failed = 0;
    let rows: Vec<Vec<String>> = records
        .iter()
        .zip(&predictions)
        .map(|(r, p)| match p {
            Ok((label, scores)) => {
                *counts.entry(*label).or_default() += 1;
                let top = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                vec![r.id.clone(), label.name().to_string(), top.to_string(), String::new()]
            }
            Err(e) => {
                failed += 1;
                vec![r.id.clone(), TopicLabel::Unassigned.name().to_string(), String::new(), e.clone()]
            }
        })
        .collect();
    run.write("predictions.csv", &csv_body(&["id", "topic", "score", "error"], rows)?)?;
    run.metric("records", records.len() as f64);
    run.metric("failed", failed as f64);
    for (l, c) in counts {
        run.metric(&format!("count.{}", slug(l.name())), c as f64);
    }
    run.finish()
}

pub const ENRICHED: &str = "enriched.jsonl";

pub fn enrich(cfg: &RunConfig) -> Result<Manifest> {
    let assets = cfg.paths.require("assets")?.to_path_buf();
    let mut run = StageRun::begin(cfg, ENRICH, stage_dir(cfg, ENRICH))?;
    let model = topic_model(cfg, &mut run)?;
    let records = ingested(cfg, &mut run)?;
    run.input("assets", &assets)?;
    let catalog = AssetCatalog::load(&assets)?;
    let lexicon = match &cfg.paths.lexicon {
        Some(p) => {
            run.input("lexicon", p)?;
            Lexicon::load(p)?
        }
        None => Lexicon::bundled(),
    };
    let sentiment = match &cfg.enrich.sentiment_endpoint {
        Some(ep) => SentimentProvider::Bridge {
            endpoint: ep.clone(),
            config: cfg.enrich.bridge,
            fallback: cfg.enrich.sentiment_fallback.then_some(lexicon),
        },
        None => SentimentProvider::Lexicon(lexicon),
    };
    let names = match &cfg.paths.names {
        Some(p) => {
            run.input("names", p)?;
            Some(NameGenderTable::load(p)?)
        }
        None => None,
    };
    let providers = Providers { sentiment, names };
    let enriched = run.time("enrich", || enrich_pipeline(&records, &model, &catalog, &providers))?;

    let p = run.path(ENRICHED);
    write_enriched_jsonl(&p, &enriched)?;
    run.artifact(&p)?;
    let p = run.path("enriched.csv");
    write_enriched_csv(&p, &enriched)?;
    run.artifact(&p)?;

    let n = enriched.len().max(1) as f64;
    run.metric("records", enriched.len() as f64);
    run.metric("flagged", enriched.iter().filter(|e| !e.flags.is_empty()).count() as f64);
    run.metric("with_assets_share", enriched.iter().filter(|e| !e.assets.is_empty()).count() as f64 / n);
    for e in [ColumnDim::Sentiment, ColumnDim::Mode] {
        let table = aggregate(&enriched, e);
        for (c, v) in table.columns.iter().zip(&table.totals.counts) {
            run.metric(&format!("count.{}", c.to_lowercase()), *v as f64);
        }
    }
    run.finish()
}

// ---------------------------------------------------------------- report

fn emit_all(
    run: &mut StageRun,
    dir: &RunDir,
    sub: &Path,
    name: &str,
    artifact: &dyn Artifact,
    formats: &[ArtifactFormat],
) -> Result<()> {
    for f in formats {
        let base = if *f == ArtifactFormat::Svg { dir.figures() } else { sub.to_path_buf() };
        let p = base.join(format!("{name}.{}", f.extension()));
        emit(artifact, *f, &p)?;
        run.artifact(&p)?;
    }
    Ok(())
}

pub fn report(cfg: &RunConfig) -> Result<Manifest> {
    let ridership_path = cfg.paths.require("ridership")?.to_path_buf();
    let dir = RunDir::create(&cfg.out.join("reports"), &cfg.run_id())?;
    let mut run = StageRun::begin(cfg, REPORT, dir.root.clone())?;
    let ep = upstream(cfg, ENRICH, ENRICHED)?;
    run.input("enriched", &ep)?;
    run.input("ridership", &ridership_path)?;
    let records = read_enriched_jsonl(&ep)?;
    let ridership = RidershipSeries::load(&ridership_path)?;
    let rc = &cfg.report;
    let formats = &rc.formats;

    let mut by_channel: Vec<(String, Vec<EnrichedRecord>)> = vec![("all".into(), records.clone())];
    for ch in [Channel::Crm, Channel::Twitter] {
        let subset: Vec<EnrichedRecord> = records.iter().filter(|r| r.record.channel == ch).cloned().collect();
        if !subset.is_empty() {
            by_channel.push((ch.as_str().to_lowercase(), subset));
        }
    }
    for (channel, subset) in &by_channel {
        for (dim, dim_name) in [(ColumnDim::Sentiment, "sentiment"), (ColumnDim::Mode, "mode")] {
            let table = aggregate(subset, dim);
            emit_all(&mut run, &dir, &dir.tables(), &format!("topic_by_{dim_name}_{channel}"), &table, formats)?;
        }
    }

    let dates = records.iter().map(|r| r.record.timestamp.date_naive());
    let (lo, hi) = match (rc.start.or_else(|| dates.clone().min()), rc.end.or_else(|| dates.max())) {
        (Some(lo), Some(hi)) => (lo, hi),
        _ => return Err(ConfigError("no enriched records and no report window configured".into()).into()),
    };
    let window = DateWindow::new(lo, hi)?;
    let in_topic = |topic: Option<TopicLabel>| -> Vec<EnrichedRecord> {
        records.iter().filter(|r| topic.is_none_or(|t| r.topic == t)).cloned().collect()
    };
    for view in &rc.rates {
        let rates = complaints_per_million(&in_topic(view.topic), &ridership, &window, view.group_by, rc.group_ridership)?;
        for r in &rates {
            if let Some(v) = r.rate {
                run.metric(&format!("rate.{}.{}", view.name(), slug(&r.group)), v);
            }
        }
        let table = RateTable {
            group_by: view.group_by,
            window,
            rates,
        };
        emit_all(&mut run, &dir, &dir.tables(), &format!("rates_{}", view.name()), &table, formats)?;
    }
    for view in &rc.series {
        let daily = daily_rates(&in_topic(view.topic), &ridership, &window, view.group_by, rc.group_ridership)?;
        let smoothed = daily
            .iter()
            .map(|s| moving_average(s, rc.moving_average_days, rc.min_periods))
            .collect::<transit_feedback::Result<Vec<_>>>()?;
        let title = match view.topic {
            Some(t) => format!("{t} complaints per million riders"),
            None => "Complaints per million riders".to_string(),
        };
        for s in &smoothed {
            if let Some((_, v)) = s.points.last() {
                run.metric(&format!("ma.{}.{}", view.name(), slug(&s.group)), *v);
            }
        }
        let daily = SeriesSet {
            title: format!("{title}, daily"),
            series: daily,
        };
        let smoothed = SeriesSet {
            title: format!("{title}, {}-day moving average", rc.moving_average_days),
            series: smoothed,
        };
        emit_all(&mut run, &dir, &dir.series(), &format!("daily_{}", view.name()), &daily, formats)?;
        emit_all(&mut run, &dir, &dir.series(), &format!("ma{}_{}", rc.moving_average_days, view.name()), &smoothed, formats)?;
    }
    run.metric("records", records.len() as f64);
    run.metric("window_days", window.days().count() as f64);
    run.finish()
}

// ---------------------------------------------------------------- dispatch

pub fn run_stage(cfg: &RunConfig, stage: &str) -> Result<Manifest> {
    match stage {
        SYNTH => synth(cfg),
        INGEST => ingest(cfg),
        SCREEN => screen_k(cfg),
        DERIVE => derive_topics(cfg),
        CONDENSE => condense(cfg),
        FEATURES => build_features(cfg),
        TRAIN => train(cfg),
        EVALUATE => evaluate(cfg),
        CLASSIFY => classify(cfg),
        ENRICH => enrich(cfg),
        REPORT => report(cfg),
        other => Err(ConfigError(format!("unknown stage `{other}`")).into()),
    }
}

/// Synthesize a corpus and run every stage on it. The combined manifest at
/// `<out>/manifest.json` prefixes each stage's metrics with its name.
pub fn demo(cfg: &RunConfig) -> Result<Manifest> {
    let started = Instant::now();
    let mut combined = Manifest::new(&cfg.run_id(), "demo", cfg.seed, cfg.snapshot());
    let mut cfg = cfg.clone();
    for stage in PIPELINE {
        if stage == INGEST {
            adopt_synth_paths(&mut cfg);
            cfg.validate()?;
            combined.config = cfg.snapshot();
        }
        let m = run_stage(&cfg, stage).with_context(|| format!("stage {stage}"))?;
        let stage_root = if stage == REPORT {
            Path::new("reports").join(cfg.run_id())
        } else {
            PathBuf::from(stage)
        };
        for (k, v) in m.metrics {
            combined.metrics.insert(format!("{stage}.{k}"), v);
        }
        if let Some(t) = m.timings_ms.get("total") {
            combined.timings_ms.insert(stage.to_string(), *t);
        }
        for a in m.artifacts {
            let path = format!("{}/{}", stage_root.to_string_lossy().replace('\\', "/"), a.path);
            combined.artifacts.push(transit_feedback::report::ArtifactEntry { path, ..a });
        }
        println!("{stage:>15}  done");
    }
    combined.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
    combined.timings_ms.insert("total".into(), started.elapsed().as_secs_f64() * 1e3);
    std::fs::create_dir_all(&cfg.out)?;
    combined.write(&cfg.out)?;
    Ok(combined)
}
